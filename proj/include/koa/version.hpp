#pragma once

namespace koa {

inline constexpr const char* kVersion = "0.1.0";

} // namespace koa
