#pragma once

#include "koa/grid.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace koa {

std::vector<uint8_t> read_file_bytes(const std::string& path);
std::string read_file_text(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t size);
void write_file_text(const std::string& path, const std::string& text);

/// Binary PGM (P5), 8-bit or 16-bit big-endian samples per the format.
struct PgmImage {
    PixelGrid pixels;
    int max_value = 255;
};

PgmImage decode_pgm(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_pgm(const PixelGrid& pixels, int max_value);

/// 24-bit binary PPM (P6) writer for overlay renders.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb; // 3 bytes per pixel, row-major

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0) {}

    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        if (x < 0 || x >= width || y < 0 || y >= height)
            return;
        size_t i = (static_cast<size_t>(y) * width + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
};

std::vector<uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(const std::vector<uint8_t>& bytes);

std::string base64_encode(const uint8_t* data, size_t size);
std::vector<uint8_t> base64_decode(const std::string& text);

/// FNV-1a 64-bit content hash; used for model fingerprints and config hashes.
class Fnv1a64 {
public:
    Fnv1a64& update(const void* data, size_t size);
    Fnv1a64& update(const std::string& text) { return update(text.data(), text.size()); }
    Fnv1a64& update(double value);
    Fnv1a64& update(uint64_t value);
    uint64_t digest() const noexcept { return state_; }
    std::string hex() const;

private:
    uint64_t state_ = 0xcbf29ce484222325ull;
};

/// Splits one CSV line on commas; no quoting, fields trimmed of spaces.
std::vector<std::string> split_csv_line(const std::string& line);
std::vector<std::string> split_lines(const std::string& text);

/// Line-oriented child process: one request line in, one response line out.
/// Used by the external-process classifier and segmenter adapters.
class LineProcess {
public:
    explicit LineProcess(const std::string& command);
    ~LineProcess();

    LineProcess(const LineProcess&) = delete;
    LineProcess& operator=(const LineProcess&) = delete;

    /// Writes `request` plus a newline, reads one response line (newline
    /// stripped). Throws ErrorCode::backend on a dead or silent child.
    std::string round_trip(const std::string& request);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace koa
