#include "koa/io.hpp"

#include "koa/error.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace koa {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    require(!in.bad(), ErrorCode::io, "read failed for " + path);
    return bytes;
}

std::string read_file_text(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_file_bytes(const std::string& path, const void* data, size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::io, "cannot write " + path);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    out.flush();
    require(out.good(), ErrorCode::io, "write failed for " + path);
}

void write_file_text(const std::string& path, const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

namespace {

// Skips whitespace and whole-line comments in a PGM header.
void skip_pgm_separators(const std::vector<uint8_t>& bytes, size_t& pos) {
    while (pos < bytes.size()) {
        uint8_t c = bytes[pos];
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n')
                ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
}

int read_pgm_int(const std::vector<uint8_t>& bytes, size_t& pos) {
    skip_pgm_separators(bytes, pos);
    require(pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9',
            ErrorCode::parse, "malformed PGM header");
    long value = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
        value = value * 10 + (bytes[pos] - '0');
        require(value <= 1 << 30, ErrorCode::parse, "PGM header value out of range");
        ++pos;
    }
    return static_cast<int>(value);
}

} // namespace

PgmImage decode_pgm(const std::vector<uint8_t>& bytes) {
    require(bytes.size() > 2 && bytes[0] == 'P' && bytes[1] == '5', ErrorCode::parse,
            "not a binary PGM (P5) stream");
    size_t pos = 2;
    int width = read_pgm_int(bytes, pos);
    int height = read_pgm_int(bytes, pos);
    int max_value = read_pgm_int(bytes, pos);
    require(width > 0 && height > 0, ErrorCode::parse, "PGM dimensions must be positive");
    require(max_value > 0 && max_value < 65536, ErrorCode::parse,
            "PGM max value out of range");
    require(pos < bytes.size(), ErrorCode::parse, "PGM truncated before pixel data");
    ++pos; // single separator byte after maxval

    PgmImage img;
    img.max_value = max_value;
    img.pixels = PixelGrid(width, height);
    size_t count = static_cast<size_t>(width) * height;
    int bytes_per_sample = max_value > 255 ? 2 : 1;
    require(bytes.size() - pos >= count * bytes_per_sample, ErrorCode::parse,
            "PGM pixel data truncated");
    for (size_t i = 0; i < count; ++i) {
        uint16_t v;
        if (bytes_per_sample == 2) {
            v = static_cast<uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
        } else {
            v = bytes[pos + i];
        }
        img.pixels.data()[i] = v;
    }
    return img;
}

std::vector<uint8_t> encode_pgm(const PixelGrid& pixels, int max_value) {
    require(max_value > 0 && max_value < 65536, ErrorCode::invalid_argument,
            "PGM max value out of range");
    std::ostringstream header;
    header << "P5\n" << pixels.width() << " " << pixels.height() << "\n" << max_value << "\n";
    std::string h = header.str();
    std::vector<uint8_t> out(h.begin(), h.end());
    out.reserve(out.size() + pixels.size() * (max_value > 255 ? 2 : 1));
    for (uint16_t v : pixels.data()) {
        if (max_value > 255) {
            out.push_back(static_cast<uint8_t>(v >> 8));
            out.push_back(static_cast<uint8_t>(v & 0xff));
        } else {
            out.push_back(static_cast<uint8_t>(v));
        }
    }
    return out;
}

std::vector<uint8_t> encode_ppm(const RgbImage& image) {
    std::ostringstream header;
    header << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::string h = header.str();
    std::vector<uint8_t> out(h.begin(), h.end());
    out.insert(out.end(), image.rgb.begin(), image.rgb.end());
    return out;
}

RgbImage decode_ppm(const std::vector<uint8_t>& bytes) {
    require(bytes.size() > 2 && bytes[0] == 'P' && bytes[1] == '6', ErrorCode::parse,
            "not a binary PPM (P6) stream");
    size_t pos = 2;
    int width = read_pgm_int(bytes, pos);
    int height = read_pgm_int(bytes, pos);
    int max_value = read_pgm_int(bytes, pos);
    require(max_value == 255, ErrorCode::parse, "PPM max value must be 255");
    ++pos;
    RgbImage img(width, height);
    require(bytes.size() - pos >= img.rgb.size(), ErrorCode::parse, "PPM truncated");
    std::memcpy(img.rgb.data(), bytes.data() + pos, img.rgb.size());
    return img;
}

namespace {
constexpr char kBase64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const uint8_t* data, size_t size) {
    std::string out;
    out.reserve((size + 2) / 3 * 4);
    for (size_t i = 0; i < size; i += 3) {
        uint32_t chunk = data[i] << 16;
        if (i + 1 < size)
            chunk |= data[i + 1] << 8;
        if (i + 2 < size)
            chunk |= data[i + 2];
        out.push_back(kBase64Chars[(chunk >> 18) & 0x3f]);
        out.push_back(kBase64Chars[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < size ? kBase64Chars[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < size ? kBase64Chars[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z')
            return c - 'A';
        if (c >= 'a' && c <= 'z')
            return c - 'a' + 26;
        if (c >= '0' && c <= '9')
            return c - '0' + 52;
        if (c == '+')
            return 62;
        if (c == '/')
            return 63;
        return -1;
    };
    require(text.size() % 4 == 0, ErrorCode::parse, "base64 length must be a multiple of 4");
    std::vector<uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            char c = text[i + j];
            if (c == '=') {
                vals[j] = 0;
                ++pad;
            } else {
                vals[j] = value_of(c);
                require(vals[j] >= 0 && pad == 0, ErrorCode::parse, "invalid base64 input");
            }
        }
        uint32_t chunk = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
        out.push_back(static_cast<uint8_t>((chunk >> 16) & 0xff));
        if (pad < 2)
            out.push_back(static_cast<uint8_t>((chunk >> 8) & 0xff));
        if (pad < 1)
            out.push_back(static_cast<uint8_t>(chunk & 0xff));
    }
    return out;
}

Fnv1a64& Fnv1a64::update(const void* data, size_t size) {
    const auto* bytes = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < size; ++i) {
        state_ ^= bytes[i];
        state_ *= 0x100000001b3ull;
    }
    return *this;
}

Fnv1a64& Fnv1a64::update(double value) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(value));
    std::memcpy(&bits, &value, sizeof(bits));
    return update(bits);
}

Fnv1a64& Fnv1a64::update(uint64_t value) {
    uint8_t bytes[8];
    for (int i = 0; i < 8; ++i)
        bytes[i] = static_cast<uint8_t>(value >> (8 * i));
    return update(bytes, 8);
}

std::string Fnv1a64::hex() const {
    static const char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        size_t a = field.find_first_not_of(" \t\r");
        size_t b = field.find_last_not_of(" \t\r");
        fields.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',')
        fields.push_back("");
    return fields;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string line;
    std::istringstream ss(text);
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!line.empty())
            lines.push_back(line);
    }
    return lines;
}

// ---- LineProcess ----------------------------------------------------------

struct LineProcess::Impl {
    pid_t pid = -1;
    int to_child = -1;
    int from_child = -1;
    std::string buffer;
    std::mutex mutex;

    ~Impl() {
        if (to_child >= 0)
            ::close(to_child);
        if (from_child >= 0)
            ::close(from_child);
        if (pid > 0) {
            int status = 0;
            ::waitpid(pid, &status, 0);
        }
    }
};

LineProcess::LineProcess(const std::string& command) : impl_(std::make_unique<Impl>()) {
    int in_pipe[2];  // parent -> child
    int out_pipe[2]; // child -> parent
    require(::pipe(in_pipe) == 0 && ::pipe(out_pipe) == 0, ErrorCode::backend,
            "pipe() failed: " + std::string(std::strerror(errno)));
    pid_t pid = ::fork();
    require(pid >= 0, ErrorCode::backend, "fork() failed");
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    impl_->pid = pid;
    impl_->to_child = in_pipe[1];
    impl_->from_child = out_pipe[0];
}

LineProcess::~LineProcess() = default;

std::string LineProcess::round_trip(const std::string& request) {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    std::string line = request;
    line.push_back('\n');
    size_t written = 0;
    while (written < line.size()) {
        ssize_t n = ::write(impl_->to_child, line.data() + written, line.size() - written);
        require(n > 0, ErrorCode::backend, "backend process closed its input");
        written += static_cast<size_t>(n);
    }
    for (;;) {
        size_t nl = impl_->buffer.find('\n');
        if (nl != std::string::npos) {
            std::string response = impl_->buffer.substr(0, nl);
            impl_->buffer.erase(0, nl + 1);
            if (!response.empty() && response.back() == '\r')
                response.pop_back();
            return response;
        }
        char chunk[4096];
        ssize_t n = ::read(impl_->from_child, chunk, sizeof(chunk));
        require(n > 0, ErrorCode::backend, "backend process closed its output");
        impl_->buffer.append(chunk, static_cast<size_t>(n));
    }
}

} // namespace koa
