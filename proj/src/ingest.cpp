#include "koa/ingest.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

namespace koa {

using nlohmann::json;

std::string to_string(Laterality lat) {
    switch (lat) {
    case Laterality::bilateral: return "bilateral";
    case Laterality::left: return "left";
    case Laterality::right: return "right";
    case Laterality::unknown: return "unknown";
    }
    return "unknown";
}

Laterality laterality_from_string(const std::string& text) {
    if (text == "bilateral")
        return Laterality::bilateral;
    if (text == "left")
        return Laterality::left;
    if (text == "right")
        return Laterality::right;
    if (text == "unknown")
        return Laterality::unknown;
    fail(ErrorCode::parse, "unknown laterality '" + text + "'");
}

void validate_radiograph(const RawRadiograph& img) {
    require(img.row_spacing_mm > 0 && img.col_spacing_mm > 0, ErrorCode::invalid_argument,
            "pixel spacing must be positive");
    require(img.width() >= 64 && img.height() >= 64, ErrorCode::invalid_argument,
            "radiograph must be at least 64x64 pixels");
    require(img.bit_depth == 8 || img.bit_depth == 16, ErrorCode::invalid_argument,
            "bit depth must be 8 or 16");
    if (img.bit_depth == 8) {
        uint16_t max_value = 0;
        for (uint16_t v : img.pixels.data())
            max_value = std::max(max_value, v);
        require(max_value < 256, ErrorCode::invalid_argument,
                "intensity exceeds 8-bit range");
    }
}

// ---- DICOM subset ----------------------------------------------------------

namespace {

constexpr uint32_t tag_of(uint16_t group, uint16_t element) {
    return (static_cast<uint32_t>(group) << 16) | element;
}

constexpr uint32_t kTagTransferSyntax = tag_of(0x0002, 0x0010);
constexpr uint32_t kTagLaterality = tag_of(0x0020, 0x0060);
constexpr uint32_t kTagImageLaterality = tag_of(0x0020, 0x0062);
constexpr uint32_t kTagRows = tag_of(0x0028, 0x0010);
constexpr uint32_t kTagColumns = tag_of(0x0028, 0x0011);
constexpr uint32_t kTagPixelSpacing = tag_of(0x0028, 0x0030);
constexpr uint32_t kTagBitsAllocated = tag_of(0x0028, 0x0100);
constexpr uint32_t kTagPixelRepresentation = tag_of(0x0028, 0x0103);
constexpr uint32_t kTagPixelData = tag_of(0x7fe0, 0x0010);

constexpr const char* kImplicitVrLe = "1.2.840.10008.1.2";
constexpr const char* kExplicitVrLe = "1.2.840.10008.1.2.1";

struct DicomReader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    size_t remaining() const { return bytes.size() - pos; }

    const uint8_t* consume(size_t n) {
        require(remaining() >= n, ErrorCode::malformed_element,
                "element length overruns buffer");
        const uint8_t* p = bytes.data() + pos;
        pos += n;
        return p;
    }

    uint16_t read_u16() {
        const uint8_t* p = consume(2);
        return static_cast<uint16_t>(p[0] | (p[1] << 8));
    }

    uint32_t read_u32() {
        const uint8_t* p = consume(4);
        return static_cast<uint32_t>(p[0] | (p[1] << 8) | (p[2] << 16) |
                                     (static_cast<uint32_t>(p[3]) << 24));
    }
};

struct DicomElement {
    uint32_t tag = 0;
    std::string vr; // empty under implicit VR
    uint32_t length = 0;
    const uint8_t* data = nullptr;
};

bool vr_has_long_length(const std::string& vr) {
    return vr == "OB" || vr == "OW" || vr == "OF" || vr == "SQ" || vr == "UT" || vr == "UN";
}

DicomElement read_element(DicomReader& r, bool explicit_vr) {
    DicomElement el;
    uint16_t group = r.read_u16();
    uint16_t element = r.read_u16();
    el.tag = tag_of(group, element);
    if (explicit_vr) {
        const uint8_t* vrp = r.consume(2);
        el.vr.assign(reinterpret_cast<const char*>(vrp), 2);
        if (vr_has_long_length(el.vr)) {
            r.consume(2); // reserved
            el.length = r.read_u32();
        } else {
            el.length = r.read_u16();
        }
    } else {
        el.length = r.read_u32();
    }
    if (el.length == 0xffffffffu) {
        // Undefined lengths mean encapsulated pixel data or sequences,
        // both outside the supported subset.
        if (el.tag == kTagPixelData)
            fail(ErrorCode::unsupported_transfer_syntax,
                 "encapsulated pixel data is not supported");
        fail(ErrorCode::malformed_element, "undefined element length");
    }
    el.data = el.length > 0 ? r.consume(el.length) : nullptr;
    return el;
}

std::string element_string(const DicomElement& el) {
    std::string s(reinterpret_cast<const char*>(el.data), el.length);
    while (!s.empty() && (s.back() == '\0' || s.back() == ' '))
        s.pop_back();
    size_t a = s.find_first_not_of(' ');
    return a == std::string::npos ? "" : s.substr(a);
}

uint16_t element_u16(const DicomElement& el) {
    require(el.length >= 2, ErrorCode::malformed_element, "short US element");
    return static_cast<uint16_t>(el.data[0] | (el.data[1] << 8));
}

Laterality laterality_from_dicom(const std::string& code) {
    if (code == "L")
        return Laterality::left;
    if (code == "R")
        return Laterality::right;
    if (code == "B")
        return Laterality::bilateral;
    return Laterality::unknown;
}

} // namespace

RawRadiograph parse_dicom(const std::vector<uint8_t>& bytes, const std::string& source_id) {
    require(bytes.size() >= 132 && std::memcmp(bytes.data() + 128, "DICM", 4) == 0,
            ErrorCode::malformed_element, "missing DICM file marker");
    DicomReader reader{bytes, 132};

    // File meta group (0002,xxxx) is always explicit VR little endian.
    std::string transfer_syntax;
    while (reader.remaining() >= 8) {
        uint16_t group = static_cast<uint16_t>(bytes[reader.pos] | (bytes[reader.pos + 1] << 8));
        if (group != 0x0002)
            break;
        DicomElement el = read_element(reader, true);
        if (el.tag == kTagTransferSyntax)
            transfer_syntax = element_string(el);
    }
    require(!transfer_syntax.empty(), ErrorCode::missing_required_tag,
            "missing TransferSyntaxUID");

    bool explicit_vr;
    if (transfer_syntax == kExplicitVrLe) {
        explicit_vr = true;
    } else if (transfer_syntax == kImplicitVrLe) {
        explicit_vr = false;
    } else {
        fail(ErrorCode::unsupported_transfer_syntax,
             "unsupported transfer syntax " + transfer_syntax);
    }

    std::optional<uint16_t> rows, cols, bits_allocated, pixel_representation;
    std::optional<std::string> spacing_text, laterality_text;
    const uint8_t* pixel_data = nullptr;
    uint32_t pixel_data_length = 0;

    while (reader.remaining() >= (explicit_vr ? size_t{8} : size_t{8})) {
        DicomElement el = read_element(reader, explicit_vr);
        switch (el.tag) {
        case kTagRows: rows = element_u16(el); break;
        case kTagColumns: cols = element_u16(el); break;
        case kTagBitsAllocated: bits_allocated = element_u16(el); break;
        case kTagPixelRepresentation: pixel_representation = element_u16(el); break;
        case kTagPixelSpacing: spacing_text = element_string(el); break;
        case kTagLaterality:
        case kTagImageLaterality:
            laterality_text = element_string(el);
            break;
        case kTagPixelData:
            pixel_data = el.data;
            pixel_data_length = el.length;
            break;
        default: break; // skipped by length
        }
        if (pixel_data)
            break; // PixelData is last in the supported subset
    }

    require(spacing_text.has_value(), ErrorCode::missing_required_tag, "missing PixelSpacing");
    require(rows.has_value(), ErrorCode::missing_required_tag, "missing Rows");
    require(cols.has_value(), ErrorCode::missing_required_tag, "missing Columns");
    require(bits_allocated.has_value(), ErrorCode::missing_required_tag,
            "missing BitsAllocated");
    require(pixel_data != nullptr, ErrorCode::missing_required_tag, "missing PixelData");
    require(*bits_allocated == 8 || *bits_allocated == 16, ErrorCode::invalid_argument,
            "BitsAllocated must be 8 or 16");
    if (pixel_representation.value_or(0) != 0)
        fail(ErrorCode::invalid_argument, "signed pixel data is not supported");

    double row_spacing = 0, col_spacing = 0;
    {
        std::string s = *spacing_text;
        size_t backslash = s.find('\\');
        try {
            row_spacing = std::stod(s.substr(0, backslash));
            col_spacing = backslash == std::string::npos ? row_spacing
                                                         : std::stod(s.substr(backslash + 1));
        } catch (const std::exception&) {
            fail(ErrorCode::malformed_element, "unparseable PixelSpacing '" + s + "'");
        }
    }

    int width = *cols, height = *rows;
    int bytes_per_sample = *bits_allocated / 8;
    size_t needed = static_cast<size_t>(width) * height * bytes_per_sample;
    require(pixel_data_length >= needed, ErrorCode::malformed_element,
            "PixelData shorter than Rows*Columns");

    RawRadiograph img;
    img.pixels = PixelGrid(width, height);
    for (size_t i = 0; i < static_cast<size_t>(width) * height; ++i) {
        img.pixels.data()[i] =
            bytes_per_sample == 2
                ? static_cast<uint16_t>(pixel_data[2 * i] | (pixel_data[2 * i + 1] << 8))
                : pixel_data[i];
    }
    img.row_spacing_mm = row_spacing;
    img.col_spacing_mm = col_spacing;
    img.bit_depth = *bits_allocated;
    img.laterality = laterality_text ? laterality_from_dicom(*laterality_text)
                                     : Laterality::unknown;
    img.source_id = source_id;
    validate_radiograph(img);
    return img;
}

// ---- portable path ---------------------------------------------------------

RawRadiograph parse_portable(const std::vector<uint8_t>& image_bytes,
                             const std::string& sidecar_json) {
    if (image_bytes.size() > 2 && image_bytes[0] == 'P' &&
        (image_bytes[1] == '6' || image_bytes[1] == '3'))
        fail(ErrorCode::invalid_argument, "color images are not supported");
    PgmImage pgm = decode_pgm(image_bytes);

    json sidecar;
    try {
        sidecar = json::parse(sidecar_json);
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("bad sidecar: ") + e.what());
    }
    for (const char* field : {"spacing_mm", "laterality", "source_id"})
        require(sidecar.contains(field), ErrorCode::missing_field,
                std::string("sidecar missing field ") + field);

    RawRadiograph img;
    img.pixels = std::move(pgm.pixels);
    if (sidecar["spacing_mm"].is_array()) {
        require(sidecar["spacing_mm"].size() == 2, ErrorCode::parse,
                "spacing_mm array must hold [row, col]");
        img.row_spacing_mm = sidecar["spacing_mm"][0].get<double>();
        img.col_spacing_mm = sidecar["spacing_mm"][1].get<double>();
    } else {
        img.row_spacing_mm = img.col_spacing_mm = sidecar["spacing_mm"].get<double>();
    }
    img.bit_depth = pgm.max_value > 255 ? 16 : 8;
    img.laterality = laterality_from_string(sidecar["laterality"].get<std::string>());
    img.source_id = sidecar["source_id"].get<std::string>();
    validate_radiograph(img);
    return img;
}

RawRadiograph load_radiograph(const std::string& image_path, const std::string& sidecar_path) {
    auto bytes = read_file_bytes(image_path);
    std::string stem = std::filesystem::path(image_path).stem().string();
    if (bytes.size() >= 132 && std::memcmp(bytes.data() + 128, "DICM", 4) == 0)
        return parse_dicom(bytes, stem);
    if (bytes.size() > 2 && bytes[0] == 'P') {
        std::string sidecar = sidecar_path;
        if (sidecar.empty()) {
            auto p = std::filesystem::path(image_path);
            sidecar = (p.parent_path() / (stem + ".json")).string();
        }
        return parse_portable(bytes, read_file_text(sidecar));
    }
    fail(ErrorCode::parse, "unrecognized image format: " + image_path);
}

// ---- Step 1 preprocessing ---------------------------------------------------

namespace {

// Catmull-Rom cubic (sharpness -0.5).
double cubic_weight(double t) {
    t = std::abs(t);
    if (t <= 1.0)
        return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0)
        return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

// One separable pass along x: resamples each row to out_width.
std::vector<double> resample_axis(const std::vector<double>& src, int in_w, int in_h,
                                  int out_w, double scale) {
    std::vector<double> out(static_cast<size_t>(out_w) * in_h);
    for (int y = 0; y < in_h; ++y) {
        const double* row = src.data() + static_cast<size_t>(y) * in_w;
        double* orow = out.data() + static_cast<size_t>(y) * out_w;
        for (int x = 0; x < out_w; ++x) {
            double sx = (x + 0.5) * scale - 0.5;
            int base = static_cast<int>(std::floor(sx));
            double frac = sx - base;
            double acc = 0.0;
            for (int k = -1; k <= 2; ++k) {
                int ix = std::clamp(base + k, 0, in_w - 1);
                acc += cubic_weight(frac - k) * row[ix];
            }
            orow[x] = acc;
        }
    }
    return out;
}

} // namespace

RawRadiograph resample_to_standard(const RawRadiograph& img) {
    validate_radiograph(img);
    if (img.row_spacing_mm == kStandardSpacingMm && img.col_spacing_mm == kStandardSpacingMm)
        return img;

    int in_w = img.width(), in_h = img.height();
    int out_w = static_cast<int>(std::lround(in_w * img.col_spacing_mm / kStandardSpacingMm));
    int out_h = static_cast<int>(std::lround(in_h * img.row_spacing_mm / kStandardSpacingMm));
    require(out_w >= 64 && out_h >= 64, ErrorCode::invalid_argument,
            "resampled image would fall below 64 pixels");

    std::vector<double> work(img.pixels.data().begin(), img.pixels.data().end());
    work = resample_axis(work, in_w, in_h, out_w, kStandardSpacingMm / img.col_spacing_mm);

    // Vertical pass: transpose, resample, transpose back.
    std::vector<double> t(static_cast<size_t>(in_h) * out_w);
    for (int y = 0; y < in_h; ++y)
        for (int x = 0; x < out_w; ++x)
            t[static_cast<size_t>(x) * in_h + y] = work[static_cast<size_t>(y) * out_w + x];
    t = resample_axis(t, in_h, out_w, out_h, kStandardSpacingMm / img.row_spacing_mm);

    RawRadiograph out;
    out.pixels = PixelGrid(out_w, out_h);
    long max_value = (1L << img.bit_depth) - 1;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            double v = t[static_cast<size_t>(x) * out_h + y];
            long r = std::lround(std::clamp(v, 0.0, static_cast<double>(max_value)));
            out.pixels.at(x, y) = static_cast<uint16_t>(r);
        }
    out.row_spacing_mm = kStandardSpacingMm;
    out.col_spacing_mm = kStandardSpacingMm;
    out.bit_depth = img.bit_depth;
    out.laterality = img.laterality;
    out.source_id = img.source_id;
    return out;
}

uint16_t intensity_percentile(const PixelGrid& pixels, double q) {
    require(!pixels.empty(), ErrorCode::invalid_argument, "empty pixel grid");
    require(q >= 0.0 && q <= 1.0, ErrorCode::invalid_argument, "percentile out of range");
    std::vector<uint16_t> values = pixels.data();
    size_t index = static_cast<size_t>(std::llround(q * (values.size() - 1)));
    std::nth_element(values.begin(), values.begin() + index, values.end());
    return values[index];
}

NormalizedImage normalize(const RawRadiograph& img) {
    validate_radiograph(img);
    require(img.row_spacing_mm == kStandardSpacingMm &&
                img.col_spacing_mm == kStandardSpacingMm,
            ErrorCode::invalid_argument, "normalize expects a resampled image");

    NormalizedImage out;
    out.pixels = FloatGrid(img.width(), img.height());
    out.spacing_mm = kStandardSpacingMm;
    out.laterality = img.laterality;
    out.source_id = img.source_id;

    if (img.bit_depth == 8) {
        for (size_t i = 0; i < img.pixels.size(); ++i)
            out.pixels.data()[i] = static_cast<float>(img.pixels.data()[i] / 255.0);
        return out;
    }

    uint16_t lo = intensity_percentile(img.pixels, 0.01);
    uint16_t hi = intensity_percentile(img.pixels, 0.99);
    if (lo == hi) {
        out.degenerate_window = true;
        std::fill(out.pixels.data().begin(), out.pixels.data().end(), 0.5f);
        return out;
    }
    double span = static_cast<double>(hi) - lo;
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        double scaled = 255.0 * (img.pixels.data()[i] - lo) / span;
        long level = std::clamp(std::lround(scaled), 0L, 255L);
        out.pixels.data()[i] = static_cast<float>(level / 255.0);
    }
    return out;
}

} // namespace koa
