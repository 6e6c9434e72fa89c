#include "koa/segment.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"

#include <json.hpp>

#include <cmath>

namespace koa {

using nlohmann::json;

// ---- enhancement ------------------------------------------------------------

double adaptive_gamma_exponent(const FloatGrid& pixels, PixelPoint joint_center) {
    // 50x50 box horizontally centered on the joint, bottom edge 10 px above
    // it, so the sample lands inside the femur.
    int x0 = std::max(0, joint_center.x - 25);
    int x1 = std::min(pixels.width(), joint_center.x + 25);
    int y1 = std::min(pixels.height(), joint_center.y - 10);
    int y0 = std::max(0, y1 - 50);
    if (x0 >= x1 || y0 >= y1)
        return 1.0;

    double acc = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            acc += pixels.at(x, y);
    double m = acc / (static_cast<double>(x1 - x0) * (y1 - y0));
    if (m <= 0.0 || m >= 1.0)
        return 1.0;
    return std::clamp(std::log(0.5) / std::log(m), 1.0, 3.0);
}

FloatGrid gamma_correct(const FloatGrid& pixels, double gamma) {
    require(gamma > 0.0, ErrorCode::invalid_argument, "gamma must be positive");
    // Normalized pixels sit on the 8-bit grid k/255; memoize those levels.
    std::array<float, 256> lut;
    std::array<bool, 256> ready{};
    FloatGrid out = pixels;
    for (float& v : out.data()) {
        int level = static_cast<int>(std::lround(v * 255.0f));
        if (level >= 0 && level <= 255 && v == static_cast<float>(level / 255.0)) {
            if (!ready[level]) {
                lut[level] = static_cast<float>(std::pow(static_cast<double>(v), gamma));
                ready[level] = true;
            }
            v = lut[level];
        } else {
            v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
        }
    }
    return out;
}

FloatGrid laplacian_sharpen_grid(const FloatGrid& pixels, double ratio) {
    require(ratio >= 0.0 && ratio <= 1.0, ErrorCode::invalid_argument,
            "sharpening ratio must be in [0, 1]");
    int w = pixels.width(), h = pixels.height();
    FloatGrid out(w, h);
    auto sharpened = [ratio](double center, double lap) {
        return static_cast<float>(std::clamp(center + ratio * (-lap), 0.0, 1.0));
    };
    auto sample = [&](int x, int y) {
        return pixels.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
    };
    for (int y = 0; y < h; ++y) {
        bool border_row = y == 0 || y == h - 1;
        int x = 0;
        for (; x < w && (border_row || x == 0); ++x) {
            double lap = sample(x - 1, y) + sample(x + 1, y) + sample(x, y - 1) +
                         sample(x, y + 1) - 4.0 * sample(x, y);
            out.at(x, y) = sharpened(pixels.at(x, y), lap);
        }
        if (border_row)
            continue;
        const float* up = &pixels.at(0, y - 1);
        const float* row = &pixels.at(0, y);
        const float* down = &pixels.at(0, y + 1);
        float* orow = &out.at(0, y);
        for (; x < w - 1; ++x) {
            double lap = double(row[x - 1]) + row[x + 1] + up[x] + down[x] - 4.0 * row[x];
            orow[x] = sharpened(row[x], lap);
        }
        for (; x < w; ++x) {
            double lap = sample(x - 1, y) + sample(x + 1, y) + sample(x, y - 1) +
                         sample(x, y + 1) - 4.0 * sample(x, y);
            out.at(x, y) = sharpened(pixels.at(x, y), lap);
        }
    }
    return out;
}

namespace {

RoiPatch with_full_pixels(const RoiPatch& roi, FloatGrid full) {
    RoiPatch out;
    out.pixels_full = std::move(full);
    out.pixels_scaled =
        area_average_downsample(out.pixels_full, kScaledRoiSize, kScaledRoiSize);
    out.joint_center_in_patch = roi.joint_center_in_patch;
    out.pad_fraction = roi.pad_fraction;
    return out;
}

} // namespace

RoiPatch adaptive_gamma(const RoiPatch& roi) {
    double gamma = adaptive_gamma_exponent(roi.pixels_full, roi.joint_center_in_patch);
    if (gamma == 1.0)
        return roi;
    return with_full_pixels(roi, gamma_correct(roi.pixels_full, gamma));
}

RoiPatch laplacian_sharpen(const RoiPatch& roi, double ratio) {
    return with_full_pixels(roi, laplacian_sharpen_grid(roi.pixels_full, ratio));
}

RoiPatch enhance_for_segmentation(const RoiPatch& roi) {
    // Same chain as adaptive_gamma + laplacian_sharpen, with the scaled copy
    // rebuilt once at the end.
    double gamma = adaptive_gamma_exponent(roi.pixels_full, roi.joint_center_in_patch);
    FloatGrid full = gamma == 1.0 ? roi.pixels_full : gamma_correct(roi.pixels_full, gamma);
    return with_full_pixels(roi, laplacian_sharpen_grid(full, 0.3));
}

// ---- mask utilities ----------------------------------------------------------

namespace {

long mask_area(const MaskGrid& m) {
    long n = 0;
    for (uint8_t v : m.data())
        n += v != 0;
    return n;
}

// Row runs of equal-value pixels, linked across rows by 4-connectivity
// through a union-find. Components come out in O(runs) rather than O(pixels).
struct RunLabels {
    struct Run {
        int row, x0, x1; // columns [x0, x1] inclusive
    };
    std::vector<Run> runs;
    std::vector<int> parent;
    std::vector<int> row_begin; // index of the first run of each row

    int find(int i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b)
            parent[b] = a;
    }
};

// Builds connected runs of pixels where mask == value.
RunLabels label_runs(const MaskGrid& mask, uint8_t value) {
    int w = mask.width(), h = mask.height();
    RunLabels labels;
    labels.row_begin.assign(h + 1, 0);
    for (int y = 0; y < h; ++y) {
        labels.row_begin[y] = static_cast<int>(labels.runs.size());
        const uint8_t* row = mask.data().data() + static_cast<size_t>(y) * w;
        int x = 0;
        while (x < w) {
            if (row[x] != value) {
                ++x;
                continue;
            }
            int x0 = x;
            while (x < w && row[x] == value)
                ++x;
            labels.runs.push_back({y, x0, x - 1});
        }
    }
    labels.row_begin[h] = static_cast<int>(labels.runs.size());
    labels.parent.resize(labels.runs.size());
    for (size_t i = 0; i < labels.parent.size(); ++i)
        labels.parent[i] = static_cast<int>(i);

    for (int y = 1; y < h; ++y) {
        int above = labels.row_begin[y - 1];
        int above_end = labels.row_begin[y];
        for (int i = labels.row_begin[y]; i < labels.row_begin[y + 1]; ++i) {
            while (above < above_end && labels.runs[above].x1 < labels.runs[i].x0)
                ++above;
            for (int j = above;
                 j < above_end && labels.runs[j].x0 <= labels.runs[i].x1; ++j)
                labels.unite(i, j);
        }
    }
    return labels;
}

// Keeps only the largest 4-connected foreground component.
MaskGrid largest_component(const MaskGrid& mask) {
    RunLabels labels = label_runs(mask, 1);
    if (labels.runs.empty())
        return MaskGrid(mask.width(), mask.height(), 0);

    std::vector<long> sizes(labels.runs.size(), 0);
    for (size_t i = 0; i < labels.runs.size(); ++i)
        sizes[labels.find(static_cast<int>(i))] +=
            labels.runs[i].x1 - labels.runs[i].x0 + 1;
    int keep = static_cast<int>(
        std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

    MaskGrid out(mask.width(), mask.height(), 0);
    for (size_t i = 0; i < labels.runs.size(); ++i) {
        if (labels.find(static_cast<int>(i)) != keep)
            continue;
        const auto& run = labels.runs[i];
        uint8_t* row = out.data().data() + static_cast<size_t>(run.row) * out.width();
        std::fill(row + run.x0, row + run.x1 + 1, uint8_t{1});
    }
    return out;
}

// Fills background regions not 4-connected to the border.
MaskGrid fill_holes(const MaskGrid& mask) {
    int w = mask.width(), h = mask.height();
    RunLabels labels = label_runs(mask, 0);

    std::vector<uint8_t> outside(labels.runs.size(), 0);
    for (size_t i = 0; i < labels.runs.size(); ++i) {
        const auto& run = labels.runs[i];
        if (run.row == 0 || run.row == h - 1 || run.x0 == 0 || run.x1 == w - 1)
            outside[labels.find(static_cast<int>(i))] = 1;
    }

    MaskGrid out = mask;
    for (size_t i = 0; i < labels.runs.size(); ++i) {
        if (outside[labels.find(static_cast<int>(i))])
            continue;
        const auto& run = labels.runs[i];
        uint8_t* row = out.data().data() + static_cast<size_t>(run.row) * out.width();
        std::fill(row + run.x0, row + run.x1 + 1, uint8_t{1});
    }
    return out;
}

double centroid_row(const MaskGrid& mask) {
    double acc = 0.0;
    long n = 0;
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            if (mask.at(x, y)) {
                acc += y;
                ++n;
            }
    return n > 0 ? acc / n : 0.0;
}

} // namespace

BoneMaskPair postprocess(const BoneMaskPair& raw) {
    require(raw.upper.width() == raw.lower.width() &&
                raw.upper.height() == raw.lower.height(),
            ErrorCode::invalid_argument, "mask dimensions disagree");

    // Overlaps go to the femur first so cleaning sees consistent inputs.
    MaskGrid lower = raw.lower;
    for (size_t i = 0; i < lower.data().size(); ++i)
        if (raw.upper.data()[i])
            lower.data()[i] = 0;

    MaskGrid upper_clean = fill_holes(largest_component(raw.upper));
    MaskGrid lower_clean = fill_holes(largest_component(lower));
    require(mask_area(upper_clean) > 0, ErrorCode::degenerate_data,
            "femur mask empty after cleaning");
    require(mask_area(lower_clean) > 0, ErrorCode::degenerate_data,
            "tibia mask empty after cleaning");
    for (size_t i = 0; i < upper_clean.data().size(); ++i)
        require(!(upper_clean.data()[i] && lower_clean.data()[i]), ErrorCode::degenerate_data,
                "masks overlap after cleaning");
    require(centroid_row(upper_clean) < centroid_row(lower_clean), ErrorCode::geometry,
            "femur centroid is not above the tibia centroid");

    return BoneMaskPair{std::move(upper_clean), std::move(lower_clean)};
}

double dice(const MaskGrid& a, const MaskGrid& b) {
    require(a.width() == b.width() && a.height() == b.height(), ErrorCode::invalid_argument,
            "mask dimensions disagree");
    long inter = 0, total = 0;
    for (size_t i = 0; i < a.data().size(); ++i) {
        bool va = a.data()[i] != 0, vb = b.data()[i] != 0;
        inter += va && vb;
        total += va + vb;
    }
    if (total == 0)
        return 1.0;
    return 2.0 * inter / total;
}

std::vector<std::pair<int, int>> rle_encode(const MaskGrid& mask) {
    std::vector<std::pair<int, int>> runs;
    const auto& data = mask.data();
    size_t i = 0;
    while (i < data.size()) {
        if (data[i]) {
            size_t start = i;
            while (i < data.size() && data[i])
                ++i;
            runs.emplace_back(static_cast<int>(start), static_cast<int>(i - start));
        } else {
            ++i;
        }
    }
    return runs;
}

MaskGrid rle_decode(int width, int height, const std::vector<std::pair<int, int>>& runs) {
    MaskGrid mask(width, height, 0);
    for (auto [start, length] : runs) {
        require(start >= 0 && length > 0 &&
                    static_cast<size_t>(start) + length <= mask.data().size(),
                ErrorCode::parse, "RLE run outside the mask");
        std::fill(mask.data().begin() + start, mask.data().begin() + start + length, 1);
    }
    return mask;
}

// ---- backends ----------------------------------------------------------------

namespace detail {

MaskGrid mask_from_json(const json& node) {
    require(node.contains("w") && node.contains("h") && node.contains("runs"),
            ErrorCode::parse, "mask entry missing w/h/runs");
    std::vector<std::pair<int, int>> runs;
    for (const auto& run : node["runs"]) {
        require(run.is_array() && run.size() == 2, ErrorCode::parse, "bad RLE run");
        runs.emplace_back(run[0].get<int>(), run[1].get<int>());
    }
    return rle_decode(node["w"].get<int>(), node["h"].get<int>(), runs);
}

json mask_to_json(const MaskGrid& mask) {
    json node;
    node["w"] = mask.width();
    node["h"] = mask.height();
    json runs = json::array();
    for (auto [start, length] : rle_encode(mask))
        runs.push_back(json::array({start, length}));
    node["runs"] = std::move(runs);
    return node;
}

} // namespace detail

std::string mask_to_json_text(const MaskGrid& mask) {
    return detail::mask_to_json(mask).dump();
}

MaskGrid mask_from_json_text(const std::string& json_text) {
    try {
        return detail::mask_from_json(json::parse(json_text));
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("bad mask JSON: ") + e.what());
    }
}

namespace {

using detail::mask_from_json;
using detail::mask_to_json;

class FileSegmenter final : public SegmenterBackend {
public:
    explicit FileSegmenter(const std::string& path) : path_(path) {}

    BoneMaskPair masks(const RoiPatch&, const std::string& source_id,
                       KneeSide side) override {
        if (doc_.is_null()) {
            try {
                doc_ = json::parse(read_file_text(path_));
            } catch (const json::exception& e) {
                fail(ErrorCode::parse, std::string("bad mask document: ") + e.what());
            }
        }
        std::string side_key = to_string(side);
        require(doc_.contains(source_id) && doc_[source_id].contains(side_key),
                ErrorCode::lookup_miss,
                "no mask entry for (" + source_id + ", " + side_key + ")");
        const auto& entry = doc_[source_id][side_key];
        require(entry.contains("upper") && entry.contains("lower"), ErrorCode::parse,
                "mask entry missing upper/lower");
        return BoneMaskPair{mask_from_json(entry["upper"]), mask_from_json(entry["lower"])};
    }

    std::string identifier() const override { return "masks:file"; }

private:
    std::string path_;
    json doc_;
};

// Intensity-threshold fallback for phantom-like images: bright pixels are
// bone; the two largest components split into femur/tibia by centroid row.
class ThresholdSegmenter final : public SegmenterBackend {
public:
    BoneMaskPair masks(const RoiPatch& roi, const std::string&, KneeSide) override {
        const FloatGrid& px = roi.pixels_full;
        float lo = 1.0f, hi = 0.0f;
        for (float v : px.data()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        float cut = 0.5f * (lo + hi);
        MaskGrid bone(px.width(), px.height(), 0);
        for (size_t i = 0; i < px.data().size(); ++i)
            bone.data()[i] = px.data()[i] > cut ? 1 : 0;

        MaskGrid first = largest_component(bone);
        MaskGrid rest = bone;
        for (size_t i = 0; i < rest.data().size(); ++i)
            if (first.data()[i])
                rest.data()[i] = 0;
        MaskGrid second = largest_component(rest);
        require(mask_area(first) > 0 && mask_area(second) > 0, ErrorCode::backend,
                "threshold segmenter found fewer than two bones");
        if (centroid_row(first) < centroid_row(second))
            return BoneMaskPair{std::move(first), std::move(second)};
        return BoneMaskPair{std::move(second), std::move(first)};
    }

    std::string identifier() const override { return "masks:threshold"; }
};

class ProcessSegmenter final : public SegmenterBackend {
public:
    explicit ProcessSegmenter(const std::string& command) : process_(command) {}

    BoneMaskPair masks(const RoiPatch& roi, const std::string& source_id,
                       KneeSide side) override {
        std::vector<uint8_t> bytes;
        bytes.reserve(roi.pixels_full.size());
        for (float v : roi.pixels_full.data())
            bytes.push_back(static_cast<uint8_t>(
                std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
        std::string request = "segment " + source_id + " " + to_string(side) + " " +
                              base64_encode(bytes.data(), bytes.size());
        std::string response = process_.round_trip(request);
        json doc;
        try {
            doc = json::parse(response);
        } catch (const json::exception& e) {
            fail(ErrorCode::backend, std::string("segmenter process reply: ") + e.what());
        }
        require(doc.contains("upper") && doc.contains("lower"), ErrorCode::backend,
                "segmenter reply missing upper/lower");
        return BoneMaskPair{mask_from_json(doc["upper"]), mask_from_json(doc["lower"])};
    }

    std::string identifier() const override { return "masks:process"; }

private:
    LineProcess process_;
};

} // namespace

std::unique_ptr<SegmenterBackend> make_file_segmenter(const std::string& document_path) {
    return std::make_unique<FileSegmenter>(document_path);
}

std::unique_ptr<SegmenterBackend> make_threshold_segmenter() {
    return std::make_unique<ThresholdSegmenter>();
}

std::unique_ptr<SegmenterBackend> make_process_segmenter(const std::string& command) {
    return std::make_unique<ProcessSegmenter>(command);
}

BoneMaskPair segment(SegmenterBackend& backend, const RoiPatch& roi,
                     const std::string& source_id, KneeSide side) {
    return postprocess(backend.masks(roi, source_id, side));
}

} // namespace koa
