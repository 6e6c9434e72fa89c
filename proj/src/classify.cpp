#include "koa/classify.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

namespace koa {

using nlohmann::json;

std::string to_string(KneeSide side) {
    return side == KneeSide::left ? "left" : "right";
}

ProbabilityVector make_probability_vector(const std::array<double, 5>& raw) {
    double sum = 0.0;
    for (double v : raw) {
        require(std::isfinite(v), ErrorCode::backend,
                "classifier returned a non-finite probability");
        require(v >= 0.0, ErrorCode::backend, "classifier returned a negative probability");
        sum += v;
    }
    require(sum > 0.0, ErrorCode::backend, "classifier returned an all-zero vector");
    ProbabilityVector out;
    for (size_t i = 0; i < raw.size(); ++i)
        out.p[i] = raw[i] / sum;
    return out;
}

FloatGrid area_average_downsample(const FloatGrid& src, int out_width, int out_height) {
    require(out_width > 0 && out_height > 0, ErrorCode::invalid_argument,
            "downsample target must be positive");
    FloatGrid out(out_width, out_height);
    double sx = static_cast<double>(src.width()) / out_width;
    double sy = static_cast<double>(src.height()) / out_height;
    for (int oy = 0; oy < out_height; ++oy) {
        double y0 = oy * sy, y1 = (oy + 1) * sy;
        int iy0 = static_cast<int>(std::floor(y0));
        int iy1 = std::min(static_cast<int>(std::ceil(y1)), src.height());
        for (int ox = 0; ox < out_width; ++ox) {
            double x0 = ox * sx, x1 = (ox + 1) * sx;
            int ix0 = static_cast<int>(std::floor(x0));
            int ix1 = std::min(static_cast<int>(std::ceil(x1)), src.width());
            double acc = 0.0;
            for (int y = iy0; y < iy1; ++y) {
                double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                for (int x = ix0; x < ix1; ++x) {
                    double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                    acc += wx * wy * src.at(x, y);
                }
            }
            out.at(ox, oy) = static_cast<float>(acc / (sx * sy));
        }
    }
    return out;
}

RoiPatch extract_roi(const NormalizedImage& img, Point center) {
    int cx = static_cast<int>(std::lround(center.x));
    int cy = static_cast<int>(std::lround(center.y));
    require(img.pixels.contains(cx, cy), ErrorCode::invalid_argument,
            "joint center outside the image");

    RoiPatch patch;
    patch.pixels_full = FloatGrid(kRoiSize, kRoiSize, 0.0f);
    int x0 = cx - kRoiHalf;
    int y0 = cy - kRoiHalf;
    long padded = 0;
    for (int y = 0; y < kRoiSize; ++y) {
        int sy = y0 + y;
        for (int x = 0; x < kRoiSize; ++x) {
            int sx = x0 + x;
            if (img.pixels.contains(sx, sy))
                patch.pixels_full.at(x, y) = img.pixels.at(sx, sy);
            else
                ++padded;
        }
    }
    patch.pad_fraction = static_cast<double>(padded) / (kRoiSize * kRoiSize);
    patch.joint_center_in_patch = PixelPoint{kRoiHalf, kRoiHalf};
    patch.pixels_scaled =
        area_average_downsample(patch.pixels_full, kScaledRoiSize, kScaledRoiSize);
    return patch;
}

namespace {

class StubClassifier final : public ClassifierBackend {
public:
    explicit StubClassifier(const std::array<double, 5>& value) : value_(value) {}

    std::array<double, 5> probabilities(const RoiPatch&, const std::string&,
                                        KneeSide) override {
        return value_;
    }

    std::string identifier() const override { return "probs:stub"; }

private:
    std::array<double, 5> value_;
};

class FileClassifier final : public ClassifierBackend {
public:
    explicit FileClassifier(const std::string& path) : path_(path) {}

    std::array<double, 5> probabilities(const RoiPatch&, const std::string& source_id,
                                        KneeSide side) override {
        if (doc_.is_null()) {
            try {
                doc_ = json::parse(read_file_text(path_));
            } catch (const json::exception& e) {
                fail(ErrorCode::parse, std::string("bad classifier document: ") + e.what());
            }
        }
        std::string side_key = to_string(side);
        require(doc_.contains(source_id) && doc_[source_id].contains(side_key),
                ErrorCode::lookup_miss,
                "no classifier entry for (" + source_id + ", " + side_key + ")");
        const auto& entry = doc_[source_id][side_key];
        require(entry.is_array() && entry.size() == 5, ErrorCode::parse,
                "classifier entry must hold 5 reals");
        std::array<double, 5> out{};
        for (size_t i = 0; i < 5; ++i)
            out[i] = entry[i].get<double>();
        return out;
    }

    std::string identifier() const override { return "probs:file"; }

private:
    std::string path_;
    json doc_;
};

class ProcessClassifier final : public ClassifierBackend {
public:
    explicit ProcessClassifier(const std::string& command)
        : command_(command), process_(command) {}

    std::array<double, 5> probabilities(const RoiPatch& roi, const std::string& source_id,
                                        KneeSide side) override {
        std::vector<uint8_t> bytes;
        bytes.reserve(roi.pixels_scaled.size());
        for (float v : roi.pixels_scaled.data())
            bytes.push_back(static_cast<uint8_t>(
                std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
        std::string request = "classify " + source_id + " " + to_string(side) + " " +
                              base64_encode(bytes.data(), bytes.size());
        std::istringstream response(process_.round_trip(request));
        std::array<double, 5> out{};
        for (double& v : out)
            require(static_cast<bool>(response >> v), ErrorCode::backend,
                    "classifier process returned fewer than 5 values");
        return out;
    }

    std::string identifier() const override { return "probs:process"; }

private:
    std::string command_;
    LineProcess process_;
};

} // namespace

std::unique_ptr<ClassifierBackend> make_stub_classifier(const std::array<double, 5>& value) {
    return std::make_unique<StubClassifier>(value);
}

std::unique_ptr<ClassifierBackend> make_uniform_classifier() {
    return std::make_unique<StubClassifier>(std::array<double, 5>{0.2, 0.2, 0.2, 0.2, 0.2});
}

std::unique_ptr<ClassifierBackend> make_file_classifier(const std::string& document_path) {
    return std::make_unique<FileClassifier>(document_path);
}

std::unique_ptr<ClassifierBackend> make_process_classifier(const std::string& command) {
    return std::make_unique<ProcessClassifier>(command);
}

ProbabilityVector classify(ClassifierBackend& backend, const RoiPatch& roi,
                           const std::string& source_id, KneeSide side) {
    return make_probability_vector(backend.probabilities(roi, source_id, side));
}

} // namespace koa
