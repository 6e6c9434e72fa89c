#include "koa/phantom.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"
#include "support/tmpdir.hpp"

#include <doctest.h>

#include <json.hpp>

#include <filesystem>

using namespace koa;

namespace {

PhantomSpec bilateral_spec(uint64_t seed = 0) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.source_id = "ph";
    spec.knees = {PhantomKnee{{336, 384}, 25, 25, CondyleShape::flat, 0},
                  PhantomKnee{{1008, 384}, 25, 25, CondyleShape::flat, 0}};
    return spec;
}

} // namespace

TEST_CASE("flat phantom truth D_avg equals the constructed gap") {
    PhantomStudy study = generate(bilateral_spec());
    REQUIRE(study.truth.knees.size() == 2);
    for (const auto& knee : study.truth.knees) {
        CHECK(knee.d_avg_med_px == doctest::Approx(25.0));
        CHECK(knee.d_avg_lat_px == doctest::Approx(25.0));
    }
}

TEST_CASE("wedge phantom truth averages the enumerated column gaps") {
    PhantomSpec spec = bilateral_spec();
    spec.knees[0].shape = CondyleShape::wedge;
    spec.knees[0].gap_med_px = 20;
    spec.knees[0].gap_lat_px = 30;
    spec.knees[0].wedge_slope_px_per_col = 0.5;
    PhantomStudy study = generate(spec);
    const PhantomKneeTruth& truth = study.truth.knees[0];

    // Independent check: enumerate the 15 sampled columns from the recorded
    // apex and average the rasterized gap table.
    auto gap_at = [&](const std::vector<GapLine>& table, int col) {
        for (auto [c, g] : table)
            if (c == col)
                return g;
        FAIL("column missing from the gap table");
        return 0;
    };
    for (bool med : {true, false}) {
        const auto& table = med ? truth.gap_table_med : truth.gap_table_lat;
        int anchor = (med ? truth.apex_med : truth.apex_lat).x;
        double sum = 0;
        for (int offset = -14; offset <= 14; offset += 2)
            sum += gap_at(table, anchor + offset);
        double expected = sum / 15.0;
        CHECK((med ? truth.d_avg_med_px : truth.d_avg_lat_px) ==
              doctest::Approx(expected));
    }
    // Linear ramp averages near its anchor value.
    CHECK(std::abs(truth.d_avg_med_px - 20.0) <= 0.5);
}

TEST_CASE("same seed renders bit-identical studies") {
    PhantomSpec spec = bilateral_spec(44);
    spec.noise_sd = 0.03;
    PhantomStudy a = generate(spec);
    PhantomStudy b = generate(spec);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.truth.knees[0].masks.upper == b.truth.knees[0].masks.upper);

    spec.seed = 45;
    PhantomStudy c = generate(spec);
    CHECK(a.image.pixels != c.image.pixels);
}

TEST_CASE("masks are consistent with the gap table") {
    PhantomStudy study = generate(bilateral_spec(3));
    const auto& knee = study.truth.knees[0];
    for (const auto& table : {knee.gap_table_med, knee.gap_table_lat})
        for (auto [col, gap] : table) {
            int upper_bottom = -1, lower_top = -1;
            for (int y = kRoiSize - 1; y >= 0; --y)
                if (knee.masks.upper.at(col, y)) {
                    upper_bottom = y;
                    break;
                }
            for (int y = 0; y < kRoiSize; ++y)
                if (knee.masks.lower.at(col, y)) {
                    lower_top = y;
                    break;
                }
            REQUIRE(upper_bottom >= 0);
            REQUIRE(lower_top > upper_bottom);
            CHECK(lower_top - upper_bottom - 1 == gap);
        }
}

TEST_CASE("spec validation rejects overlapping knees and runaway gaps") {
    PhantomSpec overlap = bilateral_spec();
    overlap.knees[1].center.x = 700; // closer than one patch width
    CHECK_THROWS_AS(validate_spec(overlap), Error);

    PhantomSpec runaway = bilateral_spec();
    runaway.knees[0].gap_med_px = 500;
    CHECK_THROWS_AS(validate_spec(runaway), Error);

    PhantomSpec tiny_gap = bilateral_spec();
    tiny_gap.knees[0].gap_lat_px = 1;
    CHECK_THROWS_AS(validate_spec(tiny_gap), Error);
}

TEST_CASE("backend fixtures carry both knees and round-trip the masks") {
    PhantomStudy study = generate(bilateral_spec(5));
    BackendFixtures fixtures = emit_backend_fixtures(study.truth);

    auto detections = nlohmann::json::parse(fixtures.detections_json);
    REQUIRE(detections.contains("ph"));
    CHECK(detections["ph"].size() == 2);

    auto masks = nlohmann::json::parse(fixtures.masks_json);
    REQUIRE(masks["ph"].contains("left"));
    REQUIRE(masks["ph"].contains("right"));
    MaskGrid upper =
        mask_from_json_text(masks["ph"]["left"]["upper"].dump());
    CHECK(upper == study.truth.knees[0].masks.upper);
}

TEST_CASE("phantom spec documents parse with defaults") {
    std::string doc = R"({"studies": [
        {"source_id": "a", "seed": 9,
         "knees": [{"cx": 336, "cy": 384}, {"cx": 1008, "cy": 384}]},
        {"source_id": "b", "laterality": "left", "width": 800,
         "knees": [{"cx": 400, "cy": 384, "shape": "vee"}]}
    ]})";
    auto specs = parse_phantom_specs(doc);
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].seed == 9);
    CHECK(specs[0].knees.size() == 2);
    CHECK(specs[1].laterality == Laterality::left);
    CHECK(specs[1].knees[0].shape == CondyleShape::vee);

    CHECK_THROWS_AS(parse_phantom_specs(R"({"studies": []})"), Error);
    CHECK_THROWS_AS(parse_phantom_specs(R"({"studies": [{"knees": []}]})"), Error);
}

TEST_CASE("write_phantom_study materializes all five files") {
    testsupport::TmpDir tmp("study");
    PhantomStudy study = generate(bilateral_spec(6));
    write_phantom_study(study, tmp.str());
    for (const char* name : {"ph.pgm", "ph.json", "ph_detections.json", "ph_masks.json",
                             "ph_truth.json"})
        CHECK(std::filesystem::exists(tmp.path() / name));

    // The PGM + sidecar reproduce the rendered image exactly.
    auto pgm = decode_pgm(read_file_bytes(tmp.str("ph.pgm")));
    CHECK(pgm.pixels.width() == study.image.width());
    int errors = 0;
    for (size_t i = 0; i < pgm.pixels.size(); ++i) {
        float expect = static_cast<float>(pgm.pixels.data()[i] / 255.0);
        errors += expect != study.image.pixels.data()[i];
    }
    CHECK(errors == 0);
}
