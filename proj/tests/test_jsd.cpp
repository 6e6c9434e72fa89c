#include "koa/jsd.hpp"

#include "koa/error.hpp"
#include "koa/phantom.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace koa;

namespace {

MaskGrid rect_mask(int x0, int y0, int x1, int y1) {
    MaskGrid m(kRoiSize, kRoiSize, 0);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            m.at(x, y) = 1;
    return m;
}

// Two horizontal bone slabs separated by a uniform gap.
BoneMaskPair flat_pair(int gap, int femur_bottom = 320) {
    return BoneMaskPair{rect_mask(100, 120, 570, femur_bottom),
                        rect_mask(100, femur_bottom + 1 + gap, 570, 560)};
}

} // namespace

TEST_CASE("find_lowest_points flat bottom ties toward the split column") {
    BoneMaskPair masks = flat_pair(25);
    LowestPoints points = find_lowest_points(masks, kRoiHalf);
    CHECK(points.left == PixelPoint{336 - 18, 320});
    CHECK(points.right == PixelPoint{336 + 18, 320});
}

TEST_CASE("find_lowest_points vee condyle returns the apex") {
    MaskGrid upper = rect_mask(100, 120, 570, 440);
    // Carve a V so the apex at (200, 480) is the unique lowest point.
    for (int d = 0; d <= 40; ++d) {
        for (int y = 441; y <= 480 - d; ++y) {
            if (200 - d >= 100)
                upper.at(200 - d, y) = 1;
            if (200 + d <= 570)
                upper.at(200 + d, y) = 1;
        }
    }
    MaskGrid lower = rect_mask(100, 520, 570, 560);
    LowestPoints points = find_lowest_points({upper, lower}, kRoiHalf);
    CHECK(points.left == PixelPoint{200, 480});
}

TEST_CASE("find_lowest_points empty half is an error") {
    // Upper bone only on the left side of the split.
    BoneMaskPair masks{rect_mask(100, 120, 300, 320), rect_mask(100, 400, 570, 560)};
    CHECK_THROWS_AS(find_lowest_points(masks, kRoiHalf), Error);
}

TEST_CASE("assign_sides follows the midline convention") {
    CHECK(assign_sides(Laterality::bilateral, KneeSide::left) == MedialSide::right_half);
    CHECK(assign_sides(Laterality::bilateral, KneeSide::right) == MedialSide::left_half);
    CHECK(assign_sides(Laterality::right, KneeSide::left) == MedialSide::right_half);
    CHECK(assign_sides(Laterality::left, KneeSide::left) == MedialSide::left_half);
    CHECK_THROWS_AS(assign_sides(Laterality::unknown, KneeSide::left), Error);
}

TEST_CASE("measure_jsd uniform 25 px gap gives 25.0 px / 5.0 mm both sides") {
    BoneMaskPair masks = flat_pair(25);
    LowestPoints points = find_lowest_points(masks, kRoiHalf);
    JsdMeasurement m = measure_jsd(masks, points, kRoiHalf, MedialSide::right_half);
    CHECK(m.med_px == doctest::Approx(25.0));
    CHECK(m.lat_px == doctest::Approx(25.0));
    CHECK(m.med_mm == doctest::Approx(5.0));
    CHECK(m.valid_line_count_med() == 15);
    CHECK(m.valid_line_count_lat() == 15);
}

TEST_CASE("measure_jsd wedge phantom matches the generator oracle") {
    PhantomSpec spec;
    spec.source_id = "wedge";
    spec.knees = {PhantomKnee{{336, 384}, 20, 24, CondyleShape::wedge, 0.5},
                  PhantomKnee{{1008, 384}, 25, 25, CondyleShape::flat, 0}};
    PhantomStudy study = generate(spec);
    const PhantomKneeTruth& truth = study.truth.knees[0];

    LowestPoints points = find_lowest_points(truth.masks, kRoiHalf);
    MedialSide medial = assign_sides(Laterality::bilateral, KneeSide::left);
    JsdMeasurement m = measure_jsd(truth.masks, points, kRoiHalf, medial);
    CHECK(m.med_px == doctest::Approx(truth.d_avg_med_px));
    CHECK(m.lat_px == doctest::Approx(truth.d_avg_lat_px));
    // The gap ramps linearly, so D_avg sits near its center value.
    CHECK(std::abs(m.med_px - 20.0) <= 0.5);
}

TEST_CASE("measure_jsd requires 5 valid lines per side") {
    // Lower bone missing under most of the left series columns.
    MaskGrid upper = rect_mask(100, 120, 570, 320);
    MaskGrid lower = rect_mask(330, 350, 570, 560); // nothing below the left side
    LowestPoints points{{318, 320}, {354, 320}};
    CHECK_THROWS_AS(measure_jsd({upper, lower}, points, kRoiHalf, MedialSide::left_half),
                    Error);
}

TEST_CASE("measure_jsd is invariant under integer translation") {
    BoneMaskPair masks = flat_pair(18);
    LowestPoints points = find_lowest_points(masks, kRoiHalf);
    JsdMeasurement base = measure_jsd(masks, points, kRoiHalf, MedialSide::left_half);

    // Shift everything 7 columns right and 12 rows down.
    MaskGrid up(kRoiSize, kRoiSize, 0), low(kRoiSize, kRoiSize, 0);
    for (int y = 0; y < kRoiSize - 12; ++y)
        for (int x = 0; x < kRoiSize - 7; ++x) {
            up.at(x + 7, y + 12) = masks.upper.at(x, y);
            low.at(x + 7, y + 12) = masks.lower.at(x, y);
        }
    LowestPoints shifted_points = find_lowest_points({up, low}, kRoiHalf + 7);
    JsdMeasurement shifted =
        measure_jsd({up, low}, shifted_points, kRoiHalf + 7, MedialSide::left_half);
    CHECK(shifted.med_px == base.med_px);
    CHECK(shifted.lat_px == base.lat_px);
}

TEST_CASE("measure_jsd grows by exactly d when the gap widens by d") {
    for (int d : {1, 3, 8}) {
        JsdMeasurement narrow = measure_jsd(flat_pair(20), {{318, 320}, {354, 320}},
                                            kRoiHalf, MedialSide::left_half);
        JsdMeasurement wide = measure_jsd(flat_pair(20 + d), {{318, 320}, {354, 320}},
                                          kRoiHalf, MedialSide::left_half);
        CHECK(wide.med_px - narrow.med_px == doctest::Approx(double(d)));
        CHECK(wide.lat_px - narrow.lat_px == doctest::Approx(double(d)));
    }
}

TEST_CASE("calibrate_boundaries frozen examples from the enumeration oracle") {
    // Oracle-computed: classes {1,2},{10,11},{20,21},{30,31}.
    auto b1 = calibrate_boundaries({1, 2, 10, 11, 20, 21, 30, 31});
    CHECK(b1[0] == doctest::Approx(6.0));
    CHECK(b1[1] == doctest::Approx(15.5));
    CHECK(b1[2] == doctest::Approx(25.5));

    auto b2 = calibrate_boundaries({0, 0, 0, 10, 10, 10, 20, 20, 20, 30, 30, 30});
    CHECK(b2[0] == doctest::Approx(5.0));
    CHECK(b2[1] == doctest::Approx(15.0));
    CHECK(b2[2] == doctest::Approx(25.0));
}

TEST_CASE("calibrate_boundaries equals exhaustive enumeration for n <= 12") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> value(0.0, 40.0);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 4 + static_cast<int>(rng() % 9);
        std::vector<double> values(n);
        for (double& v : values)
            v = value(rng);
        auto dp = calibrate_boundaries(values);
        auto bf = testsupport::brute_force_partition(values);
        CHECK(dp[0] == bf.boundaries[0]);
        CHECK(dp[1] == bf.boundaries[1]);
        CHECK(dp[2] == bf.boundaries[2]);
    }
}

TEST_CASE("calibrate_boundaries needs 4 distinct values") {
    CHECK_THROWS_AS(calibrate_boundaries({5, 5, 5, 5, 5, 5}), Error);
    CHECK_THROWS_AS(calibrate_boundaries({1, 2, 3}), Error);
}

TEST_CASE("calibrate_thresholds runs both sides") {
    std::vector<std::pair<double, double>> distances;
    for (double v : {2.0, 3.0, 12.0, 13.0, 19.0, 20.0, 30.0, 31.0})
        distances.emplace_back(v, v + 1.0);
    ThresholdSet t = calibrate_thresholds(distances);
    CHECK(t.med_boundaries[0] == doctest::Approx(7.5));
    CHECK(t.lat_boundaries[0] == doctest::Approx(8.5));
}

TEST_CASE("grade_jsn counting rule with the published boundaries") {
    std::array<double, 3> b{8, 17, 23};
    CHECK(grade_jsn(30, b) == 0);
    CHECK(grade_jsn(20, b) == 1);
    CHECK(grade_jsn(10, b) == 2);
    CHECK(grade_jsn(5, b) == 3);
    CHECK(grade_jsn(17, b) == 1); // boundary equality keeps the healthier grade
    CHECK_THROWS_AS(grade_jsn(-1, b), Error);
}

TEST_CASE("grade_jsn is antitone in the distance") {
    std::array<double, 3> b{7, 14, 24};
    int prev = grade_jsn(0.0, b);
    for (double v = 0.5; v < 40; v += 0.5) {
        int g = grade_jsn(v, b);
        CHECK(g <= prev);
        prev = g;
    }
}

TEST_CASE("default thresholds carry the published values") {
    ThresholdSet t = default_thresholds();
    CHECK(t.med_boundaries == std::array<double, 3>{8, 17, 23});
    CHECK(t.lat_boundaries == std::array<double, 3>{7, 14, 24});
}

TEST_CASE("thresholds document round-trips") {
    ThresholdSet t;
    t.med_boundaries = {6.5, 15.0, 26.0};
    t.lat_boundaries = {5.0, 13.5, 22.0};
    ThresholdSet back = parse_thresholds(thresholds_to_json(t));
    CHECK(back.med_boundaries == t.med_boundaries);
    CHECK(back.lat_boundaries == t.lat_boundaries);
    CHECK_THROWS_AS(parse_thresholds("{\"med\": [1,2,3]}"), Error);
}
