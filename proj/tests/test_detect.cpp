#include "koa/detect.hpp"

#include "koa/error.hpp"
#include "koa/phantom.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace koa;

namespace {

JointDetection cand(double x, double y, double conf) {
    return detection_from_center(Point{x, y}, conf);
}

} // namespace

TEST_CASE("select_knees keeps the two highest confidences ordered by x") {
    std::vector<JointDetection> cs = {cand(900, 400, 0.3), cand(300, 410, 0.9),
                                      cand(880, 390, 0.8), cand(500, 400, 0.2),
                                      cand(100, 100, 0.1)};
    KneePair pair = select_knees(cs);
    CHECK_FALSE(pair.single_knee_flag);
    CHECK(pair.image_left.center.x == 300);
    CHECK(pair.image_right.center.x == 880);
    CHECK(pair.image_left.confidence == 0.9);
    CHECK(pair.image_right.confidence == 0.8);
}

TEST_CASE("select_knees breaks confidence ties by smaller x") {
    std::vector<JointDetection> cs = {cand(400, 10, 0.7), cand(100, 10, 0.7),
                                      cand(250, 10, 0.7)};
    KneePair pair = select_knees(cs);
    CHECK(pair.image_left.center.x == 100);
    CHECK(pair.image_right.center.x == 250);
}

TEST_CASE("select_knees single candidate sets the flag") {
    KneePair pair = select_knees({cand(200, 300, 0.5)});
    CHECK(pair.single_knee_flag);
    CHECK(pair.image_left.center.x == 200);
}

TEST_CASE("select_knees rejects an empty list") {
    CHECK_THROWS_AS(select_knees({}), Error);
}

TEST_CASE("select_knees is permutation invariant") {
    std::vector<JointDetection> cs;
    std::mt19937 rng(5);
    for (int i = 0; i < 8; ++i)
        cs.push_back(cand(100 + 90 * i, 50 + (rng() % 400), (i + 1) / 10.0));
    KneePair reference = select_knees(cs);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(cs.begin(), cs.end(), rng);
        KneePair pair = select_knees(cs);
        CHECK(pair.image_left.center.x == reference.image_left.center.x);
        CHECK(pair.image_right.center.x == reference.image_right.center.x);
    }
}

TEST_CASE("iou identities") {
    Box a{0, 0, 2, 2};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, Box{10, 10, 12, 12}) == 0.0);
    CHECK(iou(a, Box{1, 0, 3, 2}) == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("iou is symmetric, bounded and 1 only for identical boxes") {
    std::mt19937 rng(17);
    auto rand_box = [&] {
        double x0 = rng() % 100, y0 = rng() % 100;
        return Box{x0, y0, x0 + 1 + rng() % 50, y0 + 1 + rng() % 50};
    };
    for (int i = 0; i < 200; ++i) {
        Box a = rand_box(), b = rand_box();
        double ab = iou(a, b);
        CHECK(ab == iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        if (ab == doctest::Approx(1.0))
            CHECK(a == b);
    }
}

TEST_CASE("center_deviation is the Euclidean distance") {
    CHECK(center_deviation({10, 10}, {10, 10}) == 0.0);
    CHECK(center_deviation({3, 4}, {0, 0}) == doctest::Approx(5.0));
    CHECK(center_deviation({8.52, 0}, {0, 0}) == doctest::Approx(8.52));
}

TEST_CASE("center_deviation satisfies the triangle inequality") {
    std::mt19937 rng(23);
    for (int i = 0; i < 100; ++i) {
        Point a{double(rng() % 1000), double(rng() % 1000)};
        Point b{double(rng() % 1000), double(rng() % 1000)};
        Point c{double(rng() % 1000), double(rng() % 1000)};
        CHECK(center_deviation(a, c) <=
              center_deviation(a, b) + center_deviation(b, c) + 1e-9);
    }
}

TEST_CASE("load_candidates synthesizes the 500 px default box") {
    std::string doc = R"({"study1": [{"center_x": 300, "center_y": 400, "confidence": 0.95}]})";
    auto cs = load_candidates(doc, "study1");
    REQUIRE(cs.size() == 1);
    CHECK(cs[0].box == Box{50, 150, 550, 650});
    CHECK(cs[0].confidence == 0.95);
}

TEST_CASE("load_candidates keeps explicit boxes") {
    std::string doc =
        R"({"s": [{"center_x": 10, "center_y": 10, "confidence": 0.5,
                   "x0": 0, "y0": 0, "x1": 30, "y1": 20}]})";
    auto cs = load_candidates(doc, "s");
    CHECK(cs[0].box == Box{0, 0, 30, 20});
}

TEST_CASE("load_candidates missing confidence is an error") {
    std::string doc = R"({"s": [{"center_x": 10, "center_y": 10}]})";
    CHECK_THROWS_AS(load_candidates(doc, "s"), Error);
}

TEST_CASE("load_candidates unknown source_id is an error") {
    CHECK_THROWS_AS(load_candidates(R"({"a": []})", "b"), Error);
}

TEST_CASE("heuristic_detect finds phantom knees within 30 px") {
    // Spec-level stability claim, checked across 50 seeded phantoms.
    for (uint64_t seed = 0; seed < 50; ++seed) {
        PhantomSpec spec;
        spec.seed = seed;
        spec.source_id = "h" + std::to_string(seed);
        spec.noise_sd = 0.05;
        spec.knees = {PhantomKnee{{336, 384}, 20 + double(seed % 12), 25, CondyleShape::flat, 0},
                      PhantomKnee{{1008, 384}, 24, 18 + double(seed % 9), CondyleShape::vee, 0}};
        PhantomStudy study = generate(spec);
        auto candidates = heuristic_detect(study.image);
        REQUIRE(candidates.size() == 2);
        for (const auto& knee : study.truth.knees) {
            double best = 1e9;
            for (const auto& c : candidates)
                best = std::min(best, center_deviation(c.center, knee.center));
            CHECK(best <= 30.0);
        }
    }
}

TEST_CASE("heuristic_detect single-knee phantom yields one candidate") {
    PhantomSpec spec;
    spec.laterality = Laterality::left;
    spec.width = 800;
    spec.source_id = "single";
    spec.knees = {PhantomKnee{{400, 384}, 22, 26, CondyleShape::flat, 0}};
    PhantomStudy study = generate(spec);
    auto candidates = heuristic_detect(study.image);
    REQUIRE(candidates.size() == 1);
    CHECK(center_deviation(candidates[0].center, study.truth.knees[0].center) <= 30.0);
}

TEST_CASE("heuristic_detect on a uniform image still returns candidates") {
    NormalizedImage img;
    img.pixels = FloatGrid(400, 300, 0.4f);
    img.laterality = Laterality::bilateral;
    auto candidates = heuristic_detect(img);
    REQUIRE(candidates.size() == 2);
    for (const auto& c : candidates) {
        CHECK(c.confidence > 0.0);
        CHECK(c.confidence <= 0.01); // near zero on a contrast-free image
    }
}
