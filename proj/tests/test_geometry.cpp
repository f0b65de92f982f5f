// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "croprl/geometry.hpp"
#include "croprl/rng.hpp"
#include "doctest.h"

using namespace croprl;
using geometry::CropId;
using geometry::CropSet;
using geometry::Rect;

TEST_CASE("candidate vocabulary has the fixed rects") {
    const auto& cands = geometry::candidate_crops();
    REQUIRE(cands.size() == 10);
    CHECK(geometry::crop_rect(CropId::top_left) == Rect{0.0, 0.0, 0.5, 0.5});
    CHECK(geometry::crop_rect(CropId::top_right) == Rect{0.5, 0.0, 1.0, 0.5});
    CHECK(geometry::crop_rect(CropId::bottom_left) == Rect{0.0, 0.5, 0.5, 1.0});
    CHECK(geometry::crop_rect(CropId::bottom_right) == Rect{0.5, 0.5, 1.0, 1.0});
    CHECK(geometry::crop_rect(CropId::center) == Rect{0.25, 0.25, 0.75, 0.75});
    CHECK(geometry::crop_rect(CropId::top) == Rect{0.0, 0.0, 1.0, 0.5});
    CHECK(geometry::crop_rect(CropId::bottom) == Rect{0.0, 0.5, 1.0, 1.0});
    CHECK(geometry::crop_rect(CropId::left) == Rect{0.0, 0.0, 0.5, 1.0});
    CHECK(geometry::crop_rect(CropId::right) == Rect{0.5, 0.0, 1.0, 1.0});
    CHECK(geometry::crop_rect(CropId::all) == Rect{0.0, 0.0, 1.0, 1.0});
    for (const auto& c : cands) {
        CHECK(geometry::crop_id_from_name(geometry::crop_id_name(c.id)) == c.id);
    }
    CHECK(geometry::crop_id_name(CropId::all) == "all");
    CHECK(geometry::crop_id_name(CropId::bottom_right) == "3");
    CHECK_FALSE(geometry::crop_id_from_name("9").has_value());
    CHECK_FALSE(geometry::crop_id_from_name("ALL").has_value());
    CHECK_FALSE(geometry::crop_id_from_name("").has_value());
}

TEST_CASE("validate_rect rejects malformed rects") {
    CHECK_NOTHROW(geometry::validate_rect(Rect{0, 0, 1, 1}));
    CHECK_NOTHROW(geometry::validate_rect(Rect{0.2, 0.3, 0.4, 0.5}));
    CHECK_THROWS_AS(geometry::validate_rect(Rect{0.5, 0.5, 0.5, 0.9}),
                    std::invalid_argument);  // zero width
    CHECK_THROWS_AS(geometry::validate_rect(Rect{0.6, 0.1, 0.4, 0.9}),
                    std::invalid_argument);  // inverted
    CHECK_THROWS_AS(geometry::validate_rect(Rect{-0.1, 0, 1, 1}),
                    std::invalid_argument);  // out of range
    CHECK_THROWS_AS(geometry::validate_rect(Rect{0, 0, 1.1, 1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        geometry::validate_rect(Rect{0, 0, std::nan(""), 1}),
        std::invalid_argument);
}

TEST_CASE("containment semantics") {
    Rect outer{0.0, 0.0, 0.5, 0.5};
    CHECK(outer.contains(Rect{0.0, 0.0, 0.5, 0.5}));  // closed: edges count
    CHECK(outer.contains(Rect{0.1, 0.1, 0.4, 0.4}));
    CHECK_FALSE(outer.contains(Rect{0.1, 0.1, 0.6, 0.4}));
    // Strict point test: boundary excluded.
    CHECK(outer.contains_point_strict(0.25, 0.25));
    CHECK_FALSE(outer.contains_point_strict(0.5, 0.25));
    CHECK_FALSE(outer.contains_point_strict(0.0, 0.25));
    CHECK_FALSE(outer.contains_point_strict(0.25, 0.5));
}

TEST_CASE("rect_iou basics") {
    Rect a{0, 0, 0.5, 0.5};
    CHECK(geometry::rect_iou(a, a) == doctest::Approx(1.0));
    CHECK(geometry::rect_iou(a, Rect{0.5, 0.5, 1, 1}) == doctest::Approx(0.0));
    // Half overlap: [0,0,.5,.5] vs [0,0,1,.5]: inter .25, union .5.
    CHECK(geometry::rect_iou(a, Rect{0, 0, 1, 0.5}) == doctest::Approx(0.5));
    // Symmetric.
    CHECK(geometry::rect_iou(Rect{0, 0, 1, 0.5}, a) == doctest::Approx(0.5));
}

namespace {

// Monte-Carlo area of the union, for cross-checking the sweep.
double mc_union_area(const std::vector<Rect>& rects, int n, std::uint64_t seed) {
    auto g = rng::substream(seed, 0xA5EA);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        double x = rng::uniform01(g);
        double y = rng::uniform01(g);
        for (const Rect& r : rects) {
            if (x >= r.x1 && x < r.x2 && y >= r.y1 && y < r.y2) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / n;
}

}  // namespace

TEST_CASE("union_area handles overlap, nesting and disjoint rects") {
    using V = std::vector<Rect>;
    CHECK(geometry::union_area(V{}) == doctest::Approx(0.0));
    CHECK(geometry::union_area(V{{0, 0, 1, 1}}) == doctest::Approx(1.0));
    // Disjoint quadrants.
    CHECK(geometry::union_area(V{{0, 0, 0.5, 0.5}, {0.5, 0.5, 1, 1}}) ==
          doctest::Approx(0.5));
    // Nested: inner adds nothing.
    CHECK(geometry::union_area(V{{0, 0, 1, 1}, {0.25, 0.25, 0.75, 0.75}}) ==
          doctest::Approx(1.0));
    // Top half + left half: 0.5 + 0.5 - 0.25.
    CHECK(geometry::union_area(V{{0, 0, 1, 0.5}, {0, 0, 0.5, 1}}) ==
          doctest::Approx(0.75));
    // Random rect piles vs Monte-Carlo.
    auto g = rng::substream(17, 0xBEEF);
    for (int trial = 0; trial < 5; ++trial) {
        V rects;
        for (int k = 0; k < 6; ++k) {
            double x1 = rng::uniform01(g) * 0.8;
            double y1 = rng::uniform01(g) * 0.8;
            Rect r{x1, y1, x1 + 0.05 + rng::uniform01(g) * 0.15,
                   y1 + 0.05 + rng::uniform01(g) * 0.15};
            rects.push_back(r);
        }
        double exact = geometry::union_area(rects);
        double mc = mc_union_area(rects, 200000, 1000 + trial);
        CHECK(exact == doctest::Approx(mc).epsilon(0.02));
    }
}

TEST_CASE("CropSet canonical order, mask and name round-trips") {
    CropSet s{CropId::all, CropId::top_left, CropId::top};
    auto ids = s.ids();
    REQUIRE(ids.size() == 3);
    CHECK(ids[0] == CropId::top_left);
    CHECK(ids[1] == CropId::top);
    CHECK(ids[2] == CropId::all);  // "all" sorts last
    CHECK(s.names() == std::vector<std::string>{"0", "5", "all"});
    CHECK(s.size() == 3);
    CHECK_FALSE(s.empty());
    CHECK(CropSet{}.empty());

    CHECK(CropSet::from_mask(s.mask()) == s);
    for (std::uint16_t mask = 0; mask < 1024; ++mask) {
        CropSet a = CropSet::from_mask(mask);
        CHECK(a.mask() == mask);
        auto names = a.names();
        auto back = CropSet::from_names(names);
        REQUIRE(back.has_value());
        CHECK(*back == a);
    }

    std::vector<std::string> dup{"3", "3", "all"};
    auto d = CropSet::from_names(dup);
    REQUIRE(d.has_value());
    CHECK(d->size() == 2);

    std::vector<std::string> bad{"3", "9"};
    CHECK_FALSE(CropSet::from_names(bad).has_value());
}

TEST_CASE("crop_set_area uses the union of candidate rects") {
    CHECK(geometry::crop_set_area(CropSet{}) == doctest::Approx(0.0));
    CHECK(geometry::crop_set_area(CropSet{CropId::bottom_right}) == doctest::Approx(0.25));
    CHECK(geometry::crop_set_area(CropSet{CropId::top_left, CropId::top_right}) ==
          doctest::Approx(0.5));
    // top + left overlap in the TL quadrant.
    CHECK(geometry::crop_set_area(CropSet{CropId::top, CropId::left}) ==
          doctest::Approx(0.75));
    CHECK(geometry::crop_set_area(CropSet{CropId::all, CropId::center}) ==
          doctest::Approx(1.0));
}

TEST_CASE("eligible_crops is a pure IoU threshold scan") {
    // TL quadrant: IoU 1 with itself, 0.5 with top and left halves.
    CropSet e = geometry::eligible_crops(Rect{0, 0, 0.5, 0.5});
    CHECK(e == CropSet{CropId::top_left, CropId::top, CropId::left});
    // Threshold is inclusive: IoU exactly 0.5 qualifies.
    CHECK(e.contains(CropId::top));

    // Tiny box matches nothing.
    CHECK(geometry::eligible_crops(Rect{0.45, 0.45, 0.55, 0.55}).empty());

    // tau is configurable.
    geometry::MappingConfig loose{0.4};
    CropSet e2 = geometry::eligible_crops(Rect{0, 0, 0.5, 0.5}, loose);
    CHECK(e2.contains(CropId::top_left));

    CHECK_THROWS_AS(geometry::eligible_crops(Rect{0, 0, 1, 1}, geometry::MappingConfig{0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(geometry::eligible_crops(Rect{0, 0, 1, 1}, geometry::MappingConfig{1.5}),
                    std::invalid_argument);
}

TEST_CASE("map_bbox_to_crops worked examples") {
    // A quadrant keeps only itself: the enclosing halves are pruned.
    CHECK(geometry::map_bbox_to_crops(Rect{0, 0, 0.5, 0.5}) ==
          CropSet{CropId::top_left});
    CHECK(geometry::map_bbox_to_crops(Rect{0.5, 0.5, 1, 1}) ==
          CropSet{CropId::bottom_right});
    // The full frame maps to "all" alone.
    CHECK(geometry::map_bbox_to_crops(Rect{0, 0, 1, 1}) == CropSet{CropId::all});
    // Small central box: nothing eligible; coverage repair picks the
    // smallest containing candidate, the center crop.
    CHECK(geometry::map_bbox_to_crops(Rect{0.45, 0.45, 0.55, 0.55}) ==
          CropSet{CropId::center});
    CHECK(geometry::map_bbox_to_crops(Rect{0.3, 0.3, 0.7, 0.7}) ==
          CropSet{CropId::center});
    // The top half: quadrants 0,1 and "all" are eligible but pruned.
    CHECK(geometry::map_bbox_to_crops(Rect{0, 0, 1, 0.5}) == CropSet{CropId::top});
    CHECK(geometry::map_bbox_to_crops(Rect{0, 0, 0.5, 1}) == CropSet{CropId::left});
    // A box straddling the two top quadrants is eligible only for the
    // enclosing half.
    CropSet straddle = geometry::map_bbox_to_crops(Rect{0.05, 0.05, 0.95, 0.45});
    CHECK(straddle == CropSet{CropId::top});
    // Wide-but-short band across the middle: center crop via repair.
    CHECK(geometry::map_bbox_to_crops(Rect{0.3, 0.48, 0.7, 0.52}) ==
          CropSet{CropId::center});
    // IoU tie on a nested pair drops the larger member; the survivor no
    // longer covers b, so repair falls through to "all".
    double h = std::sqrt(0.5);
    CHECK(geometry::map_bbox_to_crops(Rect{0, 0, 1, h}) == CropSet{CropId::all});
}

TEST_CASE("mapping result always covers the bbox") {
    auto g = rng::substream(99, 0xC0DE);
    for (int i = 0; i < 2000; ++i) {
        double x1 = rng::uniform01(g);
        double y1 = rng::uniform01(g);
        double x2 = x1 + (1.0 - x1) * (0.001 + 0.999 * rng::uniform01(g));
        double y2 = y1 + (1.0 - y1) * (0.001 + 0.999 * rng::uniform01(g));
        Rect b{x1, y1, x2, y2};
        if (b.area() <= 0.0) continue;
        CropSet s = geometry::map_bbox_to_crops(b);
        REQUIRE_FALSE(s.empty());
        // Coverage guarantee: union(crops) contains b, verified by
        // clipping b out of the union and checking nothing is lost.
        std::vector<Rect> rects;
        for (CropId id : s.ids()) rects.push_back(geometry::crop_rect(id));
        double with = geometry::union_area(rects);
        rects.push_back(b);
        double with_b = geometry::union_area(rects);
        CHECK(with_b == doctest::Approx(with).epsilon(1e-12));
    }
}
