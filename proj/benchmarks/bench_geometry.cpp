// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "croprl/geometry.hpp"
#include "croprl/rng.hpp"

namespace {

using namespace croprl;

std::vector<geometry::Rect> random_bboxes(int n) {
    auto g = rng::substream(7, 0xBE9C, 1);
    std::vector<geometry::Rect> out;
    out.reserve(n);
    while (static_cast<int>(out.size()) < n) {
        double x1 = rng::uniform01(g) * 0.9;
        double y1 = rng::uniform01(g) * 0.9;
        double x2 = x1 + 0.05 + rng::uniform01(g) * (1.0 - x1 - 0.05);
        double y2 = y1 + 0.05 + rng::uniform01(g) * (1.0 - y1 - 0.05);
        out.push_back({x1, y1, x2, y2});
    }
    return out;
}

void BM_MapBboxToCrops(benchmark::State& state) {
    auto boxes = random_bboxes(1024);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(geometry::map_bbox_to_crops(boxes[i++ & 1023]));
    }
}
BENCHMARK(BM_MapBboxToCrops);

void BM_EligibleCrops(benchmark::State& state) {
    auto boxes = random_bboxes(1024);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(geometry::eligible_crops(boxes[i++ & 1023]));
    }
}
BENCHMARK(BM_EligibleCrops);

void BM_CropSetArea(benchmark::State& state) {
    std::uint16_t mask = 1;
    for (auto _ : state) {
        mask = static_cast<std::uint16_t>((mask + 1) & 1023);
        benchmark::DoNotOptimize(
            geometry::crop_set_area(geometry::CropSet::from_mask(mask)));
    }
}
BENCHMARK(BM_CropSetArea);

}  // namespace

BENCHMARK_MAIN();
