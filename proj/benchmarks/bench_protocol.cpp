// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "croprl/geometry.hpp"
#include "croprl/protocol.hpp"

namespace {

using namespace croprl;

void BM_EmitToolCall(benchmark::State& state) {
    std::uint16_t mask = 1;
    for (auto _ : state) {
        mask = static_cast<std::uint16_t>(mask % 1023 + 1);
        benchmark::DoNotOptimize(
            protocol::emit_tool_call(geometry::CropSet::from_mask(mask)));
    }
}
BENCHMARK(BM_EmitToolCall);

void BM_ParseStrict(benchmark::State& state) {
    std::vector<std::string> inputs;
    for (std::uint16_t m = 1; m < 1024; ++m) {
        inputs.push_back(protocol::emit_tool_call(geometry::CropSet::from_mask(m)));
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(protocol::parse_first_turn(inputs[i++ % inputs.size()]));
    }
}
BENCHMARK(BM_ParseStrict);

void BM_ParseRecovery(benchmark::State& state) {
    const std::string sloppy = "Sure - GET_CROPS: [0, \"4\", 'all'] should help.";
    for (auto _ : state) {
        benchmark::DoNotOptimize(protocol::parse_first_turn(sloppy));
    }
}
BENCHMARK(BM_ParseRecovery);

void BM_ParseDirectAnswer(benchmark::State& state) {
    const std::string prose = "The shipment total shown in the table is 1,284 units.";
    for (auto _ : state) {
        benchmark::DoNotOptimize(protocol::parse_first_turn(prose));
    }
}
BENCHMARK(BM_ParseDirectAnswer);

}  // namespace

BENCHMARK_MAIN();
