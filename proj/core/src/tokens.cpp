// SPDX-License-Identifier: Apache-2.0
#include "croprl/tokens.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace croprl::tokens {

void validate_dims(const ImageDims& d) {
    if (d.width < 1 || d.height < 1) {
        throw std::invalid_argument("image dims must be at least 1x1");
    }
}

ImageDims cap_resolution(ImageDims d, std::int64_t max_side) {
    validate_dims(d);
    if (max_side < 1) throw std::invalid_argument("max_side must be positive");
    d.width = std::min(d.width, max_side);
    d.height = std::min(d.height, max_side);
    return d;
}

std::int64_t visual_tokens(const ImageDims& d, const TokenModel& tm) {
    validate_dims(d);
    if (tm.token_stride < 1) throw std::invalid_argument("token stride must be positive");
    if (tm.min_tokens && tm.max_tokens && *tm.min_tokens > *tm.max_tokens) {
        throw std::invalid_argument("min_tokens exceeds max_tokens");
    }
    std::int64_t s = tm.token_stride;
    std::int64_t n = ((d.width + s - 1) / s) * ((d.height + s - 1) / s);
    if (tm.min_tokens) n = std::max(n, *tm.min_tokens);
    if (tm.max_tokens) n = std::min(n, *tm.max_tokens);
    return n;
}

ImageDims low_res_dims(const ImageDims& d) {
    validate_dims(d);
    return {(d.width + 1) / 2, (d.height + 1) / 2};
}

ImageDims crop_pixel_dims(const geometry::Rect& r, const ImageDims& full) {
    geometry::validate_rect(r);
    validate_dims(full);
    auto side = [](double frac, std::int64_t px) {
        return std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::ceil(frac * static_cast<double>(px) - 1e-9)));
    };
    return {side(r.width(), full.width), side(r.height(), full.height)};
}

TokenAccount rtr_sample(std::span<const ImageDims> turn_dims,
                        const ImageDims& full, const TokenModel& tm) {
    if (turn_dims.empty()) {
        throw std::invalid_argument("rtr_sample needs at least one processed image");
    }
    TokenAccount acc;
    acc.t_full = visual_tokens(full, tm);
    acc.t_sample = 0;
    for (const ImageDims& d : turn_dims) acc.t_sample += visual_tokens(d, tm);
    acc.rtr = static_cast<double>(acc.t_sample) / static_cast<double>(acc.t_full);
    return acc;
}

double rtr_aggregate(std::span<const TokenAccount> accounts) {
    if (accounts.empty()) throw std::invalid_argument("rtr_aggregate over empty set");
    double sum = 0.0;
    for (const TokenAccount& a : accounts) sum += a.rtr;
    return sum / static_cast<double>(accounts.size());
}

}  // namespace croprl::tokens
