// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "croprl/geometry.hpp"

namespace croprl::tokens {

struct ImageDims {
    std::int64_t width = 0;
    std::int64_t height = 0;

    bool operator==(const ImageDims&) const = default;
};

void validate_dims(const ImageDims& d);

/// Clamp each side to max_side, preserving nothing but the bound itself
/// (aspect is already irrelevant to token counting).
ImageDims cap_resolution(ImageDims d, std::int64_t max_side);

struct TokenModel {
    std::int64_t token_stride = 28;
    std::optional<std::int64_t> min_tokens;
    std::optional<std::int64_t> max_tokens;
};

/// Per-image visual token count: ceil(w/stride) * ceil(h/stride), then
/// clamped to [min_tokens, max_tokens] when set. Partial tiles cost a
/// full token.
std::int64_t visual_tokens(const ImageDims& d, const TokenModel& tm = {});

/// Ceiling halving of both sides.
ImageDims low_res_dims(const ImageDims& d);

/// Pixel extent of a normalized crop rect rendered at the full image's
/// native density; fractional extents round up and never drop below 1px.
ImageDims crop_pixel_dims(const geometry::Rect& r, const ImageDims& full);

struct TokenAccount {
    std::int64_t t_sample = 0;
    std::int64_t t_full = 1;
    double rtr = 0.0;
};

/// Relative token ratio for one trajectory: t_sample sums the visual
/// tokens of every image the trajectory processed (turn_dims, flattened
/// across turns), t_full is the full-resolution single-pass cost.
TokenAccount rtr_sample(std::span<const ImageDims> turn_dims,
                        const ImageDims& full, const TokenModel& tm = {});

/// Mean rtr over per-sample accounts. Empty input is an error.
double rtr_aggregate(std::span<const TokenAccount> accounts);

}  // namespace croprl::tokens
