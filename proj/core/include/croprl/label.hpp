// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string_view>

namespace croprl {

/// Routing label for a sample: LR answers at the downsampled view, HR goes
/// through the crop tool first.
enum class Label { LR, HR };

inline std::string_view label_name(Label y) {
    return y == Label::LR ? "LR" : "HR";
}

inline std::optional<Label> label_from_name(std::string_view s) {
    if (s == "LR") return Label::LR;
    if (s == "HR") return Label::HR;
    return std::nullopt;
}

}  // namespace croprl
