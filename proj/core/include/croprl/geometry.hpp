// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace croprl::geometry {

/// Axis-aligned rectangle in normalized image coordinates, corners
/// (x1, y1) top-left and (x2, y2) bottom-right, all in [0, 1].
struct Rect {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    /// Closed containment: edges touching still count.
    bool contains(const Rect& o) const;
    /// Open-interior point test: boundary points do not count.
    bool contains_point_strict(double px, double py) const;

    bool operator==(const Rect&) const = default;
};

/// Throws std::invalid_argument for zero-area, inverted, non-finite or
/// out-of-range rects.
void validate_rect(const Rect& r);

/// The fixed crop vocabulary. Numeric ids keep their wire order; "all" is
/// the full frame and always sorts last.
enum class CropId : std::uint8_t {
    top_left = 0,
    top_right = 1,
    bottom_left = 2,
    bottom_right = 3,
    center = 4,
    top = 5,
    bottom = 6,
    left = 7,
    right = 8,
    all = 9,
};

inline constexpr int kCropCount = 10;

/// Wire name: "0".."8" or "all".
std::string_view crop_id_name(CropId id);
std::optional<CropId> crop_id_from_name(std::string_view name);

struct CropCandidate {
    CropId id;
    Rect rect;
};

const std::array<CropCandidate, kCropCount>& candidate_crops();
const Rect& crop_rect(CropId id);

/// Deduplicated set of crop ids with canonical iteration order
/// (ascending numeric ids, then "all").
class CropSet {
public:
    CropSet() = default;
    CropSet(std::initializer_list<CropId> ids) {
        for (CropId id : ids) insert(id);
    }

    static CropSet from_mask(std::uint16_t mask);

    void insert(CropId id) { mask_ |= static_cast<std::uint16_t>(1u << static_cast<int>(id)); }
    bool contains(CropId id) const { return (mask_ >> static_cast<int>(id)) & 1u; }
    bool empty() const { return mask_ == 0; }
    int size() const;
    std::uint16_t mask() const { return mask_; }

    std::vector<CropId> ids() const;
    std::vector<std::string> names() const;
    /// Rejects unknown names; duplicates collapse.
    static std::optional<CropSet> from_names(std::span<const std::string> names);

    bool operator==(const CropSet&) const = default;

private:
    std::uint16_t mask_ = 0;
};

struct MappingConfig {
    double tau = 0.5;  // IoU eligibility threshold, inclusive
};

/// Intersection over union. Both rects must be valid.
double rect_iou(const Rect& a, const Rect& b);

/// Exact union area of a rect list via coordinate compression. Rects with
/// non-positive extent are ignored.
double union_area(std::span<const Rect> rects);

/// Eligibility scan only: every candidate with IoU(b, c) >= tau.
CropSet eligible_crops(const Rect& b, const MappingConfig& cfg = {});

/// Full bbox-to-crops mapping: eligibility scan, containment pruning
/// (a nested pair keeps the higher-IoU member, ties drop the larger),
/// then coverage repair to the smallest containing candidate when the
/// surviving union misses part of b.
CropSet map_bbox_to_crops(const Rect& b, const MappingConfig& cfg = {});

/// Union area of the selected candidate rects; empty set has area 0.
double crop_set_area(const CropSet& crops);

}  // namespace croprl::geometry
