// SPDX-License-Identifier: Apache-2.0
#include "croprl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace croprl::geometry {

namespace {
constexpr double kEps = 1e-12;
}

bool Rect::contains(const Rect& o) const {
    return x1 <= o.x1 + kEps && y1 <= o.y1 + kEps &&
           o.x2 <= x2 + kEps && o.y2 <= y2 + kEps;
}

bool Rect::contains_point_strict(double px, double py) const {
    return x1 < px && px < x2 && y1 < py && py < y2;
}

void validate_rect(const Rect& r) {
    if (!std::isfinite(r.x1) || !std::isfinite(r.y1) ||
        !std::isfinite(r.x2) || !std::isfinite(r.y2)) {
        throw std::invalid_argument("rect has non-finite coordinates");
    }
    if (r.x1 < -kEps || r.y1 < -kEps || r.x2 > 1.0 + kEps || r.y2 > 1.0 + kEps) {
        throw std::invalid_argument("rect coordinates outside [0, 1]");
    }
    if (!(r.x1 < r.x2) || !(r.y1 < r.y2)) {
        throw std::invalid_argument("rect is degenerate (zero or negative area)");
    }
}

std::string_view crop_id_name(CropId id) {
    static constexpr std::string_view names[kCropCount] = {
        "0", "1", "2", "3", "4", "5", "6", "7", "8", "all"};
    return names[static_cast<int>(id)];
}

std::optional<CropId> crop_id_from_name(std::string_view name) {
    if (name == "all") return CropId::all;
    if (name.size() == 1 && name[0] >= '0' && name[0] <= '8') {
        return static_cast<CropId>(name[0] - '0');
    }
    return std::nullopt;
}

const std::array<CropCandidate, kCropCount>& candidate_crops() {
    static const std::array<CropCandidate, kCropCount> table = {{
        {CropId::top_left, {0.00, 0.00, 0.50, 0.50}},
        {CropId::top_right, {0.50, 0.00, 1.00, 0.50}},
        {CropId::bottom_left, {0.00, 0.50, 0.50, 1.00}},
        {CropId::bottom_right, {0.50, 0.50, 1.00, 1.00}},
        {CropId::center, {0.25, 0.25, 0.75, 0.75}},
        {CropId::top, {0.00, 0.00, 1.00, 0.50}},
        {CropId::bottom, {0.00, 0.50, 1.00, 1.00}},
        {CropId::left, {0.00, 0.00, 0.50, 1.00}},
        {CropId::right, {0.50, 0.00, 1.00, 1.00}},
        {CropId::all, {0.00, 0.00, 1.00, 1.00}},
    }};
    return table;
}

const Rect& crop_rect(CropId id) {
    return candidate_crops()[static_cast<int>(id)].rect;
}

CropSet CropSet::from_mask(std::uint16_t mask) {
    if (mask >= (1u << kCropCount)) {
        throw std::invalid_argument("crop set mask out of range");
    }
    CropSet s;
    s.mask_ = mask;
    return s;
}

int CropSet::size() const {
    int n = 0;
    for (int i = 0; i < kCropCount; ++i) n += (mask_ >> i) & 1;
    return n;
}

std::vector<CropId> CropSet::ids() const {
    std::vector<CropId> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (int i = 0; i < kCropCount; ++i) {
        if ((mask_ >> i) & 1) out.push_back(static_cast<CropId>(i));
    }
    return out;
}

std::vector<std::string> CropSet::names() const {
    std::vector<std::string> out;
    for (CropId id : ids()) out.emplace_back(crop_id_name(id));
    return out;
}

std::optional<CropSet> CropSet::from_names(std::span<const std::string> names) {
    CropSet s;
    for (const std::string& n : names) {
        auto id = crop_id_from_name(n);
        if (!id) return std::nullopt;
        s.insert(*id);
    }
    return s;
}

double rect_iou(const Rect& a, const Rect& b) {
    validate_rect(a);
    validate_rect(b);
    double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return inter / uni;
}

double union_area(std::span<const Rect> rects) {
    std::vector<double> xs, ys;
    for (const Rect& r : rects) {
        if (r.x2 - r.x1 <= 0.0 || r.y2 - r.y1 <= 0.0) continue;
        xs.push_back(r.x1);
        xs.push_back(r.x2);
        ys.push_back(r.y1);
        ys.push_back(r.y2);
    }
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
            for (const Rect& r : rects) {
                if (r.x1 <= xs[i] && xs[i + 1] <= r.x2 &&
                    r.y1 <= ys[j] && ys[j + 1] <= r.y2) {
                    total += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
                    break;
                }
            }
        }
    }
    return total;
}

namespace {

void validate_mapping_config(const MappingConfig& cfg) {
    if (!(cfg.tau > 0.0) || !(cfg.tau <= 1.0)) {
        throw std::invalid_argument("mapping tau must be in (0, 1]");
    }
}

/// Area of the part of b covered by the given candidate ids.
double covered_area(const Rect& b, const CropSet& s) {
    std::vector<Rect> clipped;
    for (CropId id : s.ids()) {
        const Rect& c = crop_rect(id);
        Rect k{std::max(b.x1, c.x1), std::max(b.y1, c.y1),
               std::min(b.x2, c.x2), std::min(b.y2, c.y2)};
        if (k.x2 - k.x1 > 0.0 && k.y2 - k.y1 > 0.0) clipped.push_back(k);
    }
    return union_area(clipped);
}

CropSet smallest_containing(const Rect& b) {
    const auto& cands = candidate_crops();
    const CropCandidate* best = nullptr;
    for (const CropCandidate& c : cands) {
        if (!c.rect.contains(b)) continue;
        if (best == nullptr || c.rect.area() < best->rect.area()) best = &c;
    }
    // "all" contains every valid b, so best is never null.
    return CropSet{best->id};
}

}  // namespace

CropSet eligible_crops(const Rect& b, const MappingConfig& cfg) {
    validate_rect(b);
    validate_mapping_config(cfg);
    CropSet s;
    for (const CropCandidate& c : candidate_crops()) {
        if (rect_iou(b, c.rect) >= cfg.tau) s.insert(c.id);
    }
    return s;
}

CropSet map_bbox_to_crops(const Rect& b, const MappingConfig& cfg) {
    CropSet s = eligible_crops(b, cfg);

    if (!s.empty()) {
        std::vector<CropId> members = s.ids();
        std::vector<double> iou(members.size());
        for (std::size_t i = 0; i < members.size(); ++i) {
            iou[i] = rect_iou(b, crop_rect(members[i]));
        }
        std::vector<bool> dropped(members.size(), false);
        for (std::size_t i = 0; i < members.size(); ++i) {
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                const Rect& ri = crop_rect(members[i]);
                const Rect& rj = crop_rect(members[j]);
                bool i_in_j = rj.contains(ri) && ri.area() < rj.area();
                bool j_in_i = ri.contains(rj) && rj.area() < ri.area();
                if (!i_in_j && !j_in_i) continue;
                std::size_t inner = i_in_j ? i : j;
                std::size_t outer = i_in_j ? j : i;
                if (iou[inner] < iou[outer]) {
                    dropped[inner] = true;
                } else if (iou[outer] < iou[inner]) {
                    dropped[outer] = true;
                } else {
                    dropped[outer] = true;  // tie: drop the larger
                }
            }
        }
        CropSet pruned;
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (!dropped[i]) pruned.insert(members[i]);
        }
        s = pruned;
    }

    if (s.empty() || covered_area(b, s) < b.area() - 1e-9) {
        return smallest_containing(b);
    }
    return s;
}

double crop_set_area(const CropSet& crops) {
    std::vector<Rect> rects;
    for (CropId id : crops.ids()) rects.push_back(crop_rect(id));
    return union_area(rects);
}

}  // namespace croprl::geometry
