// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>

#include "croprl/geometry.hpp"
#include "croprl/label.hpp"
#include "croprl/tokens.hpp"

namespace croprl::metrics {

/// One evaluated trajectory.
struct EvalRecord {
    std::string sample_id;
    Label label = Label::LR;
    geometry::CropSet predicted_crops;  // empty = answered directly
    geometry::CropSet target_crops;     // oracle targets; may be unknown/empty
    bool correct = false;
    tokens::TokenAccount account;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

/// Call-decision confusion over the positive class "label is HR" with
/// prediction "requested at least one crop". Rates with a zero
/// denominator are absent, never coerced.
struct CallConfusion {
    int tp = 0;  // HR, called
    int fp = 0;  // LR, called
    int fn = 0;  // HR, direct answer
    int tn = 0;  // LR, direct answer
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> fpr;
};

CallConfusion call_confusion(std::span<const EvalRecord> records);

struct RegionMatch {
    bool exact = false;    // some predicted rect equals some target rect
    bool relaxed = false;  // some cross pair has IoU >= 0.25
};

/// Both sets must be non-empty.
RegionMatch region_match(const geometry::CropSet& pred, const geometry::CropSet& target);

/// 2x2 joint percentage matrix between two labelings of the same samples;
/// index 0 = LR, 1 = HR, rows = first labeling. agreement = diagonal sum.
struct JudgeAgreement {
    std::array<std::array<double, 2>, 2> matrix{};
    double agreement = 0.0;
};

JudgeAgreement judge_agreement(std::span<const Label> a, std::span<const Label> b);

struct CdpReport {
    int count = 0;
    double accuracy = 0.0;
    double rtr = 0.0;
    double call_rate = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> fpr;
    // Over called records that have a non-empty target set.
    std::optional<double> exact_match_rate;
    std::optional<double> relaxed_match_rate;
    // Mean requested area over called records only.
    std::optional<double> avg_called_area;
};

/// Aggregates accuracy, token ratio, call metrics and region metrics.
/// Empty input is an error.
CdpReport eval_report(std::span<const EvalRecord> records);

/// Sorted-key JSON object; absent rates serialize as null.
std::string report_to_json(const CdpReport& r);

/// Two-column aligned text table; absent rates print as "-".
std::string report_to_table(const CdpReport& r);

}  // namespace croprl::metrics
