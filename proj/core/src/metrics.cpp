// SPDX-License-Identifier: Apache-2.0
#include "croprl/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace croprl::metrics {

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

double f1_score(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

CallConfusion call_confusion(std::span<const EvalRecord> records) {
    if (records.empty()) throw std::invalid_argument("call_confusion needs records");
    CallConfusion c;
    for (const EvalRecord& r : records) {
        bool called = !r.predicted_crops.empty();
        bool hr = r.label == Label::HR;
        if (called && hr) ++c.tp;
        else if (called) ++c.fp;
        else if (hr) ++c.fn;
        else ++c.tn;
    }
    if (c.tp + c.fp > 0) c.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
    if (c.tp + c.fn > 0) c.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
    if (c.fp + c.tn > 0) c.fpr = static_cast<double>(c.fp) / (c.fp + c.tn);
    if (c.precision && c.recall) c.f1 = f1_score(*c.precision, *c.recall);
    return c;
}

RegionMatch region_match(const geometry::CropSet& pred, const geometry::CropSet& target) {
    if (pred.empty() || target.empty()) {
        throw std::invalid_argument("region_match needs non-empty crop sets");
    }
    RegionMatch m;
    for (geometry::CropId p : pred.ids()) {
        const geometry::Rect& pr = geometry::crop_rect(p);
        for (geometry::CropId t : target.ids()) {
            const geometry::Rect& tr = geometry::crop_rect(t);
            if (pr == tr) m.exact = true;
            if (geometry::rect_iou(pr, tr) >= 0.25) m.relaxed = true;
        }
    }
    return m;
}

JudgeAgreement judge_agreement(std::span<const Label> a, std::span<const Label> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("judge_agreement needs equal-length labelings");
    }
    if (a.empty()) throw std::invalid_argument("judge_agreement needs labels");
    int counts[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < a.size(); ++i) {
        counts[a[i] == Label::HR ? 1 : 0][b[i] == Label::HR ? 1 : 0] += 1;
    }
    JudgeAgreement out;
    double n = static_cast<double>(a.size());
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            out.matrix[i][j] = 100.0 * counts[i][j] / n;
        }
    }
    out.agreement = out.matrix[0][0] + out.matrix[1][1];
    return out;
}

CdpReport eval_report(std::span<const EvalRecord> records) {
    if (records.empty()) throw std::invalid_argument("eval_report needs records");
    CdpReport rep;
    rep.count = static_cast<int>(records.size());

    std::vector<tokens::TokenAccount> accounts;
    accounts.reserve(records.size());
    int correct = 0;
    int called = 0;
    double area_sum = 0.0;
    int matched_pairs = 0;
    int exact = 0;
    int relaxed = 0;
    for (const EvalRecord& r : records) {
        accounts.push_back(r.account);
        if (r.correct) ++correct;
        if (!r.predicted_crops.empty()) {
            ++called;
            area_sum += geometry::crop_set_area(r.predicted_crops);
            if (!r.target_crops.empty()) {
                ++matched_pairs;
                RegionMatch m = region_match(r.predicted_crops, r.target_crops);
                if (m.exact) ++exact;
                if (m.relaxed) ++relaxed;
            }
        }
    }
    rep.accuracy = static_cast<double>(correct) / rep.count;
    rep.rtr = tokens::rtr_aggregate(accounts);
    rep.call_rate = static_cast<double>(called) / rep.count;

    CallConfusion c = call_confusion(records);
    rep.precision = c.precision;
    rep.recall = c.recall;
    rep.f1 = c.f1;
    rep.fpr = c.fpr;

    if (called > 0) rep.avg_called_area = area_sum / called;
    if (matched_pairs > 0) {
        rep.exact_match_rate = static_cast<double>(exact) / matched_pairs;
        rep.relaxed_match_rate = static_cast<double>(relaxed) / matched_pairs;
    }
    return rep;
}

std::string report_to_json(const CdpReport& r) {
    nlohmann::json j;
    j["count"] = r.count;
    j["accuracy"] = r.accuracy;
    j["rtr"] = r.rtr;
    j["call_rate"] = r.call_rate;
    j["call_precision"] = opt_json(r.precision);
    j["call_recall"] = opt_json(r.recall);
    j["call_f1"] = opt_json(r.f1);
    j["call_fpr"] = opt_json(r.fpr);
    j["exact_match_rate"] = opt_json(r.exact_match_rate);
    j["relaxed_match_rate"] = opt_json(r.relaxed_match_rate);
    j["avg_called_area"] = opt_json(r.avg_called_area);
    return j.dump(2);
}

std::string report_to_table(const CdpReport& r) {
    struct Row {
        const char* name;
        std::string value;
    };
    auto opt = [](const std::optional<double>& v) {
        return v ? fmt(*v) : std::string("-");
    };
    std::vector<Row> rows{
        {"samples", std::to_string(r.count)},
        {"accuracy", fmt(r.accuracy)},
        {"rtr", fmt(r.rtr)},
        {"call_rate", fmt(r.call_rate)},
        {"call_precision", opt(r.precision)},
        {"call_recall", opt(r.recall)},
        {"call_f1", opt(r.f1)},
        {"call_fpr", opt(r.fpr)},
        {"exact_match_rate", opt(r.exact_match_rate)},
        {"relaxed_match_rate", opt(r.relaxed_match_rate)},
        {"avg_called_area", opt(r.avg_called_area)},
    };
    std::size_t width = 0;
    for (const Row& row : rows) width = std::max(width, std::string(row.name).size());
    std::string out;
    for (const Row& row : rows) {
        std::string name = row.name;
        name.resize(width, ' ');
        out += name + "  " + row.value + "\n";
    }
    return out;
}

}  // namespace croprl::metrics
