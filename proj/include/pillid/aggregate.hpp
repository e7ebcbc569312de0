#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pillid/errors.hpp"

namespace pillid {

struct PredictionRecord {
    int label = -1;
    double confidence = 0.0;
};

struct VerifyThresholds {
    double min_confidence = 0.87; // condition-1 cutoff on the modal class
    double max_gap = 0.1;         // condition-2 cutoff on c_H - c_M
    std::size_t window = 10;      // sorted prefix length considered
};

struct VerificationResult {
    int prediction = -1;
    bool verified = false;
    bool condition1 = false;
    bool condition2 = false;
    std::size_t window_used = 0;
    std::size_t num_predictions = 0;
};

inline nlohmann::json to_json(const VerificationResult& r) {
    return {
        {"condition1", r.condition1},
        {"condition2", r.condition2},
        {"num_predictions", r.num_predictions},
        {"prediction", r.prediction},
        {"verified", r.verified},
        {"window_used", r.window_used},
    };
}

// Rule-based aggregation and verification over per-pill predictions:
// sort by confidence, look at the leading window, pick the modal class M and
// the top-confidence class H, then verify when M clears the confidence
// threshold and is either H itself or within the allowed gap of H.
inline VerificationResult aggregate_verify(std::vector<PredictionRecord> preds,
                                           const VerifyThresholds& t = {}) {
    if (preds.empty())
        throw DegenerateInputError("aggregate_verify: empty prediction list");

    // order: confidence descending; equal confidences stable by label then
    // original position, so the result is independent of input permutation
    std::vector<std::size_t> order(preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (preds[a].confidence != preds[b].confidence)
            return preds[a].confidence > preds[b].confidence;
        return preds[a].label < preds[b].label;
    });

    const std::size_t window = std::min<std::size_t>(t.window, order.size());

    std::map<int, std::size_t> occurrences;
    std::map<int, double> best_confidence;
    for (std::size_t k = 0; k < window; ++k) {
        const auto& p = preds[order[k]];
        occurrences[p.label] += 1;
        auto it = best_confidence.find(p.label);
        if (it == best_confidence.end() || p.confidence > it->second)
            best_confidence[p.label] = p.confidence;
    }

    // modal class; frequency ties toward the higher best-confidence class,
    // then the lower label
    int modal = -1;
    for (const auto& [label, count] : occurrences) {
        if (modal == -1) {
            modal = label;
            continue;
        }
        const std::size_t mc = occurrences[modal];
        if (count > mc ||
            (count == mc && best_confidence[label] > best_confidence[modal]))
            modal = label;
    }

    const auto& top = preds[order[0]];
    VerificationResult r;
    r.prediction = modal;
    r.window_used = window;
    r.num_predictions = preds.size();
    r.condition1 = best_confidence[modal] > t.min_confidence;
    r.condition2 = (modal == top.label) ||
                   (top.confidence - best_confidence[modal] <= t.max_gap);
    r.verified = r.condition1 && r.condition2;
    return r;
}

// Accumulated prediction batches for one device request (one batch per shake).
struct RequestHistory {
    std::string request_id;
    std::vector<std::vector<PredictionRecord>> batches;
};

inline VerificationResult merge_request_history(const RequestHistory& h,
                                                const VerifyThresholds& t = {}) {
    if (h.batches.empty())
        throw DegenerateInputError("merge_request_history: no batches");
    std::vector<PredictionRecord> all;
    for (const auto& batch : h.batches) all.insert(all.end(), batch.begin(), batch.end());
    return aggregate_verify(std::move(all), t);
}

inline nlohmann::json to_json(const RequestHistory& h, const VerificationResult& r) {
    return {
        {"condition1", r.condition1},
        {"condition2", r.condition2},
        {"num_predictions", r.num_predictions},
        {"prediction", r.prediction},
        {"request_id", h.request_id},
        {"verified", r.verified},
    };
}

} // namespace pillid
