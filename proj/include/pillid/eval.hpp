#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pillid/aggregate.hpp"
#include "pillid/classify.hpp"
#include "pillid/encoder.hpp"
#include "pillid/errors.hpp"

namespace pillid {

enum class ClassifierKind { sl, knn };

inline const char* to_string(ClassifierKind k) {
    return k == ClassifierKind::sl ? "sl" : "knn";
}

inline ClassifierKind classifier_from_string(const std::string& s) {
    if (s == "sl") return ClassifierKind::sl;
    if (s == "knn") return ClassifierKind::knn;
    throw ConfigError("unknown classifier: " + s);
}

struct MetricsCounts {
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t verified = 0;
    std::size_t verified_correct = 0;
};

struct MetricsReport {
    double accuracy_all = 0.0;                 // percent
    double ratio_verified = 0.0;               // percent
    std::optional<double> accuracy_verified;   // percent; absent with no verified groups
    double recall_at_1 = 0.0;                  // percent
    MetricsCounts counts;
};

inline nlohmann::json to_json(const MetricsReport& r) {
    return {
        {"accuracy_all", r.accuracy_all},
        {"accuracy_verified",
         r.accuracy_verified ? nlohmann::json(*r.accuracy_verified) : nlohmann::json()},
        {"counts",
         {{"correct", r.counts.correct},
          {"total", r.counts.total},
          {"verified", r.counts.verified},
          {"verified_correct", r.counts.verified_correct}}},
        {"ratio_verified", r.ratio_verified},
        {"recall_at_1", r.recall_at_1},
    };
}

// One evaluation unit: the true class plus the per-pill predictions gathered
// from however many images the grouping policy pooled together.
struct GroupPredictions {
    int true_label = -1;
    std::vector<PredictionRecord> preds;
};

inline MetricsReport tally_groups(const std::vector<GroupPredictions>& groups,
                                  const VerifyThresholds& thresholds) {
    if (groups.empty())
        throw DegenerateInputError("tally_groups: no evaluation groups");
    MetricsReport report;
    for (const auto& group : groups) {
        report.counts.total += 1;
        if (group.preds.empty()) continue; // counted as unverified incorrect
        const VerificationResult v = aggregate_verify(group.preds, thresholds);
        const bool correct = v.prediction == group.true_label;
        report.counts.correct += correct;
        report.counts.verified += v.verified;
        report.counts.verified_correct += v.verified && correct;
    }
    const double total = static_cast<double>(report.counts.total);
    report.accuracy_all = 100.0 * static_cast<double>(report.counts.correct) / total;
    report.ratio_verified = 100.0 * static_cast<double>(report.counts.verified) / total;
    if (report.counts.verified > 0)
        report.accuracy_verified = 100.0 * static_cast<double>(report.counts.verified_correct) /
                                   static_cast<double>(report.counts.verified);
    return report;
}

// Micro accuracy: fraction of eval embeddings whose nearest collection entry
// (excluding an exact copy of the query) carries the same label.
inline double recall_at_1(const EmbeddingCollection& collection,
                          const std::vector<EmbeddingVector>& eval_set) {
    if (collection.empty())
        throw DegenerateInputError("recall_at_1: empty collection");
    if (eval_set.empty())
        throw DegenerateInputError("recall_at_1: empty eval set");
    std::size_t hits = 0;
    for (const auto& e : eval_set) {
        double best = -2.0;
        int best_label = -1;
        for (std::size_t i = 0; i < collection.size(); ++i) {
            auto v = collection.values(i);
            bool exact_self = v.size() == e.values.size();
            for (std::size_t j = 0; exact_self && j < v.size(); ++j)
                exact_self = v[j] == static_cast<float>(e.values[j]);
            if (exact_self) continue;
            const double c = cosine(e.values, collection.entry(i));
            if (c > best) {
                best = c;
                best_label = collection.label(i);
            }
        }
        hits += best_label == e.label;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(eval_set.size());
}

// Classifier context shared by the vial tests.
struct EvalContext {
    const EncoderParams* encoder = nullptr;
    const EmbeddingCollection* collection = nullptr;
    ClassifierKind kind = ClassifierKind::sl;
    std::size_t knn_k = 1;
    SolvedLayer layer; // filled by make_eval_context for the sl classifier
};

inline EvalContext make_eval_context(const EncoderParams& encoder,
                                     const EmbeddingCollection& collection,
                                     ClassifierKind kind, std::size_t knn_k = 1) {
    EvalContext ctx;
    ctx.encoder = &encoder;
    ctx.collection = &collection;
    ctx.kind = kind;
    ctx.knn_k = knn_k;
    if (kind == ClassifierKind::sl) ctx.layer = solve_layer(collection);
    return ctx;
}

inline PredictionRecord predict_crop(const EvalContext& ctx, const SinglePillImage& crop) {
    const EmbeddingVector e = encode(*ctx.encoder, crop);
    return ctx.kind == ClassifierKind::sl ? sl_predict(ctx.layer, e, *ctx.collection)
                                          : knn_predict(*ctx.collection, e, ctx.knn_k);
}

// A group of crops evaluated as one aggregated prediction.
struct SceneGroup {
    int true_label = -1;
    std::vector<SinglePillImage> crops;
};

inline MetricsReport vial_test(const EvalContext& ctx, const std::vector<SceneGroup>& groups,
                               const VerifyThresholds& thresholds) {
    std::vector<GroupPredictions> tallied;
    std::vector<EmbeddingVector> eval_embeddings;
    tallied.reserve(groups.size());
    for (const auto& group : groups) {
        GroupPredictions g;
        g.true_label = group.true_label;
        for (const auto& crop : group.crops) {
            EmbeddingVector e = encode(*ctx.encoder, crop);
            e.label = group.true_label;
            PredictionRecord p = ctx.kind == ClassifierKind::sl
                                     ? sl_predict(ctx.layer, e, *ctx.collection)
                                     : knn_predict(*ctx.collection, e, ctx.knn_k);
            g.preds.push_back(p);
            eval_embeddings.push_back(std::move(e));
        }
        tallied.push_back(std::move(g));
    }
    MetricsReport report = tally_groups(tallied, thresholds);
    if (!eval_embeddings.empty())
        report.recall_at_1 = recall_at_1(*ctx.collection, eval_embeddings);
    return report;
}

} // namespace pillid
