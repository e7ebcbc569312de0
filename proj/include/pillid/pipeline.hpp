#pragma once

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pillid/config.hpp"
#include "pillid/dataset.hpp"
#include "pillid/encoder.hpp"
#include "pillid/eval.hpp"

namespace pillid {

inline bool is_train_pose(const SceneEntry& entry, const RunConfig& cfg) {
    return entry.pose < cfg.poses_per_class - cfg.eval_poses;
}

inline bool in_class_set(int class_id, const std::vector<int>& filter) {
    return filter.empty() ||
           std::find(filter.begin(), filter.end(), class_id) != filter.end();
}

inline std::vector<SinglePillImage> scene_crops(const ImageRgb& raster,
                                                const std::vector<PillInstance>& pills,
                                                const RunConfig& cfg, int scene_id) {
    return extract_single_pills(raster, pills, background_mode_from_string(cfg.background),
                                cfg.crop_size, scene_id)
        .pills;
}

enum class Split { train, eval, all };

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "eval") return Split::eval;
    if (s == "all") return Split::all;
    throw ConfigError("unknown split: " + s);
}

inline bool in_split(const SceneEntry& entry, Split split, const RunConfig& cfg) {
    switch (split) {
        case Split::train: return is_train_pose(entry, cfg);
        case Split::eval: return !is_train_pose(entry, cfg);
        default: return true;
    }
}

// Flattened training pixels from every light render of the selected scenes.
inline PixelDataset build_pixels(const DatasetManifest& manifest, const std::string& dir,
                                 const RunConfig& cfg, Split split,
                                 const std::vector<int>& class_filter = {}) {
    PixelDataset data;
    for (const auto& entry : manifest.scenes) {
        if (!in_split(entry, split, cfg) || !in_class_set(entry.class_id, class_filter))
            continue;
        const LoadedScene scene = load_scene(dir, entry);
        for (const auto& raster : scene.lights)
            for (const auto& crop : scene_crops(raster, scene.pills, cfg, entry.id))
                data.add(crop);
    }
    if (data.size() == 0)
        throw DegenerateInputError("build_pixels: selection matched no pills");
    return data;
}

inline std::unique_ptr<TrainingLoss> make_objective(const RunConfig& cfg) {
    const PalParams pal = cfg.effective_pal();
    if (cfg.loss == "pal") return std::make_unique<ProxyAnchorObjective>(pal);
    return std::make_unique<PalfsObjective>(pal);
}

struct TrainOutput {
    EncoderParams params;
    ProxySet proxies;
    double first_epoch_loss = 0.0;
    double last_epoch_loss = 0.0;
};

// Creates (or continues) the encoder and runs the configured epochs over the
// train split of the selected classes. When `existing_proxies` is given it is
// used as-is, so continual phases keep their freeze pattern.
inline TrainOutput train_pipeline(const DatasetManifest& manifest, const std::string& dir,
                                  const RunConfig& cfg,
                                  const std::vector<int>& class_filter = {},
                                  const EncoderParams* warm_start = nullptr,
                                  const ProxySet* existing_proxies = nullptr) {
    cfg.validate();
    PixelDataset data = build_pixels(manifest, dir, cfg, Split::train, class_filter);

    std::vector<int> class_ids;
    for (const auto& entry : manifest.scenes)
        if (in_class_set(entry.class_id, class_filter))
            if (std::find(class_ids.begin(), class_ids.end(), entry.class_id) ==
                class_ids.end())
                class_ids.push_back(entry.class_id);
    std::sort(class_ids.begin(), class_ids.end());

    RngState root(cfg.seed);
    TrainOutput out;
    if (warm_start) {
        out.params = *warm_start;
    } else {
        EncoderConfig enc;
        enc.input_side = cfg.crop_size;
        enc.hidden = cfg.hidden;
        enc.dim = cfg.embedding_dim;
        RngState params_rng = root.child(1);
        out.params = EncoderParams::init(enc, params_rng);
    }

    if (existing_proxies) {
        out.proxies = *existing_proxies;
    } else {
        RngState proxy_rng = root.child(2);
        out.proxies = create_proxy_set(class_ids.size(), cfg.proxy_dim(), proxy_rng,
                                       cfg.decompose, cfg.proxy_opt);
        out.proxies.labels = class_ids; // proxy rows follow ascending class id
    }

    std::unique_ptr<TrainingLoss> objective = make_objective(cfg);
    SgdOptions opt;
    opt.lr = cfg.lr;
    opt.batch_size = cfg.batch_size;
    RngState shuffle_rng = root.child(3);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double loss =
            train_epoch(out.params, data, *objective, out.proxies, opt, shuffle_rng);
        if (epoch == 0) out.first_epoch_loss = loss;
        out.last_epoch_loss = loss;
    }
    return out;
}

inline EmbeddingCollection build_collection(const EncoderParams& params,
                                            const DatasetManifest& manifest,
                                            const std::string& dir, const RunConfig& cfg,
                                            Split split,
                                            const std::vector<int>& class_filter = {}) {
    EmbeddingCollection collection(cfg.embedding_dim);
    for (const auto& entry : manifest.scenes) {
        if (!in_split(entry, split, cfg) || !in_class_set(entry.class_id, class_filter))
            continue;
        const LoadedScene scene = load_scene(dir, entry);
        for (const auto& raster : scene.lights)
            for (const auto& crop : scene_crops(raster, scene.pills, cfg, entry.id))
                collection.add(encode(params, crop));
    }
    if (collection.empty())
        throw DegenerateInputError("build_collection: selection matched no pills");
    return collection;
}

enum class Grouping { single, multiple };

// single: one group per (scene, light); multiple: one group per scene pooling
// all light renders. merge_poses additionally pools every eval scene of a
// class into one group (the shake loop stand-in).
inline std::vector<SceneGroup> make_eval_groups(const DatasetManifest& manifest,
                                                const std::string& dir, const RunConfig& cfg,
                                                Grouping grouping, Split split,
                                                const std::vector<int>& class_filter = {},
                                                bool merge_poses = false) {
    std::vector<SceneGroup> groups;
    std::map<int, std::size_t> class_group; // for merge_poses
    for (const auto& entry : manifest.scenes) {
        if (!in_split(entry, split, cfg) || !in_class_set(entry.class_id, class_filter))
            continue;
        const LoadedScene scene = load_scene(dir, entry);
        if (grouping == Grouping::single) {
            for (const auto& raster : scene.lights) {
                SceneGroup g;
                g.true_label = entry.class_id;
                g.crops = scene_crops(raster, scene.pills, cfg, entry.id);
                groups.push_back(std::move(g));
            }
            continue;
        }
        SceneGroup* target = nullptr;
        if (merge_poses) {
            auto it = class_group.find(entry.class_id);
            if (it == class_group.end()) {
                class_group[entry.class_id] = groups.size();
                groups.push_back(SceneGroup{entry.class_id, {}});
            }
            target = &groups[class_group[entry.class_id]];
        } else {
            groups.push_back(SceneGroup{entry.class_id, {}});
            target = &groups.back();
        }
        for (const auto& raster : scene.lights) {
            auto crops = scene_crops(raster, scene.pills, cfg, entry.id);
            target->crops.insert(target->crops.end(),
                                 std::make_move_iterator(crops.begin()),
                                 std::make_move_iterator(crops.end()));
        }
    }
    if (groups.empty())
        throw DegenerateInputError("make_eval_groups: selection matched no scenes");
    return groups;
}

inline MetricsReport run_vial_eval(const EncoderParams& params,
                                   const EmbeddingCollection& collection,
                                   const RunConfig& cfg,
                                   const std::vector<SceneGroup>& groups) {
    const EvalContext ctx = make_eval_context(
        params, collection, classifier_from_string(cfg.classifier), cfg.knn_k);
    return vial_test(ctx, groups, cfg.thresholds);
}

// --- the class-incremental protocol -------------------------------------------

struct ContinualRow {
    std::string train;      // which half the encoder was trained on last
    std::string collection; // which half provided the reference embeddings
    std::string test;       // which half was evaluated
    MetricsReport report;
};

struct ContinualReport {
    std::vector<int> half1;
    std::vector<int> half2;
    std::vector<ContinualRow> rows; // 4 rows
};

inline nlohmann::json to_json(const ContinualReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"collection", row.collection},
                        {"report", to_json(row.report)},
                        {"test", row.test},
                        {"train", row.train}});
    return {{"half1", r.half1}, {"half2", r.half2}, {"rows", rows}};
}

inline std::pair<std::vector<int>, std::vector<int>> split_halves(
    const DatasetManifest& manifest) {
    std::set<int> ids;
    for (const auto& c : manifest.classes) ids.insert(c.class_id);
    std::vector<int> all(ids.begin(), ids.end());
    const std::size_t half = all.size() / 2;
    std::vector<int> h1(all.begin(), all.begin() + half);
    std::vector<int> h2(all.begin() + half, all.end());
    return {h1, h2};
}

// Train on half 1; evaluate both halves zero-shot; add proxies for half 2 and
// retrain on half 2 only (old proxies frozen), then enhance; re-evaluate.
inline ContinualReport continual_protocol(const DatasetManifest& manifest,
                                          const std::string& dir, const RunConfig& cfg,
                                          ProxySet* final_proxies = nullptr) {
    auto [half1, half2] = split_halves(manifest);
    if (half1.size() < 2 || half2.size() < 2)
        throw ConfigError("continual protocol: need at least 2 classes per half");
    for (int id : half1)
        if (std::find(half2.begin(), half2.end(), id) != half2.end())
            throw ConfigError("continual protocol: halves share classes");

    ContinualReport report;
    report.half1 = half1;
    report.half2 = half2;

    // phase 1: train on half 1
    TrainOutput phase1 = train_pipeline(manifest, dir, cfg, half1);

    EmbeddingCollection col1 =
        build_collection(phase1.params, manifest, dir, cfg, Split::train, half1);
    report.rows.push_back(
        {"half1", "half1", "half1",
         run_vial_eval(phase1.params, col1, cfg,
                       make_eval_groups(manifest, dir, cfg, Grouping::multiple, Split::eval,
                                        half1))});

    // zero-shot on half 2: collection from the untrained-on classes
    EmbeddingCollection col2_zero =
        build_collection(phase1.params, manifest, dir, cfg, Split::train, half2);
    report.rows.push_back(
        {"half1", "half2", "half2",
         run_vial_eval(phase1.params, col2_zero, cfg,
                       make_eval_groups(manifest, dir, cfg, Grouping::multiple, Split::eval,
                                        half2))});

    // proxy addition: candidates from the zero-shot class means, old frozen
    ProxySet grown = add_proxies(phase1.proxies, col2_zero, cfg.proxy_opt.steps,
                                 cfg.proxy_opt.lr, cfg.proxy_opt);

    // phase 2: retrain on half 2 only (new proxies trainable, old frozen).
    // The smaller step size keeps the shared features serviceable for the
    // frozen half while the new classes converge.
    RunConfig phase2_cfg = cfg;
    phase2_cfg.seed = RngState(cfg.seed).child(17).seed();
    phase2_cfg.lr = cfg.lr * cfg.continual_lr_scale;
    TrainOutput phase2 =
        train_pipeline(manifest, dir, phase2_cfg, half2, &phase1.params, &grown);

    ProxySet enhanced =
        enhance_proxies(phase2.proxies, cfg.proxy_opt.steps, cfg.proxy_opt.lr, cfg.proxy_opt);
    if (final_proxies) *final_proxies = enhanced;

    EmbeddingCollection col1_post =
        build_collection(phase2.params, manifest, dir, cfg, Split::train, half1);
    report.rows.push_back(
        {"half2", "half1", "half1",
         run_vial_eval(phase2.params, col1_post, cfg,
                       make_eval_groups(manifest, dir, cfg, Grouping::multiple, Split::eval,
                                        half1))});

    EmbeddingCollection col2_post =
        build_collection(phase2.params, manifest, dir, cfg, Split::train, half2);
    report.rows.push_back(
        {"half2", "half2", "half2",
         run_vial_eval(phase2.params, col2_post, cfg,
                       make_eval_groups(manifest, dir, cfg, Grouping::multiple, Split::eval,
                                        half2))});
    return report;
}

// --- the unknown-class protocol ------------------------------------------------

struct UnknownRow {
    std::string train;
    std::string collection;
    std::string test;
    double ratio_verified = 0.0;
    double accuracy_all = 0.0;
    nlohmann::json accuracy_verified; // null when no prediction was verified
};

struct UnknownReport {
    std::vector<UnknownRow> rows; // one per direction
    double average_ratio_verified = 0.0;
};

inline nlohmann::json to_json(const UnknownReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"accuracy_all", row.accuracy_all},
                        {"accuracy_verified", row.accuracy_verified},
                        {"collection", row.collection},
                        {"ratio_verified", row.ratio_verified},
                        {"test", row.test},
                        {"train", row.train}});
    return {{"average_ratio_verified", r.average_ratio_verified}, {"rows", rows}};
}

// Train on one half, build its collection, and query with the other half's
// scenes; repeat in the opposite direction and average the verified ratio.
inline UnknownReport unknown_class_protocol(const DatasetManifest& manifest,
                                            const std::string& dir, const RunConfig& cfg) {
    auto [half1, half2] = split_halves(manifest);
    if (half1.empty() || half2.empty())
        throw ConfigError("unknown protocol: need at least 2 classes");
    for (int id : half1)
        if (std::find(half2.begin(), half2.end(), id) != half2.end())
            throw ConfigError("unknown protocol: halves overlap");

    UnknownReport report;
    auto run_direction = [&](const std::vector<int>& train_half,
                             const std::vector<int>& test_half, const std::string& train_name,
                             const std::string& test_name) {
        TrainOutput trained = train_pipeline(manifest, dir, cfg, train_half);
        EmbeddingCollection collection =
            build_collection(trained.params, manifest, dir, cfg, Split::train, train_half);
        const MetricsReport m =
            run_vial_eval(trained.params, collection, cfg,
                          make_eval_groups(manifest, dir, cfg, Grouping::multiple, Split::all,
                                           test_half));
        UnknownRow row;
        row.train = train_name;
        row.collection = train_name;
        row.test = test_name;
        row.ratio_verified = m.ratio_verified;
        row.accuracy_all = m.accuracy_all;
        row.accuracy_verified =
            m.accuracy_verified ? nlohmann::json(*m.accuracy_verified) : nlohmann::json();
        report.rows.push_back(std::move(row));
    };
    run_direction(half1, half2, "half1", "half2");
    run_direction(half2, half1, "half2", "half1");
    report.average_ratio_verified =
        (report.rows[0].ratio_verified + report.rows[1].ratio_verified) / 2.0;
    return report;
}

} // namespace pillid
