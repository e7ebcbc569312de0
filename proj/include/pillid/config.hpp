#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "pillid/aggregate.hpp"
#include "pillid/errors.hpp"
#include "pillid/eval.hpp"
#include "pillid/loss.hpp"
#include "pillid/preprocess.hpp"
#include "pillid/proxy.hpp"

namespace pillid {

// Consolidated run configuration. JSON file first, then CLI flag overrides.
struct RunConfig {
    std::uint64_t seed = 42;
    std::size_t embedding_dim = 32; // D
    std::size_t hidden = 64;        // H
    int epochs = 20;
    double lr = 1e-2;
    std::size_t batch_size = 32;

    std::string loss = "pal"; // pal | palfs | palfs_weighted
    PalParams pal;

    std::string classifier = "sl"; // sl | knn
    std::size_t knn_k = 1;
    VerifyThresholds thresholds;

    std::string dataset_dir;
    std::string background = "blurred";
    int scene_resolution = 256;
    int poses_per_class = 10;
    int eval_poses = 2; // trailing poses held out from training
    int classes = 10;
    int max_pills = 10;
    int crop_size = 64; // L
    int vial_templates = 3;
    bool decompose = true;
    double continual_lr_scale = 0.125; // retrain-phase lr multiplier
    OptimizeOptions proxy_opt;

    void validate() const {
        if (embedding_dim < 1 || hidden < 1)
            throw ConfigError("config: embedding_dim and hidden must be positive");
        if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
        if (!(lr >= 0.0)) throw ConfigError("config: lr must be >= 0");
        if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
        if (loss != "pal" && loss != "palfs" && loss != "palfs_weighted")
            throw ConfigError("config: loss must be pal, palfs or palfs_weighted");
        if (classifier != "sl" && classifier != "knn")
            throw ConfigError("config: classifier must be sl or knn");
        if (knn_k < 1) throw ConfigError("config: knn_k must be >= 1");
        if (!(thresholds.min_confidence > -1.0 && thresholds.min_confidence < 1.0))
            throw ConfigError("config: threshold_min must lie in (-1, 1)");
        if (!(thresholds.max_gap >= 0.0)) throw ConfigError("config: threshold_gap must be >= 0");
        if (thresholds.window < 1) throw ConfigError("config: window must be >= 1");
        background_mode_from_string(background);
        if (scene_resolution < 64) throw ConfigError("config: scene_resolution must be >= 64");
        if (poses_per_class < 1) throw ConfigError("config: poses_per_class must be >= 1");
        if (eval_poses < 1 || eval_poses >= poses_per_class)
            throw ConfigError("config: eval_poses must be in [1, poses_per_class)");
        if (classes < 1) throw ConfigError("config: classes must be >= 1");
        if (max_pills < 1 || max_pills > 10)
            throw ConfigError("config: max_pills must be in [1, 10]");
        if (crop_size < 8) throw ConfigError("config: crop_size must be >= 8");
        if (vial_templates < 1) throw ConfigError("config: vial_templates must be >= 1");
        if (!(continual_lr_scale > 0.0) || continual_lr_scale > 1.0)
            throw ConfigError("config: continual_lr_scale must lie in (0, 1]");
        if (proxy_opt.steps < 0 || !(proxy_opt.lr > 0.0))
            throw ConfigError("config: proxy optimizer settings invalid");
        pal.validate(embedding_dim);
    }

    std::size_t proxy_dim() const {
        return loss == "pal" ? embedding_dim : embedding_dim / pal.pieces;
    }

    PalParams effective_pal() const {
        PalParams p = pal;
        p.weighted = loss == "palfs_weighted";
        if (loss == "pal") p.pieces = 1;
        return p;
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    return {
        {"background", c.background},
        {"batch_size", c.batch_size},
        {"classes", c.classes},
        {"classifier", c.classifier},
        {"continual_lr_scale", c.continual_lr_scale},
        {"crop_size", c.crop_size},
        {"dataset_dir", c.dataset_dir},
        {"decompose", c.decompose},
        {"embedding_dim", c.embedding_dim},
        {"epochs", c.epochs},
        {"eval_poses", c.eval_poses},
        {"hidden", c.hidden},
        {"knn_k", c.knn_k},
        {"lights", 7},
        {"loss", c.loss},
        {"lr", c.lr},
        {"max_pills", c.max_pills},
        {"pal", {{"alpha", c.pal.alpha}, {"delta", c.pal.delta}, {"pieces", c.pal.pieces}}},
        {"poses_per_class", c.poses_per_class},
        {"proxy_opt",
         {{"lr", c.proxy_opt.lr},
          {"restarts", c.proxy_opt.restarts},
          {"steps", c.proxy_opt.steps}}},
        {"scene_resolution", c.scene_resolution},
        {"seed", c.seed},
        {"threshold_gap", c.thresholds.max_gap},
        {"threshold_min", c.thresholds.min_confidence},
        {"vial_templates", c.vial_templates},
        {"window", c.thresholds.window},
    };
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
        c.hidden = j.value("hidden", c.hidden);
        c.epochs = j.value("epochs", c.epochs);
        c.lr = j.value("lr", c.lr);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.loss = j.value("loss", c.loss);
        if (j.contains("pal")) {
            const auto& p = j["pal"];
            c.pal.alpha = p.value("alpha", c.pal.alpha);
            c.pal.delta = p.value("delta", c.pal.delta);
            c.pal.pieces = p.value("pieces", c.pal.pieces);
        }
        c.classifier = j.value("classifier", c.classifier);
        c.knn_k = j.value("knn_k", c.knn_k);
        c.thresholds.min_confidence = j.value("threshold_min", c.thresholds.min_confidence);
        c.thresholds.max_gap = j.value("threshold_gap", c.thresholds.max_gap);
        c.thresholds.window = j.value("window", c.thresholds.window);
        c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
        c.background = j.value("background", c.background);
        c.scene_resolution = j.value("scene_resolution", c.scene_resolution);
        c.poses_per_class = j.value("poses_per_class", c.poses_per_class);
        c.eval_poses = j.value("eval_poses", c.eval_poses);
        c.classes = j.value("classes", c.classes);
        c.max_pills = j.value("max_pills", c.max_pills);
        c.crop_size = j.value("crop_size", c.crop_size);
        c.vial_templates = j.value("vial_templates", c.vial_templates);
        c.decompose = j.value("decompose", c.decompose);
        c.continual_lr_scale = j.value("continual_lr_scale", c.continual_lr_scale);
        if (j.contains("proxy_opt")) {
            const auto& p = j["proxy_opt"];
            c.proxy_opt.steps = p.value("steps", c.proxy_opt.steps);
            c.proxy_opt.lr = p.value("lr", c.proxy_opt.lr);
            c.proxy_opt.restarts = p.value("restarts", c.proxy_opt.restarts);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: malformed JSON in " + path);
    return config_from_json(j);
}

} // namespace pillid
