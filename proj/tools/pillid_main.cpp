// pillid: synthetic vial-scene pill identification pipeline.
//
// Subcommands cover dataset generation, encoder training, proxy lifecycle
// operations, classification, aggregation/verification and the evaluation
// protocols. Exit codes: 0 success, 1 user error, 2 internal error,
// 3 corrupt artifact.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pillid/config.hpp"
#include "pillid/dataset.hpp"
#include "pillid/encoder.hpp"
#include "pillid/eval.hpp"
#include "pillid/pipeline.hpp"
#include "pillid/proxy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pillid;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> dataset_dir;
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<std::string> classifier;
    std::optional<std::string> loss;
    std::optional<std::string> background;
    std::optional<double> threshold_min;
    std::optional<double> threshold_gap;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON run configuration");
    cmd->add_option("--seed", args.seed, "override: RNG seed");
    cmd->add_option("--data", args.dataset_dir, "override: dataset directory");
    cmd->add_option("--epochs", args.epochs, "override: training epochs");
    cmd->add_option("--lr", args.lr, "override: learning rate");
    cmd->add_option("--classifier", args.classifier, "override: sl or knn");
    cmd->add_option("--loss", args.loss, "override: pal, palfs or palfs_weighted");
    cmd->add_option("--background", args.background, "override: blurred, gray or bbox");
    cmd->add_option("--threshold-min", args.threshold_min, "override: condition-1 threshold");
    cmd->add_option("--threshold-gap", args.threshold_gap, "override: condition-2 gap");
    cmd->add_option("--out", args.out, "output file or directory");
}

// config file first, flags second: flag overrides beat file values
RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (args.dataset_dir) cfg.dataset_dir = *args.dataset_dir;
    if (args.epochs) cfg.epochs = *args.epochs;
    if (args.lr) cfg.lr = *args.lr;
    if (args.classifier) cfg.classifier = *args.classifier;
    if (args.loss) cfg.loss = *args.loss;
    if (args.background) cfg.background = *args.background;
    if (args.threshold_min) cfg.thresholds.min_confidence = *args.threshold_min;
    if (args.threshold_gap) cfg.thresholds.max_gap = *args.threshold_gap;
    cfg.validate();
    return cfg;
}

std::string default_run_dir(std::uint64_t seed) {
    const char* root_env = std::getenv("PILLID_RUN_ROOT");
    const fs::path root = root_env ? root_env : "runs";
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_utc);
    return (root / (std::string(stamp) + "-seed" + std::to_string(seed))).string();
}

std::string resolve_out_dir(const CommonArgs& args, const RunConfig& cfg) {
    const std::string dir = args.out.empty() ? default_run_dir(cfg.seed) : args.out;
    fs::create_directories(dir);
    return dir;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

std::string require_dataset(const RunConfig& cfg) {
    if (cfg.dataset_dir.empty())
        throw ConfigError("no dataset directory (set --data or dataset_dir in the config)");
    return cfg.dataset_dir;
}

std::vector<int> parse_class_list(const std::string& csv) {
    std::vector<int> ids;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string tok =
            csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
        if (!tok.empty()) ids.push_back(std::stoi(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return ids;
}

// ---- subcommand bodies -------------------------------------------------------

int cmd_gen_data(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    const std::string out = args.out.empty() ? default_run_dir(cfg.seed) : args.out;
    GenOptions gen;
    gen.seed = cfg.seed;
    gen.classes = cfg.classes;
    gen.poses_per_class = cfg.poses_per_class;
    gen.resolution = cfg.scene_resolution;
    gen.max_pills = cfg.max_pills;
    gen.vial_templates = cfg.vial_templates;
    const DatasetManifest manifest = generate_dataset(gen, out);
    json summary = {{"run", to_json(cfg)}, {"scenes", manifest.scenes.size()}};
    write_json((fs::path(out) / "gen_summary.json").string(), summary);
    summary["dataset_dir"] = out;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    const std::string data = require_dataset(cfg);
    const DatasetManifest manifest = load_manifest(data);
    const std::string out = resolve_out_dir(args, cfg);

    const TrainOutput trained = train_pipeline(manifest, data, cfg);
    json run = to_json(cfg);
    run["epochs_completed"] = cfg.epochs;
    save_checkpoint((fs::path(out) / "checkpoint.pid").string(), trained.params, run);
    save_proxy_set((fs::path(out) / "proxies.pid").string(), trained.proxies, run);

    json summary = {{"first_epoch_loss", trained.first_epoch_loss},
                    {"last_epoch_loss", trained.last_epoch_loss},
                    {"run", to_json(cfg)}};
    write_json((fs::path(out) / "train_summary.json").string(), summary);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_embed(const CommonArgs& args, const std::string& checkpoint, const std::string& split,
              const std::string& classes_csv) {
    const RunConfig cfg = resolve_config(args);
    const std::string data = require_dataset(cfg);
    const DatasetManifest manifest = load_manifest(data);
    const EncoderParams params = load_checkpoint(checkpoint);
    const EmbeddingCollection collection =
        build_collection(params, manifest, data, cfg, split_from_string(split),
                         parse_class_list(classes_csv));
    const std::string out =
        args.out.empty() ? (fs::path(default_run_dir(cfg.seed)) / "collection.pid").string()
                         : args.out;
    if (!fs::path(out).parent_path().empty())
        fs::create_directories(fs::path(out).parent_path());
    collection.save(out, to_json(cfg));
    std::cout << json{{"collection", out}, {"entries", collection.size()}}.dump(2) << "\n";
    return 0;
}

int cmd_proxy_demo(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    RngState rng(cfg.seed);
    const Demo2dReport r = demo_2d(rng, cfg.proxy_opt);
    const json out = {
        {"proxy_addition", {{"after", r.add_after}, {"before", r.add_before}}},
        {"proxy_creation", {{"after", r.create_after}, {"before", r.create_before}}},
        {"proxy_enhancement", {{"after", r.enhance_after}, {"before", r.enhance_before}}},
        {"seed", cfg.seed},
    };
    if (!args.out.empty()) write_json(args.out, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_proxy_add(const CommonArgs& args, const std::string& proxies_path,
                  const std::string& collection_path) {
    const RunConfig cfg = resolve_config(args);
    const ProxySet old = load_proxy_set(proxies_path);
    const EmbeddingCollection fresh = EmbeddingCollection::load(collection_path);
    const ProxySet grown =
        add_proxies(old, fresh, cfg.proxy_opt.steps, cfg.proxy_opt.lr, cfg.proxy_opt);
    const std::string out = args.out.empty() ? "proxies_added.pid" : args.out;
    save_proxy_set(out, grown, to_json(cfg));
    std::cout << json{{"count", grown.count()},
                      {"max_abs_similarity", max_abs_similarity(grown)},
                      {"proxies", out}}
                     .dump(2)
              << "\n";
    return 0;
}

int cmd_proxy_enhance(const CommonArgs& args, const std::string& proxies_path) {
    const RunConfig cfg = resolve_config(args);
    ProxySet p = load_proxy_set(proxies_path);
    const double before = max_abs_similarity(p);
    const ProxySet enhanced =
        enhance_proxies(std::move(p), cfg.proxy_opt.steps, cfg.proxy_opt.lr, cfg.proxy_opt);
    const std::string out = args.out.empty() ? "proxies_enhanced.pid" : args.out;
    save_proxy_set(out, enhanced, to_json(cfg));
    std::cout << json{{"max_abs_similarity_after", max_abs_similarity(enhanced)},
                      {"max_abs_similarity_before", before},
                      {"proxies", out}}
                     .dump(2)
              << "\n";
    return 0;
}

int cmd_classify(const CommonArgs& args, const std::string& checkpoint,
                 const std::string& collection_path, int scene_id, int light,
                 const std::string& dump_crops) {
    const RunConfig cfg = resolve_config(args);
    const std::string data = require_dataset(cfg);
    const DatasetManifest manifest = load_manifest(data);
    const EncoderParams params = load_checkpoint(checkpoint);
    const EmbeddingCollection collection = EmbeddingCollection::load(collection_path);
    const EvalContext ctx = make_eval_context(
        params, collection, classifier_from_string(cfg.classifier), cfg.knn_k);

    const SceneEntry* entry = nullptr;
    for (const auto& e : manifest.scenes)
        if (e.id == scene_id) entry = &e;
    if (!entry)
        throw ConfigError("scene id not present in manifest: " + std::to_string(scene_id));

    const LoadedScene scene = load_scene(data, *entry);
    json preds = json::array();
    std::vector<SinglePillImage> all_crops;
    for (int k = 0; k < static_cast<int>(scene.lights.size()); ++k) {
        if (light >= 0 && k != light) continue;
        for (auto& crop : scene_crops(scene.lights[k], scene.pills, cfg, entry->id)) {
            const PredictionRecord p = predict_crop(ctx, crop);
            preds.push_back({{"confidence", p.confidence},
                             {"label", p.label},
                             {"light", k},
                             {"pill_index", crop.pill_index}});
            if (!dump_crops.empty() && k == (light >= 0 ? light : 0))
                all_crops.push_back(std::move(crop));
        }
    }
    if (!dump_crops.empty()) write_single_pills(dump_crops, all_crops);
    const json out = {{"predictions", preds},
                      {"scene", scene_id},
                      {"true_class", entry->class_id}};
    if (!args.out.empty()) write_json(args.out, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_verify(const CommonArgs& args, const std::string& predictions_path,
               const std::string& request_id) {
    const RunConfig cfg = resolve_config(args);
    std::ifstream is(predictions_path);
    if (!is) throw IoError("cannot open predictions: " + predictions_path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw CorruptArtifactError("predictions: malformed JSON");
    if (j.is_object() && j.contains("predictions")) j = j["predictions"];
    if (!j.is_array()) throw CorruptArtifactError("predictions: expected an array");

    std::vector<PredictionRecord> preds;
    for (const auto& item : j)
        preds.push_back({item.at("label").get<int>(), item.at("confidence").get<double>()});

    RequestHistory history;
    history.request_id = request_id;
    history.batches.push_back(std::move(preds));
    const VerificationResult r = merge_request_history(history, cfg.thresholds);
    const json out = to_json(history, r);
    if (!args.out.empty()) write_json(args.out, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint,
             const std::string& collection_path, Grouping grouping, bool merge_poses) {
    const RunConfig cfg = resolve_config(args);
    const std::string data = require_dataset(cfg);
    const DatasetManifest manifest = load_manifest(data);
    const EncoderParams params = load_checkpoint(checkpoint);
    const EmbeddingCollection collection = EmbeddingCollection::load(collection_path);
    const auto groups =
        make_eval_groups(manifest, data, cfg, grouping, Split::eval, {}, merge_poses);
    const MetricsReport report = run_vial_eval(params, collection, cfg, groups);
    json out = to_json(report);
    out["grouping"] = grouping == Grouping::single ? "single" : "multiple";
    out["run"] = to_json(cfg);
    if (!args.out.empty()) write_json(args.out, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_eval_continual(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    const std::string data = require_dataset(cfg);
    const DatasetManifest manifest = load_manifest(data);
    ProxySet final_proxies;
    const ContinualReport report = continual_protocol(manifest, data, cfg, &final_proxies);
    json out = to_json(report);
    out["run"] = to_json(cfg);
    const std::string path = args.out.empty() ? "continual_report.json" : args.out;
    write_json(path, out);
    const fs::path proxies_path = fs::path(path).parent_path() / "proxies_final.pid";
    save_proxy_set(proxies_path.string(), final_proxies, to_json(cfg));
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_eval_unknown(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    const std::string data = require_dataset(cfg);
    const DatasetManifest manifest = load_manifest(data);
    const UnknownReport report = unknown_class_protocol(manifest, data, cfg);
    json out = to_json(report);
    out["run"] = to_json(cfg);
    if (!args.out.empty()) write_json(args.out, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pill identification pipeline: synthetic scenes, proxy-based "
                 "metric embedding, exact-solution classification, aggregation"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string checkpoint, collection_path, proxies_path, predictions_path;
    std::string split = "train", classes_csv, request_id = "cli", dump_crops;
    int scene_id = 0, light = -1;
    bool merge_poses = false;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic vial dataset");
    add_common(gen, args);

    auto* train = app.add_subcommand("train", "train the encoder with the configured loss");
    add_common(train, args);

    auto* embed = app.add_subcommand("embed", "embed a dataset split into a collection");
    add_common(embed, args);
    embed->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
    embed->add_option("--split", split, "train, eval or all");
    embed->add_option("--classes", classes_csv, "comma-separated class id filter");

    auto* demo = app.add_subcommand("proxy-demo", "2-D proxy operations walkthrough");
    add_common(demo, args);

    auto* padd = app.add_subcommand("proxy-add", "add proxies for new classes");
    add_common(padd, args);
    padd->add_option("--proxies", proxies_path, "existing proxy set")->required();
    padd->add_option("--collection", collection_path, "new-class embedding collection")
        ->required();

    auto* penh = app.add_subcommand("proxy-enhance", "re-decompose the whole proxy set");
    add_common(penh, args);
    penh->add_option("--proxies", proxies_path, "proxy set to enhance")->required();

    auto* classify = app.add_subcommand("classify", "classify the pills of one scene");
    add_common(classify, args);
    classify->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
    classify->add_option("--collection", collection_path, "reference collection")->required();
    classify->add_option("--scene", scene_id, "scene id")->required();
    classify->add_option("--light", light, "light index 0..6 (default: all)");
    classify->add_option("--dump-crops", dump_crops,
                         "also write the preprocessed crops and their sidecar here");

    auto* verify = app.add_subcommand("verify", "aggregate and verify predictions");
    add_common(verify, args);
    verify->add_option("--predictions", predictions_path, "JSON prediction list")->required();
    verify->add_option("--request-id", request_id, "request identifier");

    auto* esingle = app.add_subcommand("eval-single", "single vial-image evaluation");
    add_common(esingle, args);
    esingle->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
    esingle->add_option("--collection", collection_path, "reference collection")->required();

    auto* emulti = app.add_subcommand("eval-multi", "multi light-condition evaluation");
    add_common(emulti, args);
    emulti->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
    emulti->add_option("--collection", collection_path, "reference collection")->required();
    emulti->add_flag("--merge-poses", merge_poses, "pool all eval poses of a class");

    auto* econt = app.add_subcommand("eval-continual", "two-half proxy-addition protocol");
    add_common(econt, args);

    auto* eunk = app.add_subcommand("eval-unknown", "unknown-class avoidance protocol");
    add_common(eunk, args);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(args);
        if (train->parsed()) return cmd_train(args);
        if (embed->parsed()) return cmd_embed(args, checkpoint, split, classes_csv);
        if (demo->parsed()) return cmd_proxy_demo(args);
        if (padd->parsed()) return cmd_proxy_add(args, proxies_path, collection_path);
        if (penh->parsed()) return cmd_proxy_enhance(args, proxies_path);
        if (classify->parsed())
            return cmd_classify(args, checkpoint, collection_path, scene_id, light,
                                dump_crops);
        if (verify->parsed()) return cmd_verify(args, predictions_path, request_id);
        if (esingle->parsed())
            return cmd_eval(args, checkpoint, collection_path, Grouping::single, false);
        if (emulti->parsed())
            return cmd_eval(args, checkpoint, collection_path, Grouping::multiple, merge_poses);
        if (econt->parsed()) return cmd_eval_continual(args);
        if (eunk->parsed()) return cmd_eval_unknown(args);
        return 1;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        std::cerr << json{{"error", e.what()}, {"type", "usage"}}.dump() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << json{{"error", e.what()}, {"type", "config"}}.dump() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << json{{"error", e.what()}, {"type", "io"}}.dump() << "\n";
        return 1;
    } catch (const DegenerateInputError& e) {
        std::cerr << json{{"error", e.what()}, {"type", "input"}}.dump() << "\n";
        return 1;
    } catch (const CorruptArtifactError& e) {
        std::cerr << json{{"error", e.what()}, {"type", "corrupt"}}.dump() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}, {"type", "internal"}}.dump() << "\n";
        return 2;
    }
}
