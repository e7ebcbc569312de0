#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pillid/errors.hpp"
#include "pillid/preprocess.hpp"
#include "pillid/rng.hpp"
#include "pillid/synthgen.hpp"

namespace pillid {

struct SceneEntry {
    int id = 0;
    int class_id = 0;
    int pose = 0;
    std::uint64_t seed = 0;
    int vial_template = 0;
    std::string dir;                  // relative to the dataset root
    std::vector<std::string> lights;  // 7 filenames inside dir
    std::vector<std::string> masks;   // one filename per pill instance
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    int resolution = 256;
    int poses_per_class = 10;
    int lights = 7;
    std::vector<PillClassSpec> classes;
    std::vector<SceneEntry> scenes;
};

inline nlohmann::json to_json(const PillSpriteSpec& s) {
    return {
        {"color", {s.color[0], s.color[1], s.color[2]}},
        {"imprint", s.imprint},
        {"shape", to_string(s.shape)},
        {"size_cols", s.size_cols},
        {"size_rows", s.size_rows},
    };
}

inline PillSpriteSpec sprite_spec_from_json(const nlohmann::json& j, PillSide side) {
    PillSpriteSpec s;
    s.shape = pill_shape_from_string(j.at("shape").get<std::string>());
    const auto color = j.at("color").get<std::vector<int>>();
    s.color = {static_cast<std::uint8_t>(color.at(0)), static_cast<std::uint8_t>(color.at(1)),
               static_cast<std::uint8_t>(color.at(2))};
    s.imprint = j.at("imprint").get<std::string>();
    s.size_rows = j.at("size_rows").get<int>();
    s.size_cols = j.at("size_cols").get<int>();
    s.side = side;
    return s;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : m.classes)
        classes.push_back({{"back", to_json(c.back)},
                           {"front", to_json(c.front)},
                           {"id", c.class_id},
                           {"name", c.name}});
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& s : m.scenes)
        scenes.push_back({{"class_id", s.class_id},
                          {"dir", s.dir},
                          {"id", s.id},
                          {"lights", s.lights},
                          {"masks", s.masks},
                          {"pose", s.pose},
                          {"seed", s.seed},
                          {"vial_template", s.vial_template}});
    return {{"classes", classes},
            {"lights", m.lights},
            {"poses_per_class", m.poses_per_class},
            {"resolution", m.resolution},
            {"scenes", scenes},
            {"seed", m.seed}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.resolution = j.at("resolution").get<int>();
    m.poses_per_class = j.at("poses_per_class").get<int>();
    m.lights = j.at("lights").get<int>();
    for (const auto& c : j.at("classes")) {
        PillClassSpec cls;
        cls.class_id = c.at("id").get<int>();
        cls.name = c.at("name").get<std::string>();
        cls.front = sprite_spec_from_json(c.at("front"), PillSide::front);
        cls.back = sprite_spec_from_json(c.at("back"), PillSide::back);
        m.classes.push_back(std::move(cls));
    }
    for (const auto& s : j.at("scenes")) {
        SceneEntry e;
        e.id = s.at("id").get<int>();
        e.class_id = s.at("class_id").get<int>();
        e.pose = s.at("pose").get<int>();
        e.seed = s.at("seed").get<std::uint64_t>();
        e.vial_template = s.at("vial_template").get<int>();
        e.dir = s.at("dir").get<std::string>();
        e.lights = s.at("lights").get<std::vector<std::string>>();
        e.masks = s.at("masks").get<std::vector<std::string>>();
        m.scenes.push_back(std::move(e));
    }
    return m;
}

struct GenOptions {
    std::uint64_t seed = 42;
    int classes = 10;
    int poses_per_class = 10;
    int resolution = 256;
    int max_pills = 10;
    int vial_templates = 3;
};

// Writes the full dataset tree: scenes (7 PPM light renders each), per-pill
// PGM masks and the JSON manifest with the per-scene seeds that make any
// subset reproducible in isolation.
inline DatasetManifest generate_dataset(const GenOptions& opt, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.seed = opt.seed;
    manifest.resolution = opt.resolution;
    manifest.poses_per_class = opt.poses_per_class;
    manifest.lights = 7;

    RngState root(opt.seed);
    manifest.classes = make_class_specs(opt.classes, root);

    std::vector<VialTemplate> vials;
    for (int v = 0; v < opt.vial_templates; ++v)
        vials.push_back(make_vial_template(v, opt.resolution));

    int scene_id = 0;
    for (int cls = 0; cls < opt.classes; ++cls) {
        for (int pose = 0; pose < opt.poses_per_class; ++pose, ++scene_id) {
            SceneEntry entry;
            entry.id = scene_id;
            entry.class_id = cls;
            entry.pose = pose;
            entry.seed = root.child(static_cast<std::uint64_t>(scene_id)).seed();
            entry.dir = "scenes/scene_" + std::to_string(scene_id);

            RngState scene_rng(entry.seed);
            entry.vial_template = static_cast<int>(scene_rng.uniform_index(vials.size()));
            const VialScene scene = compose_vial_scene(manifest.classes[cls],
                                                       vials[entry.vial_template], scene_rng,
                                                       opt.max_pills);
            const auto renders = render_light_conditions(scene.image);

            const fs::path scene_dir = fs::path(out_dir) / entry.dir;
            fs::create_directories(scene_dir);
            for (int k = 0; k < 7; ++k) {
                const std::string name = "light_" + std::to_string(k) + ".ppm";
                write_ppm((scene_dir / name).string(), renders[k]);
                entry.lights.push_back(name);
            }
            for (std::size_t p = 0; p < scene.pills.size(); ++p) {
                const std::string name = "pill_" + std::to_string(p) + ".pgm";
                write_pgm((scene_dir / name).string(), scene.pills[p].mask);
                entry.masks.push_back(name);
            }
            manifest.scenes.push_back(std::move(entry));
        }
    }

    std::ofstream os(fs::path(out_dir) / "manifest.json");
    if (!os) throw IoError("cannot write manifest in " + out_dir);
    os << to_json(manifest).dump(2) << "\n";
    return manifest;
}

inline DatasetManifest load_manifest(const std::string& dataset_dir) {
    const auto path = std::filesystem::path(dataset_dir) / "manifest.json";
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path.string());
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded())
        throw CorruptArtifactError("manifest: malformed JSON");
    try {
        return manifest_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptArtifactError(std::string("manifest: ") + e.what());
    }
}

struct LoadedScene {
    const SceneEntry* entry = nullptr;
    std::vector<ImageRgb> lights;
    std::vector<PillInstance> pills;
};

inline LoadedScene load_scene(const std::string& dataset_dir, const SceneEntry& entry) {
    namespace fs = std::filesystem;
    LoadedScene scene;
    scene.entry = &entry;
    const fs::path dir = fs::path(dataset_dir) / entry.dir;
    for (const auto& name : entry.lights)
        scene.lights.push_back(read_ppm((dir / name).string()));
    for (const auto& name : entry.masks) {
        PillInstance inst;
        inst.class_id = entry.class_id;
        inst.mask = read_pgm((dir / name).string());
        scene.pills.push_back(std::move(inst));
    }
    return scene;
}

} // namespace pillid
