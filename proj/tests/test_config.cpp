#include <catch2/catch_amalgamated.hpp>

#include "pillid/config.hpp"

using namespace pillid;

TEST_CASE("defaults validate and resolve the canonical constants", "[config]") {
    RunConfig c;
    c.validate();
    CHECK(c.epochs == 20);
    CHECK(c.poses_per_class == 10);
    CHECK(c.max_pills == 10);
    CHECK(c.thresholds.min_confidence == 0.87);
    CHECK(c.thresholds.max_gap == 0.1);
    CHECK(c.thresholds.window == 10);
    CHECK(c.proxy_opt.steps == 2000);
    CHECK(c.proxy_opt.lr == 0.05);
    CHECK(c.pal.alpha == 32.0);
    CHECK(c.pal.delta == 0.1);
}

TEST_CASE("round trip through json preserves fields", "[config]") {
    RunConfig c;
    c.seed = 777;
    c.embedding_dim = 16;
    c.loss = "palfs";
    c.pal.pieces = 4;
    c.classifier = "knn";
    c.knn_k = 3;
    c.thresholds.min_confidence = 0.8;
    RunConfig back = config_from_json(to_json(c));
    CHECK(back.seed == 777);
    CHECK(back.embedding_dim == 16);
    CHECK(back.loss == "palfs");
    CHECK(back.pal.pieces == 4);
    CHECK(back.classifier == "knn");
    CHECK(back.knn_k == 3);
    CHECK(back.thresholds.min_confidence == 0.8);
}

TEST_CASE("invalid settings are rejected with config errors", "[config]") {
    RunConfig c;
    c.classifier = "forest";
    CHECK_THROWS_AS(c.validate(), ConfigError);

    RunConfig d;
    d.embedding_dim = 30;
    d.loss = "palfs";
    d.pal.pieces = 4; // 30 % 4 != 0
    CHECK_THROWS_AS(d.validate(), ConfigError);

    RunConfig e;
    e.eval_poses = 10; // no training poses left
    CHECK_THROWS_AS(e.validate(), ConfigError);

    RunConfig f;
    f.max_pills = 25;
    CHECK_THROWS_AS(f.validate(), ConfigError);
}

TEST_CASE("palfs proxies live in the reduced dimension", "[config]") {
    RunConfig c;
    c.embedding_dim = 32;
    c.loss = "palfs";
    c.pal.pieces = 4;
    CHECK(c.proxy_dim() == 8);
    CHECK(c.effective_pal().pieces == 4);
    c.loss = "pal";
    CHECK(c.proxy_dim() == 32);
    CHECK(c.effective_pal().pieces == 1);
    c.loss = "palfs_weighted";
    CHECK(c.effective_pal().weighted);
}

TEST_CASE("unknown config file raises io error, bad json raises config error", "[config]") {
    CHECK_THROWS_AS(load_config("/nonexistent/pillid.json"), IoError);
}
