#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "ourdb/segnet.hpp"

using namespace ourdb;
using namespace ourdb::segnet;

namespace {

SegNetConfig small_config() {
    SegNetConfig cfg;
    cfg.channels = {4, 6, 3};
    cfg.num_classes = 3;
    cfg.kernel = 3;
    cfg.init_seed = 99;
    return cfg;
}

Tensor random_image(int h, int w, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t = Tensor::zeros({3, h, w});
    for (auto& v : t.data()) v = u(rng);
    return t;
}

}  // namespace

TEST_CASE("init is seed-deterministic") {
    const SegNetConfig cfg = small_config();
    ParamSet a = init(cfg);
    ParamSet b = init(cfg);
    REQUIRE(a.flatten_values() == b.flatten_values());

    SegNetConfig other = cfg;
    other.init_seed = 100;
    REQUIRE(a.flatten_values() != init(other).flatten_values());
}

TEST_CASE("zero init_scale zeroes all weights") {
    SegNetConfig cfg = small_config();
    cfg.init_scale = 0.0;
    ParamSet p = init(cfg);
    for (double v : p.flatten_values()) REQUIRE(v == 0.0);
}

TEST_CASE("parameter count matches the closed form") {
    const SegNetConfig cfg = small_config();
    ParamSet p = init(cfg);
    size_t expected = 0;
    int cin = 3;
    for (int cout : cfg.channels) {
        expected += size_t(cout) * cin * cfg.kernel * cfg.kernel + cout;
        cin = cout;
    }
    REQUIRE(p.total_len() == expected);

    // element counter oracle
    size_t counted = 0;
    for (const auto& e : p.entries) counted += e.tensor.data().size();
    REQUIRE(counted == expected);
}

TEST_CASE("forward preserves spatial size and emits C channels") {
    ParamSet p = init(small_config());
    Tensor logits = forward(p, random_image(12, 17, 4));
    REQUIRE(logits.shape() == std::vector<int>{3, 12, 17});
}

TEST_CASE("all-zero parameters give all-zero logits (uniform softmax)") {
    SegNetConfig cfg = small_config();
    cfg.init_scale = 0.0;
    ParamSet p = init(cfg);
    Tensor logits = forward(p, random_image(8, 8, 5));
    for (double v : logits.data()) REQUIRE(v == 0.0);
}

TEST_CASE("forward is deterministic") {
    ParamSet p = init(small_config());
    Tensor img = random_image(10, 10, 6);
    REQUIRE(forward(p, img).data() == forward(p, img).data());
}

TEST_CASE("per-pixel softmax of logits sums to one") {
    ParamSet p = init(small_config());
    Tensor logits = forward(p, random_image(9, 9, 8));
    const int c = 3, n = 81;
    for (int px = 0; px < n; ++px) {
        double m = logits.data()[px];
        for (int j = 1; j < c; ++j) m = std::max(m, logits.data()[size_t(j) * n + px]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(logits.data()[size_t(j) * n + px] - m);
        double total = 0.0;
        for (int j = 0; j < c; ++j)
            total += std::exp(logits.data()[size_t(j) * n + px] - m) / s;
        REQUIRE(total == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("clone_params deep-copies values and detaches grads") {
    ParamSet src = init(small_config());
    src.set_requires_grad(true);
    src.entries[0].tensor.grad()[0] = 5.0;

    ParamSet dup = clone_params(src);
    REQUIRE(dup.total_len() == src.total_len());
    REQUIRE(dup.congruent_with(src));
    REQUIRE(dup.flatten_values() == src.flatten_values());
    REQUIRE_FALSE(dup.entries[0].tensor.has_grad());
    REQUIRE_FALSE(dup.entries[0].tensor.requires_grad());

    dup.entries[0].tensor.data()[0] += 1.0;
    REQUIRE(dup.flatten_values() != src.flatten_values());
}

TEST_CASE("config invariants are enforced") {
    SegNetConfig bad = small_config();
    bad.num_classes = 5;  // last width stays 3
    REQUIRE_THROWS_AS(init(bad), std::invalid_argument);
    bad = small_config();
    bad.kernel = 4;
    REQUIRE_THROWS_AS(init(bad), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip bit-identically through ODBC") {
    const SegNetConfig cfg = small_config();
    ParamSet p = init(cfg);
    const std::string path =
        (std::filesystem::temp_directory_path() / "ourdb_test_ckpt.odbc").string();
    save_checkpoint(path, cfg, 1234, p);

    Checkpoint ck = load_checkpoint(path);
    REQUIRE(ck.iteration == 1234);
    REQUIRE(ck.config.channels == cfg.channels);
    REQUIRE(ck.config.num_classes == cfg.num_classes);
    REQUIRE(ck.config.init_seed == cfg.init_seed);
    REQUIRE(ck.params.congruent_with(p));
    REQUIRE(ck.params.flatten_values() == p.flatten_values());

    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 16);
    REQUIRE_THROWS_AS(load_checkpoint(path), DataError);
    std::remove(path.c_str());
}
