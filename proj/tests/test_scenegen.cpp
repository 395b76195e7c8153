#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ourdb/scenegen.hpp"

using namespace ourdb;
using namespace ourdb::scenegen;

namespace {

// Small profile with an exactly f32-representable palette so zero-noise
// pixels compare equal to their class color.
DomainProfile tiny_profile() {
    DomainProfile p;
    p.palette = {{0.5, 0.25, 0.75}, {0.125, 0.5, 0.875}, {1.0, 0.0, 0.5},
                 {0.25, 0.75, 0.25}, {0.0, 0.5, 1.0}, {0.75, 0.125, 0.25},
                 {0.375, 0.625, 0.875}};
    p.color_jitter.assign(7, 0.0);
    p.noise_sigma = 0.0;
    p.seed_offset = 3;
    p.layout.blobs = {
        {kVehicle, {1, 2, 0.7, 0.05, 3.0, 6.0, 0.5}},
        {kHuman, {1, 2, 0.6, 0.05, 1.5, 3.0, 2.0}},
    };
    return p;
}

std::vector<double> class_histogram(const DomainProfile& p, int n, int h, int w) {
    std::vector<double> hist(7, 0.0);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        Sample s = generate_sample(p, h, w, 9000 + i);
        for (uint8_t c : s.label.v) {
            hist[c] += 1.0;
            total += 1.0;
        }
    }
    for (double& v : hist) v /= total;
    return hist;
}

std::string temp_path(const char* stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST_CASE("generate_sample is deterministic in (profile, seed)") {
    DomainProfile p = default_profiles(7, 2)[1];
    Sample a = generate_sample(p, 32, 32, 42);
    Sample b = generate_sample(p, 32, 32, 42);
    REQUIRE(a.label == b.label);
    REQUIRE(a.image.data() == b.image.data());

    Sample c = generate_sample(p, 32, 32, 43);
    REQUIRE(a.image.data() != c.image.data());
}

TEST_CASE("zero jitter and noise reproduce the palette exactly") {
    DomainProfile p = tiny_profile();
    Sample s = generate_sample(p, 24, 24, 7);
    const size_t plane = 24 * 24;
    for (size_t px = 0; px < plane; ++px) {
        const int cls = s.label.v[px];
        for (int ch = 0; ch < 3; ++ch)
            REQUIRE(s.image.data()[ch * plane + px] == p.palette[cls][ch]);
    }
}

TEST_CASE("samples stay in range and labels stay in class space") {
    DomainProfile p = default_profiles(7, 2)[2];
    Sample s = generate_sample(p, 32, 32, 11);
    for (double v : s.image.data()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    for (uint8_t c : s.label.v) REQUIRE(c < 7);
    REQUIRE(all_finite(s.image));
}

TEST_CASE("layout shift produces a measurable class-frequency gap") {
    DomainProfile a = tiny_profile();
    DomainProfile b = tiny_profile();
    b.layout.sky_end_mean = 0.50;  // much more sky
    b.layout.flat_start_mean = 0.75;
    b.layout.blobs[0].second.count_min = 0;
    b.layout.blobs[0].second.count_max = 0;

    const auto ha = class_histogram(a, 300, 24, 24);
    const auto hb = class_histogram(b, 300, 24, 24);
    double kl = 0.0;
    for (int c = 0; c < 7; ++c) {
        const double pa = ha[c] + 1e-9, pb = hb[c] + 1e-9;
        kl += pa * std::log(pa / pb);
    }
    REQUIRE(kl > 0.005);
}

TEST_CASE("build_benchmark lays out source plus K targets with labeled vals") {
    GeneratorConfig cfg;
    cfg.height = cfg.width = 24;
    cfg.num_targets = 2;
    cfg.source_train = 10;
    cfg.target_train = 8;
    cfg.val_per_domain = 4;
    cfg.seed = 5;
    Benchmark b = build_benchmark(cfg);

    REQUIRE(b.source_train.size() == 10);
    REQUIRE(b.source_train.domain_id == "source");
    REQUIRE(b.target_train.size() == 2);
    REQUIRE(b.target_val.size() == 2);
    REQUIRE(b.target_train[0].domain_id == "t0");
    REQUIRE(b.target_train[1].domain_id == "t1");
    REQUIRE(b.target_train[0].size() == 8);
    REQUIRE(b.target_val[1].size() == 4);

    // val splits carry usable labels
    const LabelMap& y = b.target_val[0].label(0);
    for (uint8_t c : y.v) REQUIRE(c < 7);

    // freshly generated train targets have no label reads
    REQUIRE(b.target_train[0].label_reads() == 0);

    // defaults match the 7-super-category regime
    REQUIRE(GeneratorConfig{}.num_classes == 7);
}

TEST_CASE("build_benchmark rejects K=0") {
    GeneratorConfig cfg;
    cfg.num_targets = 0;
    REQUIRE_THROWS_AS(build_benchmark(cfg), ConfigError);
}

TEST_CASE("benchmark regeneration is reproducible and domains differ") {
    GeneratorConfig cfg;
    cfg.height = cfg.width = 24;
    cfg.source_train = 4;
    cfg.target_train = 4;
    cfg.val_per_domain = 2;
    cfg.seed = 77;
    Benchmark a = build_benchmark(cfg);
    Benchmark b = build_benchmark(cfg);
    REQUIRE(a.source_train.image(0).data() == b.source_train.image(0).data());
    REQUIRE(a.target_train[0].image(1).data() == b.target_train[0].image(1).data());
    // different domains and splits draw from disjoint seed ranges
    REQUIRE(a.target_train[0].image(0).data() != a.target_train[1].image(0).data());
    REQUIRE(a.source_train.image(0).data() != a.source_val.image(0).data());
}

TEST_CASE("dataset round-trips bit-identically through ODBD") {
    GeneratorConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.source_train = 3;
    cfg.target_train = 3;
    cfg.val_per_domain = 2;
    Benchmark b = build_benchmark(cfg);
    const std::string path = temp_path("ourdb_test_roundtrip.odbd");

    save_dataset(b.target_train[0], path);
    Dataset loaded = load_dataset(path);
    REQUIRE(loaded.domain_id == "t0");
    REQUIRE(loaded.split == "train");
    REQUIRE(loaded.num_classes == 7);
    REQUIRE(loaded.size() == 3);
    for (size_t i = 0; i < loaded.size(); ++i) {
        REQUIRE(loaded.image(i).data() == b.target_train[0].image(i).data());
        REQUIRE(loaded.label(i) == b.target_train[0].label(i));
    }
    std::remove(path.c_str());
}

TEST_CASE("truncated or corrupt dataset files fail cleanly") {
    GeneratorConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.source_train = 2;
    cfg.target_train = 2;
    cfg.val_per_domain = 2;
    Benchmark b = build_benchmark(cfg);
    const std::string path = temp_path("ourdb_test_trunc.odbd");
    save_dataset(b.source_train, path);

    // truncate mid-payload
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 100);
    REQUIRE_THROWS_AS(load_dataset(path), DataError);

    // corrupt magic
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    REQUIRE_THROWS_AS(load_dataset(path), DataError);
    REQUIRE_THROWS_AS(load_dataset(path + ".does_not_exist"), DataError);
    std::remove(path.c_str());
}

TEST_CASE("dataset header fields cross-check against the generator config") {
    GeneratorConfig cfg;
    cfg.height = 20;
    cfg.width = 28;
    cfg.source_train = 2;
    cfg.target_train = 2;
    cfg.val_per_domain = 2;
    Benchmark b = build_benchmark(cfg);
    const std::string path = temp_path("ourdb_test_header.odbd");
    save_dataset(b.source_val, path);
    Dataset d = load_dataset(path);
    REQUIRE(d.num_classes == cfg.num_classes);
    REQUIRE(d.h() == 20);
    REQUIRE(d.w() == 28);
    REQUIRE(d.size() == 2);
    REQUIRE(d.split == "val");
    std::remove(path.c_str());
}
