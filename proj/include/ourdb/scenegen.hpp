#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ourdb/errors.hpp"
#include "ourdb/rng.hpp"
#include "ourdb/serialize.hpp"
#include "ourdb/tensor.hpp"

namespace ourdb::scenegen {

// Class indices for the 7-category default label space.
enum : int { kFlat = 0, kConstruction, kObject, kNature, kSky, kHuman, kVehicle };

struct BlobParams {
    int count_min = 0;
    int count_max = 0;
    double band_mean = 0.5;  // vertical placement, fraction of H
    double band_std = 0.05;
    double size_min = 3.0;  // horizontal radius in pixels
    double size_max = 8.0;
    double aspect = 1.0;  // vertical radius = horizontal * aspect
};

struct LayoutParams {
    double sky_end_mean = 0.30;
    double sky_end_std = 0.03;
    double flat_start_mean = 0.55;
    double flat_start_std = 0.03;
    // Painted in order; later classes overwrite earlier ones.
    std::vector<std::pair<int, BlobParams>> blobs;
};

/// Generative recipe for one synthetic domain. Everything a sample needs is
/// (profile, seed), so generation is pure and trivially parallel.
struct DomainProfile {
    std::vector<std::array<double, 3>> palette;  // per-class mean RGB in [0,1]
    std::vector<double> color_jitter;            // per-class std
    double noise_sigma = 0.0;
    LayoutParams layout;
    int seed_offset = 0;

    int num_classes() const { return static_cast<int>(palette.size()); }

    void validate() const {
        detail::check(palette.size() >= 2, "profile: palette must cover at least 2 classes");
        detail::check(color_jitter.size() == palette.size(),
                      "profile: color_jitter length must equal palette length");
        for (double j : color_jitter) detail::check(j >= 0.0, "profile: negative color jitter");
        detail::check(noise_sigma >= 0.0, "profile: negative noise sigma");
        auto frac = [](double v) { return v >= 0.0 && v <= 1.0; };
        detail::check(frac(layout.sky_end_mean) && frac(layout.flat_start_mean),
                      "profile: band means must be in [0,1]");
        detail::check(layout.sky_end_std >= 0.0 && layout.flat_start_std >= 0.0,
                      "profile: band stds must be >= 0");
        for (const auto& [cls, bp] : layout.blobs) {
            detail::check(cls >= 0 && cls < num_classes(), "profile: blob class out of range");
            detail::check(bp.count_min >= 0 && bp.count_max >= bp.count_min,
                          "profile: bad blob count range");
            detail::check(frac(bp.band_mean) && bp.band_std >= 0.0, "profile: bad blob band");
        }
    }
};

struct Sample {
    Tensor image;  // [3,H,W], values in [0,1], f32-quantized
    LabelMap label;
};

/// Ordered sample collection for one domain and split. Label access is
/// counted so tests can audit that training never reads target train labels.
class Dataset {
public:
    std::string domain_id;
    std::string split;  // "train" | "val"
    int num_classes = 0;

    size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    int h() const { return samples_.empty() ? 0 : samples_[0].label.h; }
    int w() const { return samples_.empty() ? 0 : samples_[0].label.w; }

    void add(Sample s) {
        if (!samples_.empty())
            detail::check(s.label.h == h() && s.label.w == w(),
                          "dataset: sample size mismatch within '" + domain_id + "'");
        samples_.push_back(std::move(s));
    }

    const Tensor& image(size_t i) const { return samples_[i].image; }
    const LabelMap& label(size_t i) const {
        ++label_reads_;
        return samples_[i].label;
    }

    size_t label_reads() const { return label_reads_; }

private:
    std::vector<Sample> samples_;
    mutable size_t label_reads_ = 0;
};

namespace gen_detail {

inline double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace gen_detail

/// Deterministic scene synthesis: label first (bands, then blobs), image
/// second (palette + per-class jitter + global noise, clamped to [0,1]).
/// Image values are quantized to f32 so the on-disk format round-trips
/// bit-exactly.
inline Sample generate_sample(const DomainProfile& profile, int h, int w, uint64_t seed) {
    profile.validate();
    const int c = profile.num_classes();
    std::mt19937_64 rng(mix64(static_cast<uint64_t>(profile.seed_offset), seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Sample s;
    s.label = LabelMap(h, w, kFlat);

    // Background bands: sky / construction / flat.
    const auto& lay = profile.layout;
    double sky_end = gen_detail::clampd(lay.sky_end_mean + lay.sky_end_std * normal(rng), 0.02, 0.90);
    double flat_start = gen_detail::clampd(lay.flat_start_mean + lay.flat_start_std * normal(rng),
                                           sky_end + 0.02, 0.97);
    const int sky_rows = static_cast<int>(sky_end * h);
    const int flat_row = static_cast<int>(flat_start * h);
    for (int y = 0; y < h; ++y) {
        uint8_t cls = y < sky_rows ? uint8_t(kSky) : (y < flat_row ? uint8_t(kConstruction) : uint8_t(kFlat));
        if (cls >= c) cls = 0;  // small label spaces fall back to class 0
        for (int x = 0; x < w; ++x) s.label.at(y, x) = cls;
    }

    // Blobs: axis-aligned ellipses, painter's order from the profile.
    for (const auto& [cls, bp] : lay.blobs) {
        std::uniform_int_distribution<int> count_dist(bp.count_min, bp.count_max);
        const int count = count_dist(rng);
        for (int i = 0; i < count; ++i) {
            const double cxp = unit(rng) * w;
            const double cyp = (bp.band_mean + bp.band_std * normal(rng)) * h;
            const double rx = bp.size_min + unit(rng) * (bp.size_max - bp.size_min);
            const double ry = std::max(1.0, rx * bp.aspect * (0.8 + 0.4 * unit(rng)));
            const int y0 = std::max(0, static_cast<int>(std::floor(cyp - ry)));
            const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cyp + ry)));
            const int x0 = std::max(0, static_cast<int>(std::floor(cxp - rx)));
            const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cxp + rx)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double u = (x + 0.5 - cxp) / rx;
                    const double v = (y + 0.5 - cyp) / ry;
                    if (u * u + v * v <= 1.0) s.label.at(y, x) = static_cast<uint8_t>(cls);
                }
        }
    }

    // Image from label.
    s.image = Tensor::zeros({3, h, w});
    double* img = s.image.data().data();
    const size_t plane = static_cast<size_t>(h) * w;
    for (size_t p = 0; p < plane; ++p) {
        const int cls = s.label.v[p];
        const double jit = profile.color_jitter[cls];
        for (int ch = 0; ch < 3; ++ch) {
            double v = profile.palette[cls][ch] + jit * normal(rng) +
                       profile.noise_sigma * normal(rng);
            v = gen_detail::clampd(v, 0.0, 1.0);
            img[ch * plane + p] = static_cast<double>(static_cast<float>(v));
        }
    }
    return s;
}

struct GeneratorConfig {
    int num_classes = 7;
    int height = 64;
    int width = 64;
    int num_targets = 2;  // K
    int source_train = 64;
    int target_train = 48;
    int val_per_domain = 16;
    uint64_t seed = 1;
    // Source profile first, then one per target. Empty -> default_profiles().
    std::vector<DomainProfile> profiles;

    void validate() const {
        if (num_targets < 1) throw ConfigError("generator: K must be >= 1");
        if (num_classes < 2) throw ConfigError("generator: C must be >= 2");
        if (height < 8 || width < 8) throw ConfigError("generator: image size too small");
        if (source_train < 1 || target_train < 1 || val_per_domain < 1)
            throw ConfigError("generator: sample counts must be >= 1");
        if (!profiles.empty() && static_cast<int>(profiles.size()) != num_targets + 1)
            throw ConfigError("generator: need 1 source + K target profiles");
    }
};

/// Source + K target recipes over the shared 7-class label space. Targets
/// shift palette, noise and spatial layout away from the source, with
/// target 0 kept closest to the source and later targets drifting further.
inline std::vector<DomainProfile> default_profiles(int num_classes, int num_targets) {
    if (num_classes != 7)
        throw ConfigError("default profiles cover the 7-class label space; "
                          "supply custom profiles for other C");
    DomainProfile src;
    src.palette = {{0.42, 0.40, 0.38},   // flat
                   {0.58, 0.28, 0.22},   // construction
                   {0.85, 0.72, 0.15},   // object
                   {0.13, 0.52, 0.18},   // nature
                   {0.55, 0.75, 0.95},   // sky
                   {0.85, 0.30, 0.55},   // human
                   {0.18, 0.25, 0.75}};  // vehicle
    src.color_jitter.assign(7, 0.04);
    src.noise_sigma = 0.02;
    src.seed_offset = 1;
    src.layout.sky_end_mean = 0.30;
    src.layout.flat_start_mean = 0.55;
    src.layout.blobs = {
        {kNature, {2, 4, 0.38, 0.05, 5.0, 11.0, 0.9}},
        {kObject, {1, 3, 0.46, 0.05, 2.0, 5.0, 1.0}},
        {kVehicle, {1, 3, 0.72, 0.06, 5.0, 10.0, 0.45}},
        {kHuman, {1, 3, 0.62, 0.05, 1.5, 3.5, 2.2}},
    };

    std::vector<DomainProfile> out{src};
    for (int k = 0; k < num_targets; ++k) {
        DomainProfile t = src;
        t.seed_offset = 100 + k;
        if (k % 3 == 0) {
            // Near target: mild darkening and a lower horizon.
            for (auto& p : t.palette)
                p = {0.85 * p[0], 0.85 * p[1], gen_detail::clampd(0.85 * p[2] + 0.06, 0.0, 1.0)};
            t.color_jitter.assign(7, 0.05);
            t.noise_sigma = 0.03;
            t.layout.sky_end_mean = 0.34;
            t.layout.flat_start_mean = 0.58;
            t.layout.blobs[2].second.band_mean = 0.74;  // vehicles lower
        } else if (k % 3 == 1) {
            // Far target: desaturated and warm, higher horizon, busier roads.
            for (auto& p : t.palette)
                p = {gen_detail::clampd(0.5 * p[0] + 0.25 + 0.08, 0.0, 1.0),
                     gen_detail::clampd(0.5 * p[1] + 0.25, 0.0, 1.0),
                     gen_detail::clampd(0.5 * p[2] + 0.25 - 0.06, 0.0, 1.0)};
            t.color_jitter.assign(7, 0.06);
            t.noise_sigma = 0.05;
            t.layout.sky_end_mean = 0.24;
            t.layout.flat_start_mean = 0.50;
            t.layout.blobs[0].second.count_max = 2;     // fewer nature blobs
            t.layout.blobs[2].second.count_min = 2;     // more vehicles
            t.layout.blobs[2].second.count_max = 4;
            t.layout.blobs[3].second.band_mean = 0.58;  // humans higher up
        } else {
            // Additional targets: cool, dark and noisy.
            for (auto& p : t.palette)
                p = {gen_detail::clampd(0.7 * p[0] - 0.05, 0.0, 1.0), 0.7 * p[1],
                     gen_detail::clampd(0.7 * p[2] + 0.12, 0.0, 1.0)};
            t.color_jitter.assign(7, 0.05);
            t.noise_sigma = 0.06;
            t.layout.sky_end_mean = 0.27;
            t.layout.flat_start_mean = 0.60;
            t.layout.blobs[1].second.count_max = 5;
        }
        out.push_back(std::move(t));
    }
    return out;
}

struct Benchmark {
    Dataset source_train, source_val;
    std::vector<Dataset> target_train, target_val;

    const Dataset* find(const std::string& domain_id, const std::string& split) const {
        const auto& pool = split == "train" ? target_train : target_val;
        for (const auto& d : pool)
            if (d.domain_id == domain_id) return &d;
        return nullptr;
    }
};

/// One labeled source + K target domains, train/val each, from disjoint
/// seed ranges: sample seed = mix(cfg.seed, (domain*2+split)<<32 | index).
inline Benchmark build_benchmark(const GeneratorConfig& cfg) {
    cfg.validate();
    std::vector<DomainProfile> profiles =
        cfg.profiles.empty() ? default_profiles(cfg.num_classes, cfg.num_targets) : cfg.profiles;
    for (const auto& p : profiles) {
        p.validate();
        if (p.num_classes() != cfg.num_classes)
            throw ConfigError("generator: profile palette size does not match C");
    }

    auto make = [&](int domain_idx, const std::string& id, const std::string& split, int count) {
        Dataset d;
        d.domain_id = id;
        d.split = split;
        d.num_classes = cfg.num_classes;
        const uint64_t base = (static_cast<uint64_t>(domain_idx) * 2 + (split == "val" ? 1 : 0))
                              << 32;
        for (int i = 0; i < count; ++i)
            d.add(generate_sample(profiles[domain_idx], cfg.height, cfg.width,
                                  mix64(cfg.seed, base | static_cast<uint64_t>(i))));
        return d;
    };

    Benchmark b;
    b.source_train = make(0, "source", "train", cfg.source_train);
    b.source_val = make(0, "source", "val", cfg.val_per_domain);
    for (int k = 0; k < cfg.num_targets; ++k) {
        const std::string id = "t" + std::to_string(k);
        b.target_train.push_back(make(k + 1, id, "train", cfg.target_train));
        b.target_val.push_back(make(k + 1, id, "val", cfg.val_per_domain));
    }
    return b;
}

// ---- ODBD on-disk format ---------------------------------------------------

inline constexpr char kDatasetMagic[4] = {'O', 'D', 'B', 'D'};
inline constexpr uint32_t kDatasetVersion = 1;

inline void save_dataset(const Dataset& d, const std::string& path) {
    detail::check(!d.empty(), "save_dataset: empty dataset");
    io::Writer w(path);
    w.magic(kDatasetMagic);
    w.u32(kDatasetVersion);
    const int hh = d.h(), ww = d.w();
    nlohmann::json header = {{"domain_id", d.domain_id}, {"split", d.split},
                             {"C", d.num_classes},       {"H", hh},
                             {"W", ww},                  {"count", d.size()},
                             {"has_labels", true}};
    w.json_header(header);
    std::vector<float> img(static_cast<size_t>(3) * hh * ww);
    for (size_t i = 0; i < d.size(); ++i) {
        const auto& data = d.image(i).data();
        for (size_t j = 0; j < img.size(); ++j) img[j] = static_cast<float>(data[j]);
        w.f32_vec(img);
        w.u8_vec(d.label(i).v);
    }
}

inline Dataset load_dataset(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kDatasetMagic);
    const uint32_t version = r.u32();
    if (version != kDatasetVersion)
        throw DataError("'" + path + "': unsupported dataset version " + std::to_string(version));
    const nlohmann::json h = r.json_header();
    for (const char* key : {"domain_id", "split", "C", "H", "W", "count", "has_labels"})
        if (!h.contains(key))
            throw DataError("'" + path + "': dataset header missing field '" + std::string(key) +
                            "'");
    Dataset d;
    d.domain_id = h["domain_id"].get<std::string>();
    d.split = h["split"].get<std::string>();
    d.num_classes = h["C"].get<int>();
    const int hh = h["H"].get<int>(), ww = h["W"].get<int>();
    const size_t count = h["count"].get<size_t>();
    const bool has_labels = h["has_labels"].get<bool>();
    if (d.num_classes < 2 || hh < 1 || ww < 1 || count < 1)
        throw DataError("'" + path + "': implausible dataset header " + h.dump());

    std::vector<float> img;
    for (size_t i = 0; i < count; ++i) {
        Sample s;
        r.f32_vec(img, static_cast<size_t>(3) * hh * ww);
        s.image = Tensor::zeros({3, hh, ww});
        for (size_t j = 0; j < img.size(); ++j) s.image.data()[j] = static_cast<double>(img[j]);
        s.label = LabelMap(hh, ww);
        if (has_labels) r.u8_vec(s.label.v, static_cast<size_t>(hh) * ww);
        else s.label.v.assign(static_cast<size_t>(hh) * ww, kIgnoreLabel);
        d.add(std::move(s));
    }
    r.expect_eof();
    return d;
}

}  // namespace ourdb::scenegen
