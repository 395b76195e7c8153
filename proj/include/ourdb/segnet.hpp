#pragma once

#include <random>
#include <string>
#include <vector>

#include "ourdb/optim.hpp"
#include "ourdb/param_set.hpp"
#include "ourdb/rng.hpp"
#include "ourdb/serialize.hpp"
#include "ourdb/tensor.hpp"

namespace ourdb::segnet {

/// Small fully-convolutional stack: conv+relu per hidden width, final conv
/// to num_classes with no activation. No downsampling, so logits keep the
/// input's spatial size.
struct SegNetConfig {
    std::vector<int> channels = {16, 32, 32, 7};  // layer widths, last == num_classes
    int num_classes = 7;
    int kernel = 3;
    uint64_t init_seed = 1;
    double init_scale = 1.0;

    void validate() const {
        detail::check(!channels.empty(), "segnet: channels must be non-empty");
        detail::check(channels.back() == num_classes,
                      "segnet: last layer width must equal num_classes");
        for (int c : channels) detail::check(c > 0, "segnet: nonpositive layer width");
        detail::check(kernel % 2 == 1 && kernel > 0, "segnet: kernel must be odd");
        detail::check(init_scale >= 0.0, "segnet: init_scale must be >= 0");
    }
};

/// Kaiming-style init: w ~ N(0, init_scale^2 * 2/fan_in), zero biases.
inline ParamSet init(const SegNetConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.init_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ParamSet params;
    int cin = 3;
    for (size_t l = 0; l < cfg.channels.size(); ++l) {
        const int cout = cfg.channels[l];
        const int k = cfg.kernel;
        const double std_dev = cfg.init_scale * std::sqrt(2.0 / (cin * k * k));
        Tensor w = Tensor::zeros({cout, cin, k, k});
        for (auto& v : w.data()) v = std_dev * normal(rng);
        Tensor b = Tensor::zeros({cout});
        const std::string stem = "conv" + std::to_string(l);
        params.add(stem + ".weight", std::move(w));
        params.add(stem + ".bias", std::move(b));
        cin = cout;
    }
    return params;
}

/// Layer structure is recovered from the (weight, bias) entry pairs, so the
/// same function serves any ParamSet produced by init().
inline Tensor forward(const ParamSet& params, const Tensor& image) {
    detail::check(params.entries.size() >= 2 && params.entries.size() % 2 == 0,
                  "segnet forward: param set is not a (weight, bias) sequence");
    const size_t layers = params.entries.size() / 2;
    Tensor x = image;
    for (size_t l = 0; l < layers; ++l) {
        const Tensor& w = params.entries[2 * l].tensor;
        const Tensor& b = params.entries[2 * l + 1].tensor;
        x = conv2d(x, w, b);
        if (l + 1 < layers) x = relu(x);
    }
    return x;
}

// ---- ODBC checkpoint format -------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'O', 'D', 'B', 'C'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    SegNetConfig config;
    int iteration = 0;
    ParamSet params;
};

inline void save_checkpoint(const std::string& path, const SegNetConfig& cfg, int iteration,
                            const ParamSet& params) {
    io::Writer w(path);
    w.magic(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    nlohmann::json names = nlohmann::json::array();
    for (const auto& e : params.entries)
        names.push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
    w.json_header({{"config",
                    {{"channels", cfg.channels},
                     {"num_classes", cfg.num_classes},
                     {"kernel", cfg.kernel},
                     {"init_seed", cfg.init_seed},
                     {"init_scale", cfg.init_scale}}},
                   {"iteration", iteration},
                   {"params", names}});
    w.f64_vec(params.flatten_values());
}

inline Checkpoint load_checkpoint(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kCheckpointMagic);
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw DataError("'" + path + "': unsupported checkpoint version " +
                        std::to_string(version));
    const nlohmann::json h = r.json_header();
    Checkpoint ck;
    try {
        const auto& c = h.at("config");
        ck.config.channels = c.at("channels").get<std::vector<int>>();
        ck.config.num_classes = c.at("num_classes").get<int>();
        ck.config.kernel = c.at("kernel").get<int>();
        ck.config.init_seed = c.at("init_seed").get<uint64_t>();
        ck.config.init_scale = c.at("init_scale").get<double>();
        ck.iteration = h.at("iteration").get<int>();
        for (const auto& p : h.at("params")) {
            Tensor t = Tensor::zeros(p.at("shape").get<std::vector<int>>());
            ck.params.add(p.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("'" + path + "': bad checkpoint header: " + e.what());
    }
    for (auto& e : ck.params.entries) r.f64_vec(e.tensor.data(), e.tensor.data().size());
    r.expect_eof();
    return ck;
}

}  // namespace ourdb::segnet
