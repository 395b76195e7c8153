#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ourdb/mean_teacher.hpp"
#include "ourdb/scenegen.hpp"
#include "ourdb/serialize.hpp"

namespace ourdb {

/// Per-parameter-element arrays mirroring a ParamSet entry for entry.
using ElementArrays = std::vector<std::vector<double>>;

inline bool mirrors(const ElementArrays& a, const ParamSet& p) {
    if (a.size() != p.entries.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].size() != static_cast<size_t>(p.entries[i].tensor.size())) return false;
    return true;
}

enum class FisherNormScope { kTensor, kGlobal };

/// Raw Fisher diagonal and its normalized/clipped EMA-coefficient form for
/// the domain it was computed on.
struct FisherCoefficients {
    ElementArrays raw;
    ElementArrays adjusted;
    std::string computed_on;
    double lambda1 = 0.99;
    double lambda2 = 0.9999;
};

struct FisherStats {
    int samples_used = 0;
    bool capped = false;
    double raw_min = 0.0, raw_max = 0.0, raw_mean = 0.0;
};

/// Mean over samples of the squared CE gradient w.r.t. the teacher, with
/// the teacher's own pseudo-labels as targets. Works on a detached clone
/// and a temporary tape, so the caller's parameters are left bit-unchanged.
/// A cap > 0 limits the pass to an evenly strided subsample.
inline ElementArrays compute_fisher(const ParamSet& teacher, const scenegen::Dataset& data,
                                    int cap = 256, FisherStats* stats = nullptr) {
    detail::check(!data.empty(), "compute_fisher: empty dataset");
    ParamSet work = clone_params(teacher);
    work.set_requires_grad(true);

    const size_t n = data.size();
    const size_t used = (cap > 0 && static_cast<size_t>(cap) < n) ? static_cast<size_t>(cap) : n;

    ElementArrays fisher;
    fisher.reserve(work.entries.size());
    for (const auto& e : work.entries)
        fisher.emplace_back(static_cast<size_t>(e.tensor.size()), 0.0);

    for (size_t j = 0; j < used; ++j) {
        const size_t idx = j * n / used;
        work.zero_grad();
        Tape tape;
        {
            Tape::Scope scope(tape);
            Tensor logits = segnet::forward(work, data.image(idx));
            const PseudoLabel pl = pseudo_label_from_logits(logits);
            Tensor loss = pixel_softmax_ce(logits, pl.label);
            tape.backward(loss);
        }
        for (size_t i = 0; i < work.entries.size(); ++i) {
            const double* g = work.entries[i].tensor.grad().data();
            double* f = fisher[i].data();
            for (size_t k = 0; k < fisher[i].size(); ++k) f[k] += g[k] * g[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(used);
    for (auto& arr : fisher)
        for (double& v : arr) v *= inv;

    if (stats) {
        stats->samples_used = static_cast<int>(used);
        stats->capped = used < n;
        double mn = std::numeric_limits<double>::infinity(), mx = -mn, sum = 0.0;
        size_t count = 0;
        for (const auto& arr : fisher)
            for (double v : arr) {
                mn = std::min(mn, v);
                mx = std::max(mx, v);
                sum += v;
                ++count;
            }
        stats->raw_min = mn;
        stats->raw_max = mx;
        stats->raw_mean = count ? sum / count : 0.0;
    }
    return fisher;
}

/// Min-max normalization to [0,1] followed by a clip to [l1, l2]. The
/// default scope normalizes each parameter tensor on its own; a degenerate
/// scope (max == min) maps to l1 everywhere.
inline ElementArrays normalize_clip(const ElementArrays& raw, double l1, double l2,
                                    FisherNormScope scope = FisherNormScope::kTensor) {
    if (!(l1 <= l2) || l1 < 0.0 || l2 > 1.0)
        throw ConfigError("normalize_clip: need 0 <= lambda1 <= lambda2 <= 1");
    auto clip = [&](double v) { return std::min(l2, std::max(l1, v)); };

    ElementArrays out(raw.size());
    if (scope == FisherNormScope::kGlobal) {
        double mn = std::numeric_limits<double>::infinity(), mx = -mn;
        for (const auto& arr : raw)
            for (double v : arr) {
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
        const double span = mx - mn;
        for (size_t i = 0; i < raw.size(); ++i) {
            out[i].resize(raw[i].size());
            for (size_t k = 0; k < raw[i].size(); ++k)
                out[i][k] = span > 0.0 ? clip((raw[i][k] - mn) / span) : l1;
        }
        return out;
    }
    for (size_t i = 0; i < raw.size(); ++i) {
        double mn = std::numeric_limits<double>::infinity(), mx = -mn;
        for (double v : raw[i]) {
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        const double span = mx - mn;
        out[i].resize(raw[i].size());
        for (size_t k = 0; k < raw[i].size(); ++k)
            out[i][k] = span > 0.0 ? clip((raw[i][k] - mn) / span) : l1;
    }
    return out;
}

/// theta' <- F'.theta' + (1-F').theta elementwise; reduces exactly to
/// ema_update when the coefficients are constant.
inline void af_ema_update(TeacherStudent& pair, const ElementArrays& adjusted) {
    detail::check(pair.teacher.congruent_with(pair.student),
                  "af_ema_update: teacher/student parameter sets are not congruent");
    detail::check(mirrors(adjusted, pair.teacher),
                  "af_ema_update: coefficient shapes do not mirror the parameter set");
    for (size_t i = 0; i < pair.teacher.entries.size(); ++i) {
        double* t = pair.teacher.entries[i].tensor.data().data();
        const double* s = pair.student.entries[i].tensor.data().data();
        const double* f = adjusted[i].data();
        const int n = pair.teacher.entries[i].tensor.size();
        for (int j = 0; j < n; ++j) t[j] = f[j] * t[j] + (1.0 - f[j]) * s[j];
    }
    ++pair.teacher_updates;
}

// ---- ODBF Fisher snapshot ----------------------------------------------------

inline constexpr char kFisherMagic[4] = {'O', 'D', 'B', 'F'};
inline constexpr uint32_t kFisherVersion = 1;

inline void save_fisher(const std::string& path, const ParamSet& params,
                        const FisherCoefficients& fc) {
    detail::check(mirrors(fc.raw, params) && mirrors(fc.adjusted, params),
                  "save_fisher: coefficients do not mirror the parameter set");
    io::Writer w(path);
    w.magic(kFisherMagic);
    w.u32(kFisherVersion);
    nlohmann::json names = nlohmann::json::array();
    for (const auto& e : params.entries)
        names.push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
    w.json_header({{"computed_on", fc.computed_on},
                   {"lambda1", fc.lambda1},
                   {"lambda2", fc.lambda2},
                   {"params", names},
                   {"sections", {"raw", "adjusted"}}});
    for (const auto& arr : fc.raw) w.f64_vec(arr);
    for (const auto& arr : fc.adjusted) w.f64_vec(arr);
}

}  // namespace ourdb
