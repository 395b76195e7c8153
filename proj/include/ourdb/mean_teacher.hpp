#pragma once

#include <cmath>
#include <vector>

#include "ourdb/mixing.hpp"
#include "ourdb/param_set.hpp"
#include "ourdb/segnet.hpp"
#include "ourdb/tensor.hpp"

namespace ourdb {

/// Student/teacher parameter pair. The teacher only ever changes through
/// ema_update / af_ema_update; teacher_updates counts those calls so tests
/// can audit the contract.
struct TeacherStudent {
    ParamSet student;
    ParamSet teacher;
    double alpha = 0.999;
    int teacher_updates = 0;
};

struct PseudoLabel {
    LabelMap label;                  // per-pixel argmax of teacher softmax
    std::vector<double> confidence;  // max softmax probability, in [0,1]
};

inline Tensor supervised_loss(const ParamSet& student, const Tensor& x, const LabelMap& y) {
    return pixel_softmax_ce(segnet::forward(student, x), y);
}

/// Argmax with ties broken toward the lowest class index; confidence is the
/// max softmax probability (channel-constant logit offsets cancel).
inline PseudoLabel pseudo_label_from_logits(const Tensor& logits) {
    const auto& ls = logits.shape();
    detail::check(ls.size() == 3, "pseudo_label: logits must be [C,H,W]");
    const int c = ls[0], n = ls[1] * ls[2];
    PseudoLabel pl;
    pl.label = LabelMap(ls[1], ls[2]);
    pl.confidence.assign(n, 0.0);
    const double* lp = logits.data().data();
    for (int p = 0; p < n; ++p) {
        int am = 0;
        double m = lp[p];
        for (int j = 1; j < c; ++j) {
            const double v = lp[static_cast<size_t>(j) * n + p];
            if (v > m) {
                m = v;
                am = j;
            }
        }
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(lp[static_cast<size_t>(j) * n + p] - m);
        pl.label.v[p] = static_cast<uint8_t>(am);
        pl.confidence[p] = 1.0 / s;
    }
    return pl;
}

inline PseudoLabel pseudo_label(const ParamSet& teacher, const Tensor& x) {
    return pseudo_label_from_logits(segnet::forward(teacher, x));
}

/// Pixel CE of the student on a composed bridge. Optional weights follow
/// pixel_softmax_ce semantics.
inline Tensor bridging_loss(const ParamSet& student, const mixing::Bridge& bridge,
                            const std::vector<double>* weights = nullptr) {
    return pixel_softmax_ce(segnet::forward(student, bridge.image), bridge.label, weights);
}

/// theta' <- alpha*theta' + (1-alpha)*theta, elementwise.
inline void ema_update(TeacherStudent& pair) {
    detail::check(pair.alpha >= 0.0 && pair.alpha <= 1.0, "ema_update: alpha must be in [0,1]");
    detail::check(pair.teacher.congruent_with(pair.student),
                  "ema_update: teacher/student parameter sets are not congruent");
    const double a = pair.alpha;
    for (size_t i = 0; i < pair.teacher.entries.size(); ++i) {
        double* t = pair.teacher.entries[i].tensor.data().data();
        const double* s = pair.student.entries[i].tensor.data().data();
        const int n = pair.teacher.entries[i].tensor.size();
        for (int j = 0; j < n; ++j) t[j] = a * t[j] + (1.0 - a) * s[j];
    }
    ++pair.teacher_updates;
}

/// Fraction of pixels whose pseudo-label confidence clears the threshold;
/// the optional bridge-loss weight for pasted-target pixels.
inline double confidence_weight(const PseudoLabel& pl, double threshold = 0.968) {
    if (pl.confidence.empty()) return 0.0;
    size_t above = 0;
    for (double v : pl.confidence)
        if (v > threshold) ++above;
    return static_cast<double>(above) / pl.confidence.size();
}

}  // namespace ourdb
