#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ourdb/label_map.hpp"
#include "ourdb/tensor.hpp"

namespace ourdb::metrics {

/// C x C counts, rows = ground truth, cols = prediction. Ignored ground-
/// truth pixels are counted separately.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<int64_t> counts;
    int64_t ignored = 0;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int c)
        : num_classes(c), counts(static_cast<size_t>(c) * c, 0) {
        detail::check(c >= 1, "confusion matrix: need at least one class");
    }

    int64_t& at(int gt, int pred) { return counts[static_cast<size_t>(gt) * num_classes + pred]; }
    int64_t at(int gt, int pred) const {
        return counts[static_cast<size_t>(gt) * num_classes + pred];
    }

    int64_t total() const {
        int64_t t = 0;
        for (int64_t v : counts) t += v;
        return t;
    }

    void accumulate(const LabelMap& pred, const LabelMap& gt) {
        detail::check(pred.h == gt.h && pred.w == gt.w, "accumulate: shape mismatch");
        for (int p = 0; p < gt.size(); ++p) {
            const uint8_t g = gt.v[p];
            if (g == kIgnoreLabel) {
                ++ignored;
                continue;
            }
            const uint8_t q = pred.v[p];
            detail::check(g < num_classes, "accumulate: ground-truth class out of range");
            detail::check(q < num_classes, "accumulate: predicted class out of range");
            ++at(g, q);
        }
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        detail::check(num_classes == o.num_classes, "confusion matrix: class count mismatch");
        for (size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        ignored += o.ignored;
        return *this;
    }
};

/// Per-class IoU and their mean. Classes absent from both ground truth and
/// prediction are excluded from the mean and reported with iou 0 /
/// present=false (keeps the report NaN-free).
struct EvalReport {
    std::string domain_id;
    std::vector<double> per_class_iou;
    std::vector<bool> class_present;
    double miou = 0.0;
};

inline EvalReport miou(const ConfusionMatrix& cm, std::string domain_id = "") {
    detail::check(cm.total() > 0, "miou: empty confusion matrix");
    const int c = cm.num_classes;
    EvalReport r;
    r.domain_id = std::move(domain_id);
    r.per_class_iou.assign(c, 0.0);
    r.class_present.assign(c, false);
    double sum = 0.0;
    int present = 0;
    for (int i = 0; i < c; ++i) {
        const int64_t tp = cm.at(i, i);
        int64_t fp = 0, fn = 0;
        for (int j = 0; j < c; ++j) {
            if (j != i) {
                fp += cm.at(j, i);
                fn += cm.at(i, j);
            }
        }
        const int64_t uni = tp + fp + fn;
        if (uni == 0) continue;
        r.per_class_iou[i] = static_cast<double>(tp) / static_cast<double>(uni);
        r.class_present[i] = true;
        sum += r.per_class_iou[i];
        ++present;
    }
    detail::check(present > 0, "miou: no class present in either ground truth or prediction");
    r.miou = sum / present;
    return r;
}

/// Unweighted mean of per-domain mIoU, the headline reporting convention.
inline double average_over_targets(const std::vector<EvalReport>& reports) {
    detail::check(!reports.empty(), "average_over_targets: no reports");
    double sum = 0.0;
    for (const auto& r : reports) sum += r.miou;
    return sum / reports.size();
}

inline std::vector<std::string> class_names(int num_classes) {
    if (num_classes == 7)
        return {"flat", "construction", "object", "nature", "sky", "human", "vehicle"};
    std::vector<std::string> out;
    for (int i = 0; i < num_classes; ++i) out.push_back("class" + std::to_string(i));
    return out;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json per = nlohmann::json::object();
    const auto names = class_names(static_cast<int>(r.per_class_iou.size()));
    for (size_t i = 0; i < r.per_class_iou.size(); ++i)
        per[names[i]] = r.class_present[i] ? nlohmann::json(r.per_class_iou[i])
                                           : nlohmann::json(nullptr);
    return {{"domain", r.domain_id}, {"per_class_iou", per}, {"miou", r.miou}};
}

/// One CSV row per domain using the table column layout: class IoUs,
/// domain mIoU, then the cross-domain average.
inline void write_report_csv(std::ostream& os, const std::vector<EvalReport>& reports,
                             double avg_miou) {
    if (reports.empty()) return;
    const auto names = class_names(static_cast<int>(reports[0].per_class_iou.size()));
    os << "domain";
    for (const auto& n : names) os << "," << n;
    os << ",miou,avg\n";
    for (const auto& r : reports) {
        os << r.domain_id;
        for (size_t i = 0; i < r.per_class_iou.size(); ++i) {
            os << ",";
            if (r.class_present[i]) os << r.per_class_iou[i];
        }
        os << "," << r.miou << "," << avg_miou << "\n";
    }
}

}  // namespace ourdb::metrics
