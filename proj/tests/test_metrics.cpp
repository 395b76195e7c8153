#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "ourdb/metrics.hpp"

using namespace ourdb;
using namespace ourdb::metrics;

namespace {

LabelMap random_labels(int h, int w, int c, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, c - 1);
    LabelMap y(h, w);
    for (auto& v : y.v) v = static_cast<uint8_t>(d(rng));
    return y;
}

}  // namespace

TEST_CASE("accumulate of a perfect prediction is diagonal") {
    LabelMap gt = random_labels(8, 8, 4, 1);
    ConfusionMatrix cm(4);
    cm.accumulate(gt, gt);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) REQUIRE(cm.at(i, j) == 0);
    REQUIRE(cm.total() == 64);
    REQUIRE(cm.ignored == 0);
}

TEST_CASE("fully ignored ground truth counts only into ignored") {
    LabelMap gt(5, 5, kIgnoreLabel);
    LabelMap pred = random_labels(5, 5, 3, 2);
    ConfusionMatrix cm(3);
    cm.accumulate(pred, gt);
    REQUIRE(cm.total() == 0);
    REQUIRE(cm.ignored == 25);
}

TEST_CASE("2-class 2x2 case matches a manual tally") {
    LabelMap gt(2, 2), pred(2, 2);
    gt.v = {0, 0, 1, 1};
    pred.v = {0, 1, 1, 0};
    ConfusionMatrix cm(2);
    cm.accumulate(pred, gt);
    REQUIRE(cm.at(0, 0) == 1);
    REQUIRE(cm.at(0, 1) == 1);
    REQUIRE(cm.at(1, 1) == 1);
    REQUIRE(cm.at(1, 0) == 1);
}

TEST_CASE("accumulate rejects out-of-range classes") {
    LabelMap gt(2, 2, 0);
    LabelMap pred(2, 2, 5);
    ConfusionMatrix cm(3);
    REQUIRE_THROWS_AS(cm.accumulate(pred, gt), std::invalid_argument);
    LabelMap bad_gt(2, 2, 4);
    LabelMap ok_pred(2, 2, 0);
    REQUIRE_THROWS_AS(cm.accumulate(ok_pred, bad_gt), std::invalid_argument);
}

TEST_CASE("miou endpoints: perfect 1.0, fully wrong 0.0") {
    LabelMap gt = random_labels(6, 6, 3, 3);
    ConfusionMatrix perfect(3);
    perfect.accumulate(gt, gt);
    REQUIRE(miou(perfect).miou == 1.0);

    LabelMap wrong = gt;
    for (auto& v : wrong.v) v = static_cast<uint8_t>((v + 1) % 3);
    ConfusionMatrix disjoint(3);
    disjoint.accumulate(wrong, gt);
    REQUIRE(miou(disjoint).miou == 0.0);
}

TEST_CASE("per-class IoU follows TP/(TP+FP+FN)") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 3;  // TP for class 0
    cm.at(1, 0) = 1;  // FP for class 0
    cm.at(0, 1) = 2;  // FN for class 0
    EvalReport r = miou(cm);
    REQUIRE(r.per_class_iou[0] == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("classes absent from both gt and prediction are excluded") {
    ConfusionMatrix cm(4);
    cm.at(0, 0) = 10;
    cm.at(1, 1) = 5;
    cm.at(1, 0) = 5;
    EvalReport r = miou(cm);
    REQUIRE(r.class_present == std::vector<bool>{true, true, false, false});
    // class0: TP=10, FP=5 -> 10/15; class1: TP=5, FN=5 -> 5/10
    REQUIRE(r.miou == Catch::Approx((10.0 / 15.0 + 0.5) / 2).epsilon(1e-12));
    for (double v : r.per_class_iou) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}

TEST_CASE("miou rejects an empty confusion matrix") {
    ConfusionMatrix cm(3);
    REQUIRE_THROWS_AS(miou(cm), std::invalid_argument);
}

TEST_CASE("average_over_targets reproduces the reporting arithmetic") {
    EvalReport c;
    c.miou = 0.758;
    EvalReport i;
    i.miou = 0.712;
    REQUIRE(average_over_targets({c}) == 0.758);
    REQUIRE(average_over_targets({c, i}) == Catch::Approx(0.735).margin(1e-12));
    REQUIRE(average_over_targets({c, i}) == Catch::Approx((0.758 + 0.712) / 2.0));
    REQUIRE_THROWS_AS(average_over_targets({}), std::invalid_argument);
}

TEST_CASE("miou is invariant under joint class permutation") {
    const int c = 5;
    const std::vector<int> perm = {3, 0, 4, 1, 2};
    for (uint64_t seed = 0; seed < 10; ++seed) {
        LabelMap gt = random_labels(9, 9, c, 100 + seed);
        LabelMap pred = random_labels(9, 9, c, 200 + seed);
        ConfusionMatrix a(c);
        a.accumulate(pred, gt);

        LabelMap gt_p = gt, pred_p = pred;
        for (auto& v : gt_p.v) v = static_cast<uint8_t>(perm[v]);
        for (auto& v : pred_p.v) v = static_cast<uint8_t>(perm[v]);
        ConfusionMatrix b(c);
        b.accumulate(pred_p, gt_p);

        REQUIRE(miou(a).miou == Catch::Approx(miou(b).miou).margin(1e-12));
    }
}

TEST_CASE("accumulate is additive over disjoint pixel sets") {
    LabelMap gt = random_labels(10, 10, 3, 7);
    LabelMap pred = random_labels(10, 10, 3, 8);

    // split pixels into twos by parity via the ignore mechanism
    LabelMap gt_even = gt, gt_odd = gt;
    for (int p = 0; p < gt.size(); ++p)
        (p % 2 == 0 ? gt_odd : gt_even).v[p] = kIgnoreLabel;

    ConfusionMatrix whole(3), even(3), odd(3);
    whole.accumulate(pred, gt);
    even.accumulate(pred, gt_even);
    odd.accumulate(pred, gt_odd);
    even += odd;
    REQUIRE(even.counts == whole.counts);
}

TEST_CASE("CSV layout carries class names, miou and avg columns") {
    EvalReport r;
    r.domain_id = "t0";
    r.per_class_iou.assign(7, 0.5);
    r.class_present.assign(7, true);
    r.miou = 0.5;
    std::ostringstream os;
    write_report_csv(os, {r}, 0.5);
    const std::string s = os.str();
    REQUIRE(s.find("domain,flat,construction,object,nature,sky,human,vehicle,miou,avg") !=
            std::string::npos);
    REQUIRE(s.find("t0,0.5") != std::string::npos);
}

TEST_CASE("report JSON names classes and keeps absent ones null") {
    EvalReport r;
    r.domain_id = "t1";
    r.per_class_iou = {0.25, 0.0};
    r.class_present = {true, false};
    r.miou = 0.25;
    nlohmann::json j = report_to_json(r);
    REQUIRE(j["domain"] == "t1");
    REQUIRE(j["per_class_iou"]["class0"] == 0.25);
    REQUIRE(j["per_class_iou"]["class1"].is_null());
}
