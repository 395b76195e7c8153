#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ourdb/mean_teacher.hpp"
#include "ourdb/optim.hpp"

using namespace ourdb;

namespace {

// 1x1-conv identity net over C channels: logits == image channels.
ParamSet passthrough_net(int c) {
    ParamSet p;
    Tensor w = Tensor::zeros({c, c, 1, 1});
    for (int i = 0; i < c; ++i) w.data()[size_t(i) * c + i] = 1.0;
    p.add("conv0.weight", std::move(w));
    p.add("conv0.bias", Tensor::zeros({c}));
    return p;
}

Tensor onehot_image(const LabelMap& y, int c, double magnitude) {
    Tensor img = Tensor::zeros({c, y.h, y.w});
    const int n = y.size();
    for (int p = 0; p < n; ++p) img.data()[size_t(y.v[p]) * n + p] = magnitude;
    return img;
}

ParamSet random_params(uint64_t seed, int c = 3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.3);
    ParamSet p;
    Tensor w = Tensor::zeros({c, c, 1, 1});
    for (auto& v : w.data()) v = nd(rng);
    Tensor b = Tensor::zeros({c});
    for (auto& v : b.data()) v = nd(rng);
    p.add("conv0.weight", std::move(w));
    p.add("conv0.bias", std::move(b));
    return p;
}

LabelMap random_labels(int h, int w, int c, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, c - 1);
    LabelMap y(h, w);
    for (auto& v : y.v) v = static_cast<uint8_t>(d(rng));
    return y;
}

Tensor random_image(int c, int h, int w, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t = Tensor::zeros({c, h, w});
    for (auto& v : t.data()) v = u(rng);
    return t;
}

}  // namespace

TEST_CASE("supervised_loss vanishes on perfect logits and is ln C on uniform ones") {
    const int c = 3;
    LabelMap y = random_labels(4, 4, c, 1);
    ParamSet net = passthrough_net(c);

    REQUIRE(supervised_loss(net, onehot_image(y, c, 30.0), y).item() < 1e-9);
    REQUIRE(supervised_loss(net, Tensor::zeros({c, 4, 4}), y).item() ==
            Catch::Approx(std::log(double(c))).epsilon(1e-12));
}

TEST_CASE("supervised_loss matches a manual CE computation on a 2x2 image") {
    const int c = 2;
    ParamSet net = passthrough_net(c);
    Tensor img = Tensor::from_data({2, 2, 2}, {0.3, -0.1, 1.2, 0.0,  // channel 0
                                               -0.4, 0.9, 0.0, 0.7});
    LabelMap y(2, 2);
    y.v = {0, 1, 0, 1};

    double manual = 0.0;
    for (int p = 0; p < 4; ++p) {
        const double l0 = img.data()[p], l1 = img.data()[4 + p];
        const double m = std::max(l0, l1);
        const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
        manual += lse - (y.v[p] == 0 ? l0 : l1);
    }
    manual /= 4.0;
    REQUIRE(supervised_loss(net, img, y).item() == Catch::Approx(manual).epsilon(1e-12));
}

TEST_CASE("pseudo_label on an all-zero teacher collapses to class 0 at 1/C") {
    const int c = 4;
    ParamSet zero;
    zero.add("conv0.weight", Tensor::zeros({c, c, 1, 1}));
    zero.add("conv0.bias", Tensor::zeros({c}));
    PseudoLabel pl = pseudo_label(zero, Tensor::zeros({c, 3, 3}));
    for (uint8_t v : pl.label.v) REQUIRE(v == 0);
    for (double conf : pl.confidence) REQUIRE(conf == Catch::Approx(1.0 / c).margin(1e-12));
}

TEST_CASE("pseudo_label saturates when one class dominates") {
    const int c = 3;
    ParamSet net = passthrough_net(c);
    Tensor img = Tensor::zeros({c, 4, 4});
    for (int p = 0; p < 16; ++p) img.data()[size_t(2) * 16 + p] = 40.0;
    PseudoLabel pl = pseudo_label(net, img);
    for (uint8_t v : pl.label.v) REQUIRE(v == 2);
    for (double conf : pl.confidence) REQUIRE(conf > 1.0 - 1e-9);
}

TEST_CASE("pseudo_label argmax agrees with an independent per-pixel scan") {
    Tensor logits = random_image(5, 6, 7, 33);
    PseudoLabel pl = pseudo_label_from_logits(logits);
    const int n = 42;
    for (int p = 0; p < n; ++p) {
        int best = 0;
        for (int j = 1; j < 5; ++j)
            if (logits.data()[size_t(j) * n + p] > logits.data()[size_t(best) * n + p]) best = j;
        REQUIRE(pl.label.v[p] == best);
        REQUIRE(pl.confidence[p] >= 0.0);
        REQUIRE(pl.confidence[p] <= 1.0);
    }
}

TEST_CASE("pseudo_label is invariant to per-pixel constant logit shifts") {
    Tensor logits = random_image(4, 5, 5, 44);
    Tensor shifted = logits.deep_copy();
    const int n = 25;
    for (int p = 0; p < n; ++p)
        for (int j = 0; j < 4; ++j) shifted.data()[size_t(j) * n + p] += 3.7;
    PseudoLabel a = pseudo_label_from_logits(logits);
    PseudoLabel b = pseudo_label_from_logits(shifted);
    REQUIRE(a.label == b.label);
    for (int p = 0; p < n; ++p)
        REQUIRE(a.confidence[p] == Catch::Approx(b.confidence[p]).margin(1e-12));
}

TEST_CASE("bridging_loss with an all-ones mask equals the supervised loss") {
    const int c = 3;
    ParamSet net = random_params(7, c);
    Tensor xs = random_image(c, 4, 4, 8);
    LabelMap ys = random_labels(4, 4, c, 9);
    Tensor xt = random_image(c, 4, 4, 10);
    LabelMap yt = random_labels(4, 4, c, 11);

    mixing::Bridge all = mixing::classmix(xs, ys, xt, yt, {0, 1, 2});
    REQUIRE(bridging_loss(net, all).item() == supervised_loss(net, xs, ys).item());

    mixing::Bridge none = mixing::classmix(xs, ys, xt, yt, {});
    REQUIRE(bridging_loss(net, none).item() ==
            pixel_softmax_ce(segnet::forward(net, xt), yt).item());
}

TEST_CASE("bridging_loss decomposes over mask regions") {
    const int c = 3;
    ParamSet net = random_params(17, c);
    Tensor xs = random_image(c, 4, 4, 18);
    LabelMap ys = random_labels(4, 4, c, 19);
    Tensor xt = random_image(c, 4, 4, 20);
    LabelMap yt = random_labels(4, 4, c, 21);

    mixing::Bridge b = mixing::classmix(xs, ys, xt, yt, {0});
    const int n = 16;
    const int n_src = b.mask_used.count();
    REQUIRE(n_src > 0);
    REQUIRE(n_src < n);

    // region CE via the ignore mechanism
    LabelMap src_only = b.label, tgt_only = b.label;
    for (int p = 0; p < n; ++p) {
        if (b.mask_used.mask[p]) tgt_only.v[p] = kIgnoreLabel;
        else src_only.v[p] = kIgnoreLabel;
    }
    Tensor logits = segnet::forward(net, b.image);
    const double ce_src = pixel_softmax_ce(logits, src_only).item();
    const double ce_tgt = pixel_softmax_ce(logits, tgt_only).item();
    const double expect = (ce_src * n_src + ce_tgt * (n - n_src)) / n;
    REQUIRE(bridging_loss(net, b).item() == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ema_update endpoints and midpoint") {
    TeacherStudent pair;
    pair.student = random_params(30);
    pair.teacher = clone_params(pair.student);
    for (auto& e : pair.teacher.entries)
        for (auto& v : e.tensor.data()) v = 0.0;

    ParamSet teacher_before = clone_params(pair.teacher);

    pair.alpha = 1.0;
    ema_update(pair);
    REQUIRE(pair.teacher.flatten_values() == teacher_before.flatten_values());

    pair.alpha = 0.0;
    ema_update(pair);
    REQUIRE(pair.teacher.flatten_values() == pair.student.flatten_values());

    // alpha=0.5 from theta'=0, theta=2 -> 1 everywhere
    for (auto& e : pair.teacher.entries)
        for (auto& v : e.tensor.data()) v = 0.0;
    for (auto& e : pair.student.entries)
        for (auto& v : e.tensor.data()) v = 2.0;
    pair.alpha = 0.5;
    ema_update(pair);
    for (const auto& e : pair.teacher.entries)
        for (double v : e.tensor.data()) REQUIRE(v == 1.0);

    REQUIRE(pair.teacher_updates == 3);
}

TEST_CASE("ema_update rejects incongruent parameter sets") {
    TeacherStudent pair;
    pair.student = random_params(31);
    pair.teacher = random_params(31, 4);
    REQUIRE_THROWS_AS(ema_update(pair), std::invalid_argument);
}

TEST_CASE("ema_update result lies between teacher and student") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        TeacherStudent pair;
        pair.student = random_params(100 + rep);
        pair.teacher = random_params(200 + rep);
        pair.alpha = u(rng);
        ParamSet old_teacher = clone_params(pair.teacher);
        ema_update(pair);
        const auto tn = pair.teacher.flatten_values();
        const auto to = old_teacher.flatten_values();
        const auto s = pair.student.flatten_values();
        for (size_t i = 0; i < tn.size(); ++i) {
            const double lo = std::min(to[i], s[i]) - 1e-12;
            const double hi = std::max(to[i], s[i]) + 1e-12;
            REQUIRE(tn[i] >= lo);
            REQUIRE(tn[i] <= hi);
        }
    }
}

TEST_CASE("sgd on the student never touches the teacher") {
    TeacherStudent pair;
    pair.student = random_params(60);
    pair.teacher = clone_params(pair.student);
    const auto teacher_bytes = pair.teacher.flatten_values();

    pair.student.set_requires_grad(true);
    pair.student.zero_grad();
    Tensor img = random_image(3, 4, 4, 61);
    LabelMap y = random_labels(4, 4, 3, 62);
    Tape tape;
    {
        Tape::Scope scope(tape);
        Tensor loss = supervised_loss(pair.student, img, y);
        tape.backward(loss);
    }
    OptimState st = OptimState::init(pair.student, 0.1, 0.9, 0.0, 0.9, 10);
    sgd_step(pair.student, st, 0.1);

    REQUIRE(pair.teacher.flatten_values() == teacher_bytes);
    REQUIRE(pair.teacher_updates == 0);
    // and the step did move the student
    REQUIRE(pair.student.flatten_values() != teacher_bytes);
}

TEST_CASE("confidence_weight is the fraction of pixels above threshold") {
    PseudoLabel pl;
    pl.confidence = {0.99, 0.5, 0.96, 0.98};
    REQUIRE(confidence_weight(pl, 0.968) == Catch::Approx(0.5));
    REQUIRE(confidence_weight(PseudoLabel{}) == 0.0);
}
