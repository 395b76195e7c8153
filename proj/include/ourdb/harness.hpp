#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ourdb/af_ema.hpp"
#include "ourdb/mean_teacher.hpp"
#include "ourdb/metrics.hpp"
#include "ourdb/mixing.hpp"
#include "ourdb/ods.hpp"
#include "ourdb/optim.hpp"
#include "ourdb/plots.hpp"
#include "ourdb/scenegen.hpp"
#include "ourdb/segnet.hpp"

namespace ourdb::harness {

struct Toggles {
    bool ods = false;
    bool af_ema = false;
    bool cgmix = false;
    bool l_unsup = false;
    bool conf_weighting = false;
};

/// Full experiment description. (config, seed) determines every byte of the
/// run: datasets, init, sampling, and therefore checkpoints and logs.
struct ExperimentConfig {
    scenegen::GeneratorConfig generator;
    segnet::SegNetConfig model;

    double base_lr = 2.5e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_power = 0.9;
    int max_iter = 2000;
    int batch_size = 4;

    double ema_alpha = 0.999;
    double lambda1 = 0.99;
    double lambda2 = 0.9999;
    std::string fisher_norm_scope = "tensor";  // tensor | global
    int fisher_cap = 256;

    int n_aug = 10;
    double cgmix_sigma = 1.0;
    int cgmix_radius = 2;
    double conf_threshold = 0.968;

    Toggles toggles;
    uint64_t seed = 1;
    int eval_every = 1;                     // epochs between evals; 0 = final only
    std::vector<std::string> domain_order;  // empty = generator order t0..tK-1

    void validate() const {
        generator.validate();
        model.validate();
        if (model.num_classes != generator.num_classes)
            throw ConfigError("config: model classes != generator classes");
        if (!(lambda1 <= lambda2) || lambda1 < 0.0 || lambda2 > 1.0)
            throw ConfigError("config: need 0 <= lambda1 <= lambda2 <= 1");
        if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
        if (max_iter < 1) throw ConfigError("config: max_iter must be >= 1");
        if (ema_alpha < 0.0 || ema_alpha > 1.0)
            throw ConfigError("config: ema_alpha must be in [0,1]");
        if (n_aug < 1) throw ConfigError("config: n_aug must be >= 1");
        if (cgmix_radius < 1 || cgmix_sigma <= 0.0)
            throw ConfigError("config: bad cgmix kernel parameters");
        if (fisher_norm_scope != "tensor" && fisher_norm_scope != "global")
            throw ConfigError("config: fisher_norm_scope must be 'tensor' or 'global'");
        if (eval_every < 0) throw ConfigError("config: eval_every must be >= 0");
        if (generator.target_train < batch_size)
            throw ConfigError("config: target train split smaller than one batch");
    }

    nlohmann::json to_json() const {
        return {{"generator",
                 {{"num_classes", generator.num_classes},
                  {"height", generator.height},
                  {"width", generator.width},
                  {"num_targets", generator.num_targets},
                  {"source_train", generator.source_train},
                  {"target_train", generator.target_train},
                  {"val_per_domain", generator.val_per_domain},
                  {"seed", generator.seed}}},
                {"model",
                 {{"channels", model.channels},
                  {"num_classes", model.num_classes},
                  {"kernel", model.kernel},
                  {"init_scale", model.init_scale}}},
                {"base_lr", base_lr},
                {"momentum", momentum},
                {"weight_decay", weight_decay},
                {"lr_power", lr_power},
                {"max_iter", max_iter},
                {"batch_size", batch_size},
                {"ema_alpha", ema_alpha},
                {"lambda1", lambda1},
                {"lambda2", lambda2},
                {"fisher_norm_scope", fisher_norm_scope},
                {"fisher_cap", fisher_cap},
                {"n_aug", n_aug},
                {"cgmix_sigma", cgmix_sigma},
                {"cgmix_radius", cgmix_radius},
                {"conf_threshold", conf_threshold},
                {"toggles",
                 {{"ods", toggles.ods},
                  {"af_ema", toggles.af_ema},
                  {"cgmix", toggles.cgmix},
                  {"l_unsup", toggles.l_unsup},
                  {"conf_weighting", toggles.conf_weighting}}},
                {"seed", seed},
                {"eval_every", eval_every},
                {"domain_order", domain_order}};
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig c;
        auto get = [&](const nlohmann::json& o, const char* key, auto& into) {
            if (o.contains(key)) into = o[key].get<std::decay_t<decltype(into)>>();
        };
        if (j.contains("generator")) {
            const auto& g = j["generator"];
            get(g, "num_classes", c.generator.num_classes);
            get(g, "height", c.generator.height);
            get(g, "width", c.generator.width);
            get(g, "num_targets", c.generator.num_targets);
            get(g, "source_train", c.generator.source_train);
            get(g, "target_train", c.generator.target_train);
            get(g, "val_per_domain", c.generator.val_per_domain);
            get(g, "seed", c.generator.seed);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            get(m, "channels", c.model.channels);
            get(m, "num_classes", c.model.num_classes);
            get(m, "kernel", c.model.kernel);
            get(m, "init_scale", c.model.init_scale);
        }
        get(j, "base_lr", c.base_lr);
        get(j, "momentum", c.momentum);
        get(j, "weight_decay", c.weight_decay);
        get(j, "lr_power", c.lr_power);
        get(j, "max_iter", c.max_iter);
        get(j, "batch_size", c.batch_size);
        get(j, "ema_alpha", c.ema_alpha);
        get(j, "lambda1", c.lambda1);
        get(j, "lambda2", c.lambda2);
        get(j, "fisher_norm_scope", c.fisher_norm_scope);
        get(j, "fisher_cap", c.fisher_cap);
        get(j, "n_aug", c.n_aug);
        get(j, "cgmix_sigma", c.cgmix_sigma);
        get(j, "cgmix_radius", c.cgmix_radius);
        get(j, "conf_threshold", c.conf_threshold);
        if (j.contains("toggles")) {
            const auto& t = j["toggles"];
            get(t, "ods", c.toggles.ods);
            get(t, "af_ema", c.toggles.af_ema);
            get(t, "cgmix", c.toggles.cgmix);
            get(t, "l_unsup", c.toggles.l_unsup);
            get(t, "conf_weighting", c.toggles.conf_weighting);
        }
        get(j, "seed", c.seed);
        get(j, "eval_every", c.eval_every);
        get(j, "domain_order", c.domain_order);
        return c;
    }
};

/// Append-only JSON-lines event stream, kept in memory and optionally teed
/// to a file as it grows.
struct RunLog {
    std::vector<nlohmann::json> events;
    std::ofstream sink;

    void open(const std::string& path) {
        sink.open(path);
        if (!sink) throw DataError("cannot open '" + path + "' for writing");
    }
    void append(nlohmann::json e) {
        if (sink.is_open()) sink << e.dump() << "\n";
        events.push_back(std::move(e));
    }
    void close() {
        if (sink.is_open()) sink.close();
    }

    std::vector<nlohmann::json> of_type(const std::string& type) const {
        std::vector<nlohmann::json> out;
        for (const auto& e : events)
            if (e.value("event", "") == type) out.push_back(e);
        return out;
    }
};

struct EvalPoint {
    int iter = 0;
    int epoch = 0;
    std::vector<metrics::EvalReport> reports;
    double avg_miou = 0.0;
};

struct TrainResult {
    TeacherStudent pair;
    RunLog log;
    std::vector<EvalPoint> evals;
    std::vector<metrics::EvalReport> final_reports;
    double final_avg_miou = 0.0;
    segnet::SegNetConfig model_config;
};

namespace harness_detail {

// Label-free view over one or more train datasets; the trainer only ever
// needs target images, which keeps the label-read audit clean.
struct ImagePool {
    std::vector<const scenegen::Dataset*> parts;
    std::vector<std::pair<int, int>> index;  // (part, sample)

    static ImagePool over(const std::vector<const scenegen::Dataset*>& datasets) {
        ImagePool p;
        p.parts = datasets;
        for (size_t d = 0; d < datasets.size(); ++d)
            for (size_t i = 0; i < datasets[d]->size(); ++i)
                p.index.push_back({static_cast<int>(d), static_cast<int>(i)});
        return p;
    }

    size_t size() const { return index.size(); }
    const Tensor& image(size_t i) const {
        return parts[index[i].first]->image(index[i].second);
    }
    std::vector<const Tensor*> images() const {
        std::vector<const Tensor*> out;
        out.reserve(index.size());
        for (size_t i = 0; i < index.size(); ++i) out.push_back(&image(i));
        return out;
    }
};

inline ElementArrays fisher_over_pool(const ParamSet& teacher, const ImagePool& pool, int cap,
                                      FisherStats* stats) {
    // Mirrors compute_fisher but over a label-free image pool (merged-target
    // runs). Single-dataset pools route through the Dataset overload so the
    // spec-facing path stays exercised.
    if (pool.parts.size() == 1) return compute_fisher(teacher, *pool.parts[0], cap, stats);
    detail::check(pool.size() > 0, "fisher: empty pool");
    ParamSet work = clone_params(teacher);
    work.set_requires_grad(true);
    const size_t n = pool.size();
    const size_t used = (cap > 0 && static_cast<size_t>(cap) < n) ? static_cast<size_t>(cap) : n;
    ElementArrays fisher;
    for (const auto& e : work.entries)
        fisher.emplace_back(static_cast<size_t>(e.tensor.size()), 0.0);
    for (size_t j = 0; j < used; ++j) {
        const size_t idx = j * n / used;
        work.zero_grad();
        Tape tape;
        {
            Tape::Scope scope(tape);
            Tensor logits = segnet::forward(work, pool.image(idx));
            const PseudoLabel pl = pseudo_label_from_logits(logits);
            Tensor loss = pixel_softmax_ce(logits, pl.label);
            tape.backward(loss);
        }
        for (size_t i = 0; i < work.entries.size(); ++i) {
            const double* g = work.entries[i].tensor.grad().data();
            for (size_t k = 0; k < fisher[i].size(); ++k) fisher[i][k] += g[k] * g[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(used);
    for (auto& arr : fisher)
        for (double& v : arr) v *= inv;
    if (stats) {
        stats->samples_used = static_cast<int>(used);
        stats->capped = used < n;
        double mn = 1e308, mx = -1e308, sum = 0.0;
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

}  // namespace harness_detail

/// Teacher-model inference over every target val split.
inline std::vector<metrics::EvalReport> evaluate_targets(const ParamSet& model,
                                                         const scenegen::Benchmark& data) {
    std::vector<metrics::EvalReport> reports;
    for (const auto& val : data.target_val) {
        metrics::ConfusionMatrix cm(val.num_classes);
        for (size_t i = 0; i < val.size(); ++i) {
            const PseudoLabel pred = pseudo_label(model, val.image(i));
            cm.accumulate(pred.label, val.label(i));
        }
        reports.push_back(metrics::miou(cm, val.domain_id));
    }
    return reports;
}

struct TrainOptions {
    std::string out_dir;        // empty = no files
    bool dump_fisher = false;   // write ODBF snapshots per computation
    bool dump_bridges = false;  // write PGM triptychs for the first batch of each epoch
};

/// The full training loop: per iteration, a source batch and a batch from
/// the single active target domain; the teacher pseudo-labels the targets;
/// bridges carry source classes into target scenes; the student minimizes
/// supervised + bridging CE with poly-LR SGD; the teacher follows by EMA,
/// or by Fisher-modulated EMA once a domain switch has produced
/// coefficients. Epoch completion drives the domain selector.
inline TrainResult train(const ExperimentConfig& cfg,
                         const scenegen::Benchmark* external_data = nullptr,
                         const TrainOptions& opts = {}) {
    cfg.validate();
    namespace fs = std::filesystem;
    if (!opts.out_dir.empty()) fs::create_directories(opts.out_dir);

    // data: derived from the run seed unless supplied explicitly
    scenegen::Benchmark generated;
    if (!external_data) {
        scenegen::GeneratorConfig g = cfg.generator;
        g.seed = mix64(cfg.seed, 0xDA7AULL);
        generated = scenegen::build_benchmark(g);
    }
    const scenegen::Benchmark& data = external_data ? *external_data : generated;
    const int num_classes = data.source_train.num_classes;
    if (num_classes != cfg.model.num_classes)
        throw ConfigError("train: dataset classes do not match the model");
    for (const auto& t : data.target_train)
        if (t.size() < static_cast<size_t>(cfg.batch_size))
            throw DataError("train: target '" + t.domain_id + "' smaller than one batch");

    // model + optimizer
    segnet::SegNetConfig mcfg = cfg.model;
    mcfg.init_seed = mix64(cfg.seed, 0x1217ULL);
    TeacherStudent pair;
    pair.student = segnet::init(mcfg);
    pair.student.set_requires_grad(true);
    pair.teacher = clone_params(pair.student);
    pair.alpha = cfg.ema_alpha;
    OptimState opt = OptimState::init(pair.student, cfg.base_lr, cfg.momentum, cfg.weight_decay,
                                      cfg.lr_power, cfg.max_iter);

    // domain schedule
    std::vector<std::string> order;
    if (cfg.toggles.ods) {
        if (!cfg.domain_order.empty()) order = cfg.domain_order;
        else
            for (const auto& t : data.target_train) order.push_back(t.domain_id);
        for (const auto& id : order)
            if (!data.find(id, "train"))
                throw ConfigError("train: domain_order names unknown domain '" + id + "'");
        if (order.size() != data.target_train.size())
            throw ConfigError("train: domain_order must cover every target domain");
    } else {
        order = {"targets"};  // merged pseudo-domain
    }
    OdsState ods = OdsState::create(order);

    auto pool_for = [&](const std::string& id) {
        std::vector<const scenegen::Dataset*> parts;
        if (cfg.toggles.ods) parts = {data.find(id, "train")};
        else
            for (const auto& t : data.target_train) parts.push_back(&t);
        return harness_detail::ImagePool::over(parts);
    };

    TrainResult res;
    res.model_config = mcfg;
    if (!opts.out_dir.empty()) res.log.open(opts.out_dir + "/runlog.jsonl");
    res.log.append({{"event", "config"}, {"config", cfg.to_json()}});

    std::mt19937_64 rng(mix64(cfg.seed, 0x7EA1ULL));
    const mixing::CgmixParams cg{cfg.n_aug, cfg.cgmix_sigma, cfg.cgmix_radius};

    // source sampling: independent shuffled stream with wraparound
    std::vector<int> src_order(data.source_train.size());
    std::iota(src_order.begin(), src_order.end(), 0);
    size_t src_pos = src_order.size();  // force shuffle on first use
    auto next_source = [&]() {
        if (src_pos >= src_order.size()) {
            std::shuffle(src_order.begin(), src_order.end(), rng);
            src_pos = 0;
        }
        return src_order[src_pos++];
    };

    harness_detail::ImagePool pool = pool_for(ods.current_domain());
    std::vector<int> tgt_order;
    size_t tgt_pos = 0;
    int epoch_len = 0;
    auto begin_epoch = [&]() {
        pool = pool_for(ods.current_domain());
        tgt_order.assign(pool.size(), 0);
        std::iota(tgt_order.begin(), tgt_order.end(), 0);
        std::shuffle(tgt_order.begin(), tgt_order.end(), rng);
        tgt_pos = 0;
        epoch_len = static_cast<int>(pool.size()) / cfg.batch_size;
    };
    begin_epoch();

    std::optional<ElementArrays> fisher_coeff;  // valid for the epoch after a switch
    int iter_in_epoch = 0;

    auto run_eval = [&](int iter) {
        EvalPoint ep;
        ep.iter = iter;
        ep.epoch = ods.epochs_completed;
        ep.reports = evaluate_targets(pair.teacher, data);
        ep.avg_miou = metrics::average_over_targets(ep.reports);
        nlohmann::json reports = nlohmann::json::array();
        for (const auto& r : ep.reports)
            reports.push_back({{"domain", r.domain_id}, {"miou", r.miou}});
        res.log.append({{"event", "eval"},
                        {"iter", iter},
                        {"epoch", ep.epoch},
                        {"reports", reports},
                        {"avg_miou", ep.avg_miou}});
        res.evals.push_back(std::move(ep));
    };

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        const std::string active = ods.current_domain();

        // assemble batch
        std::vector<int> src_idx(cfg.batch_size), tgt_idx(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            src_idx[b] = next_source();
            tgt_idx[b] = tgt_order[tgt_pos++];
        }

        // teacher pseudo-labels and bridges (outside any tape)
        std::vector<PseudoLabel> pls(cfg.batch_size);
        std::vector<mixing::Bridge> bridges;
        std::vector<std::vector<double>> weights(cfg.batch_size);
        bridges.reserve(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Tensor& xt = pool.image(tgt_idx[b]);
            pls[b] = pseudo_label(pair.teacher, xt);
            const Tensor& xs = data.source_train.image(src_idx[b]);
            const LabelMap& ys = data.source_train.label(src_idx[b]);
            const std::vector<int> classes = mixing::select_classes(ys, rng);
            mixing::Bridge br =
                cfg.toggles.cgmix
                    ? mixing::cgmix(xs, ys, xt, pls[b].label, classes, cg, num_classes, rng)
                    : mixing::classmix(xs, ys, xt, pls[b].label, classes);
            if (cfg.toggles.conf_weighting) {
                const double q = confidence_weight(pls[b], cfg.conf_threshold);
                weights[b].assign(br.label.size(), 1.0);
                for (int p = 0; p < br.label.size(); ++p)
                    if (!br.mask_used.mask[p]) weights[b][p] = q;
            }
            if (opts.dump_bridges && !opts.out_dir.empty() && iter_in_epoch == 0 && b == 0) {
                const std::string stem =
                    opts.out_dir + "/bridge_e" + std::to_string(ods.epochs_completed);
                mixing::write_pgm(ys, num_classes, stem + "_source.pgm");
                mixing::write_pgm(pls[b].label, num_classes, stem + "_target.pgm");
                mixing::write_pgm(br.label, num_classes, stem + "_bridge.pgm");
            }
            bridges.push_back(std::move(br));
        }

        // student losses
        pair.student.zero_grad();
        Tape tape;
        double sup_mean = 0.0, brg_mean = 0.0, unsup_mean = 0.0, total_val = 0.0;
        {
            Tape::Scope scope(tape);
            Tensor acc;
            bool first = true;
            auto absorb = [&](Tensor term) {
                if (first) {
                    acc = term;
                    first = false;
                } else {
                    acc = add(acc, term);
                }
                return term.item();
            };
            for (int b = 0; b < cfg.batch_size; ++b) {
                sup_mean += absorb(supervised_loss(pair.student,
                                                   data.source_train.image(src_idx[b]),
                                                   data.source_train.label(src_idx[b])));
                brg_mean += absorb(bridging_loss(
                    pair.student, bridges[b],
                    cfg.toggles.conf_weighting ? &weights[b] : nullptr));
                if (cfg.toggles.l_unsup)
                    unsup_mean += absorb(pixel_softmax_ce(
                        segnet::forward(pair.student, pool.image(tgt_idx[b])), pls[b].label));
            }
            Tensor total = scale(acc, 1.0 / cfg.batch_size);
            total_val = total.item();
            if (!std::isfinite(total_val))
                throw NumericError("train: non-finite loss at iteration " + std::to_string(iter));
            tape.backward(total);
        }
        sup_mean /= cfg.batch_size;
        brg_mean /= cfg.batch_size;
        unsup_mean /= cfg.batch_size;

        const double lr = poly_lr(iter, opt);
        sgd_step(pair.student, opt, lr);

        if (cfg.toggles.af_ema && fisher_coeff) af_ema_update(pair, *fisher_coeff);
        else ema_update(pair);

        nlohmann::json ev = {{"event", "iter"},    {"iter", iter},
                             {"epoch", ods.epochs_completed}, {"domain", active},
                             {"lr", lr},           {"loss", total_val},
                             {"l_sup", sup_mean},  {"l_brg", brg_mean}};
        if (cfg.toggles.l_unsup) ev["l_unsup"] = unsup_mean;
        res.log.append(std::move(ev));

        // epoch boundary
        if (++iter_in_epoch >= epoch_len) {
            const bool last_iter = iter + 1 == cfg.max_iter;
            if (cfg.eval_every > 0 && (ods.epochs_completed + 1) % cfg.eval_every == 0 &&
                !last_iter)
                run_eval(iter + 1);

            const SwitchEvent sw = ods.on_epoch_complete();
            res.log.append({{"event", "domain_switch"},
                            {"epoch", sw.epoch},
                            {"iter", iter + 1},
                            {"from", sw.from},
                            {"to", sw.to}});

            if (cfg.toggles.af_ema) {
                FisherStats st;
                const harness_detail::ImagePool completed = pool_for(sw.from);
                ElementArrays raw = harness_detail::fisher_over_pool(pair.teacher, completed,
                                                                     cfg.fisher_cap, &st);
                const FisherNormScope scope = cfg.fisher_norm_scope == "global"
                                                  ? FisherNormScope::kGlobal
                                                  : FisherNormScope::kTensor;
                fisher_coeff = normalize_clip(raw, cfg.lambda1, cfg.lambda2, scope);
                res.log.append({{"event", "fisher_computed"},
                                {"epoch", sw.epoch},
                                {"domain", sw.from},
                                {"samples", st.samples_used},
                                {"capped", st.capped},
                                {"raw_min", st.raw_min},
                                {"raw_max", st.raw_max},
                                {"raw_mean", st.raw_mean}});
                if (opts.dump_fisher && !opts.out_dir.empty()) {
                    FisherCoefficients fc;
                    fc.raw = std::move(raw);
                    fc.adjusted = *fisher_coeff;
                    fc.computed_on = sw.from;
                    fc.lambda1 = cfg.lambda1;
                    fc.lambda2 = cfg.lambda2;
                    save_fisher(opts.out_dir + "/fisher_epoch" + std::to_string(sw.epoch) +
                                    ".odbf",
                                pair.teacher, fc);
                }
            }
            begin_epoch();
            iter_in_epoch = 0;
        }
    }

    run_eval(cfg.max_iter);
    res.final_reports = res.evals.back().reports;
    res.final_avg_miou = res.evals.back().avg_miou;
    res.log.append({{"event", "done"},
                    {"iter", cfg.max_iter},
                    {"epochs", ods.epochs_completed},
                    {"avg_miou", res.final_avg_miou}});

    if (!opts.out_dir.empty()) {
        segnet::save_checkpoint(opts.out_dir + "/student.odbc", mcfg, cfg.max_iter, pair.student);
        segnet::save_checkpoint(opts.out_dir + "/teacher.odbc", mcfg, cfg.max_iter, pair.teacher);
        std::ofstream csv(opts.out_dir + "/report.csv");
        metrics::write_report_csv(csv, res.final_reports, res.final_avg_miou);
        std::ofstream js(opts.out_dir + "/report.json");
        nlohmann::json jr = nlohmann::json::array();
        for (const auto& r : res.final_reports) jr.push_back(metrics::report_to_json(r));
        js << nlohmann::json({{"reports", jr}, {"avg_miou", res.final_avg_miou}}).dump(2) << "\n";
    }
    res.log.close();
    res.pair = std::move(pair);
    return res;
}

// ---- ablation and order studies ------------------------------------------------

struct AblationRow {
    std::string label;
    Toggles toggles;
    std::vector<double> per_domain;  // seed-averaged mIoU per target
    double avg = 0.0;
};

struct AblationReport {
    std::vector<std::string> domains;
    std::vector<AblationRow> rows;
};

/// The component ablation: baseline, +ODS, +ODS+AF-EMA, +ODS+AF-EMA+CGMix,
/// each trained with the same seed set and averaged.
inline AblationReport ablate(const ExperimentConfig& base, const std::vector<uint64_t>& seeds,
                             std::ostream* progress = nullptr) {
    detail::check(!seeds.empty(), "ablate: need at least one seed");
    const std::vector<std::pair<std::string, Toggles>> spec = {
        {"baseline", {false, false, false, base.toggles.l_unsup, base.toggles.conf_weighting}},
        {"+ods", {true, false, false, base.toggles.l_unsup, base.toggles.conf_weighting}},
        {"+ods+af_ema", {true, true, false, base.toggles.l_unsup, base.toggles.conf_weighting}},
        {"+ods+af_ema+cgmix",
         {true, true, true, base.toggles.l_unsup, base.toggles.conf_weighting}},
    };

    AblationReport rep;
    for (const auto& [label, tg] : spec) {
        AblationRow row;
        row.label = label;
        row.toggles = tg;
        for (uint64_t seed : seeds) {
            ExperimentConfig cfg = base;
            cfg.toggles = tg;
            cfg.seed = seed;
            TrainResult r = train(cfg);
            if (rep.domains.empty())
                for (const auto& er : r.final_reports) rep.domains.push_back(er.domain_id);
            if (row.per_domain.empty()) row.per_domain.assign(rep.domains.size(), 0.0);
            for (size_t d = 0; d < r.final_reports.size(); ++d)
                row.per_domain[d] += r.final_reports[d].miou;
            row.avg += r.final_avg_miou;
            if (progress)
                (*progress) << label << " seed " << seed << " avg_miou " << r.final_avg_miou
                            << "\n";
        }
        for (double& v : row.per_domain) v /= seeds.size();
        row.avg /= seeds.size();
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

inline void write_ablation_csv(std::ostream& os, const AblationReport& rep) {
    os << "config,ods,af_ema,cgmix";
    for (const auto& d : rep.domains) os << "," << d;
    os << ",avg\n";
    for (const auto& row : rep.rows) {
        os << row.label << "," << (row.toggles.ods ? 1 : 0) << "," << (row.toggles.af_ema ? 1 : 0)
           << "," << (row.toggles.cgmix ? 1 : 0);
        for (double v : row.per_domain) os << "," << v;
        os << "," << row.avg << "\n";
    }
}

struct OrderRow {
    std::vector<std::string> order;
    std::vector<double> per_domain;
    double avg = 0.0;
};

struct OrderReport {
    std::vector<std::string> domains;
    std::vector<OrderRow> rows;
    double max_gap = 0.0;  // max |avg_i - avg_j| over order pairs
};

/// One run per domain-order permutation, identical seeds across orders.
inline OrderReport order_study(const ExperimentConfig& base,
                               const std::vector<std::vector<std::string>>& permutations,
                               const std::vector<uint64_t>& seeds,
                               std::ostream* progress = nullptr) {
    detail::check(!permutations.empty(), "order_study: need at least one permutation");
    detail::check(!seeds.empty(), "order_study: need at least one seed");
    if (base.generator.num_targets < 2)
        throw ConfigError("order_study: needs K >= 2 target domains");

    std::vector<std::string> ids;
    for (int k = 0; k < base.generator.num_targets; ++k) ids.push_back("t" + std::to_string(k));
    for (const auto& perm : permutations) {
        std::vector<std::string> sorted = perm, want = ids;
        std::sort(sorted.begin(), sorted.end());
        std::sort(want.begin(), want.end());
        if (sorted != want)
            throw ConfigError("order_study: permutation is not a permutation of the target ids");
    }

    OrderReport rep;
    rep.domains = ids;
    for (const auto& perm : permutations) {
        OrderRow row;
        row.order = perm;
        row.per_domain.assign(ids.size(), 0.0);
        for (uint64_t seed : seeds) {
            ExperimentConfig cfg = base;
            cfg.toggles.ods = true;  // ordering is only meaningful under ODS
            cfg.domain_order = perm;
            cfg.seed = seed;
            TrainResult r = train(cfg);
            for (size_t d = 0; d < r.final_reports.size(); ++d) {
                // final_reports follow benchmark order == ids order
                row.per_domain[d] += r.final_reports[d].miou;
            }
            row.avg += r.final_avg_miou;
            if (progress) {
                (*progress) << "order";
                for (const auto& id : perm) (*progress) << " " << id;
                (*progress) << " seed " << seed << " avg_miou " << r.final_avg_miou << "\n";
            }
        }
        for (double& v : row.per_domain) v /= seeds.size();
        row.avg /= seeds.size();
        rep.rows.push_back(std::move(row));
    }
    for (size_t i = 0; i < rep.rows.size(); ++i)
        for (size_t j = i + 1; j < rep.rows.size(); ++j)
            rep.max_gap = std::max(rep.max_gap, std::abs(rep.rows[i].avg - rep.rows[j].avg));
    return rep;
}

inline void write_order_csv(std::ostream& os, const OrderReport& rep) {
    os << "order";
    for (const auto& d : rep.domains) os << "," << d;
    os << ",avg,max_gap\n";
    for (const auto& row : rep.rows) {
        std::string label;
        for (const auto& id : row.order) label += (label.empty() ? "" : ">") + id;
        os << label;
        for (double v : row.per_domain) os << "," << v;
        os << "," << row.avg << "," << rep.max_gap << "\n";
    }
}

// ---- plotting from run logs -----------------------------------------------------

/// mIoU-vs-iteration charts, one per target domain plus the average.
/// Needs at least two eval events in the log.
inline std::vector<std::string> emit_plots(const std::vector<nlohmann::json>& events,
                                           const std::string& out_dir) {
    std::vector<nlohmann::json> evals;
    for (const auto& e : events)
        if (e.value("event", "") == "eval") evals.push_back(e);
    if (evals.size() < 2) throw DataError("emit_plots: need at least 2 eval events");

    std::filesystem::create_directories(out_dir);
    std::map<std::string, plots::Series> series;
    plots::Series avg;
    avg.name = "average";
    for (const auto& e : evals) {
        const double it = e["iter"].get<double>();
        avg.x.push_back(it);
        avg.y.push_back(e["avg_miou"].get<double>());
        for (const auto& r : e["reports"]) {
            const std::string id = r["domain"].get<std::string>();
            series[id].name = id;
            series[id].x.push_back(it);
            series[id].y.push_back(r["miou"].get<double>());
        }
    }
    std::vector<std::string> written;
    for (const auto& [id, s] : series) {
        const std::string path = out_dir + "/miou_" + id + ".svg";
        plots::write_chart(path, "target " + id, "iteration", "mIoU", s);
        written.push_back(path);
    }
    const std::string path = out_dir + "/miou_average.svg";
    plots::write_chart(path, "average over targets", "iteration", "mIoU", avg);
    written.push_back(path);
    return written;
}

inline std::vector<nlohmann::json> load_runlog(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    std::vector<nlohmann::json> events;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json e = nlohmann::json::parse(line, nullptr, false);
        if (e.is_discarded())
            throw DataError("'" + path + "': bad JSON at line " + std::to_string(lineno));
        events.push_back(std::move(e));
    }
    return events;
}

}  // namespace ourdb::harness
