// Command-line front end: gen / train / eval / ablate / order-study / plot.
// Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ourdb/harness.hpp"

namespace fs = std::filesystem;
using namespace ourdb;
using harness::ExperimentConfig;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<uint64_t> parse_seeds(const std::string& s) {
    std::vector<uint64_t> out;
    for (const auto& tok : split(s, ',')) out.push_back(std::stoull(tok));
    if (out.empty()) throw ConfigError("no seeds given");
    return out;
}

ExperimentConfig load_config_arg(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream f(argv[i + 1]);
            if (!f) throw DataError(std::string("cannot open config '") + argv[i + 1] + "'");
            nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
            if (j.is_discarded())
                throw ConfigError(std::string("config '") + argv[i + 1] + "' is not valid JSON");
            return ExperimentConfig::from_json(j);
        }
    }
    return ExperimentConfig{};
}

scenegen::Benchmark load_benchmark(const std::string& dir) {
    scenegen::Benchmark b;
    b.source_train = scenegen::load_dataset(dir + "/source_train.odbd");
    b.source_val = scenegen::load_dataset(dir + "/source_val.odbd");
    for (int k = 0;; ++k) {
        const std::string stem = dir + "/t" + std::to_string(k);
        if (!fs::exists(stem + "_train.odbd")) break;
        b.target_train.push_back(scenegen::load_dataset(stem + "_train.odbd"));
        b.target_val.push_back(scenegen::load_dataset(stem + "_val.odbd"));
    }
    if (b.target_train.empty()) throw DataError("no target datasets found under '" + dir + "'");
    return b;
}

void add_experiment_flags(CLI::App* cmd, ExperimentConfig& cfg, std::string& order_csv,
                          std::string& channels_csv) {
    cmd->add_option("--config", "JSON config file (flags override its fields)");
    cmd->add_option("--classes", cfg.generator.num_classes, "label-space size C");
    cmd->add_option("--height", cfg.generator.height);
    cmd->add_option("--width", cfg.generator.width);
    cmd->add_option("--targets", cfg.generator.num_targets, "number of target domains K");
    cmd->add_option("--source-train", cfg.generator.source_train);
    cmd->add_option("--target-train", cfg.generator.target_train);
    cmd->add_option("--val-per-domain", cfg.generator.val_per_domain);
    cmd->add_option("--gen-seed", cfg.generator.seed, "seed for the gen subcommand");
    cmd->add_option("--channels", channels_csv, "comma-separated layer widths, last = C");
    cmd->add_option("--kernel", cfg.model.kernel);
    cmd->add_option("--init-scale", cfg.model.init_scale);
    cmd->add_option("--lr", cfg.base_lr);
    cmd->add_option("--momentum", cfg.momentum);
    cmd->add_option("--weight-decay", cfg.weight_decay);
    cmd->add_option("--lr-power", cfg.lr_power);
    cmd->add_option("--max-iter", cfg.max_iter);
    cmd->add_option("--batch-size", cfg.batch_size);
    cmd->add_option("--ema-alpha", cfg.ema_alpha);
    cmd->add_option("--lambda1", cfg.lambda1);
    cmd->add_option("--lambda2", cfg.lambda2);
    cmd->add_option("--fisher-norm-scope", cfg.fisher_norm_scope, "tensor | global");
    cmd->add_option("--fisher-cap", cfg.fisher_cap, "max samples per Fisher pass (0 = all)");
    cmd->add_option("--n-aug", cfg.n_aug);
    cmd->add_option("--cgmix-sigma", cfg.cgmix_sigma);
    cmd->add_option("--cgmix-radius", cfg.cgmix_radius);
    cmd->add_option("--conf-threshold", cfg.conf_threshold);
    cmd->add_flag("--ods", cfg.toggles.ods, "cycle target domains one per epoch");
    cmd->add_flag("--af-ema", cfg.toggles.af_ema, "Fisher-modulated teacher updates");
    cmd->add_flag("--cgmix", cfg.toggles.cgmix, "context-guided placement search");
    cmd->add_flag("--l-unsup", cfg.toggles.l_unsup, "add the raw-target CE term");
    cmd->add_flag("--conf-weighting", cfg.toggles.conf_weighting,
                  "confidence-weight pseudo-label pixels in the bridge loss");
    cmd->add_option("--seed", cfg.seed);
    cmd->add_option("--eval-every", cfg.eval_every, "epochs between evals (0 = final only)");
    cmd->add_option("--order", order_csv, "domain order, e.g. t1,t0");
}

void finalize_config(ExperimentConfig& cfg, const std::string& order_csv,
                     const std::string& channels_csv) {
    if (!order_csv.empty()) cfg.domain_order = split(order_csv, ',');
    if (!channels_csv.empty()) {
        cfg.model.channels.clear();
        for (const auto& tok : split(channels_csv, ','))
            cfg.model.channels.push_back(std::stoi(tok));
        cfg.model.num_classes = cfg.model.channels.back();
    } else if (cfg.model.num_classes != cfg.generator.num_classes) {
        // keep model and generator in sync when only C was changed
        cfg.model.num_classes = cfg.generator.num_classes;
        cfg.model.channels.back() = cfg.generator.num_classes;
    }
}

void print_reports(const std::vector<metrics::EvalReport>& reports, double avg) {
    metrics::write_report_csv(std::cout, reports, avg);
    std::cout << "avg_miou " << avg << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multi-target domain adaptation harness"};
    app.require_subcommand(1);

    ExperimentConfig cfg;
    try {
        cfg = load_config_arg(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
    std::string order_csv, channels_csv, seeds_csv = "1,2,3,4,5";
    std::string out_dir = "out", data_dir, checkpoint, runlog, orders_csv;
    bool dump_fisher = false, dump_bridges = false;

    CLI::App* gen = app.add_subcommand("gen", "generate datasets to ODBD files");
    add_experiment_flags(gen, cfg, order_csv, channels_csv);
    gen->add_option("--out", out_dir, "output directory")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "run the training loop");
    add_experiment_flags(train_cmd, cfg, order_csv, channels_csv);
    train_cmd->add_option("--data", data_dir, "load datasets instead of generating");
    train_cmd->add_option("--out", out_dir, "run output directory");
    train_cmd->add_flag("--dump-fisher", dump_fisher, "write ODBF snapshots");
    train_cmd->add_flag("--dump-bridges", dump_bridges, "write PGM bridge triptychs");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on target vals");
    eval_cmd->add_option("--checkpoint", checkpoint, "ODBC checkpoint")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_option("--out", out_dir, "where to write report.csv/json (default stdout only)");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "4-row component ablation");
    add_experiment_flags(ablate_cmd, cfg, order_csv, channels_csv);
    ablate_cmd->add_option("--seeds", seeds_csv, "comma-separated seed list");
    ablate_cmd->add_option("--out", out_dir, "output directory for ablation.csv");

    CLI::App* order_cmd = app.add_subcommand("order-study", "domain-order comparison");
    add_experiment_flags(order_cmd, cfg, order_csv, channels_csv);
    order_cmd->add_option("--orders", orders_csv,
                          "semicolon-separated orders, e.g. 't0,t1;t1,t0' (default: both "
                          "directions for K=2)");
    order_cmd->add_option("--seeds", seeds_csv, "comma-separated seed list");
    order_cmd->add_option("--out", out_dir, "output directory for order_study.csv");

    CLI::App* plot_cmd = app.add_subcommand("plot", "render mIoU-vs-iteration SVGs");
    plot_cmd->add_option("--runlog", runlog, "runlog.jsonl from a training run")->required();
    plot_cmd->add_option("--out", out_dir, "output directory for SVG files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        finalize_config(cfg, order_csv, channels_csv);

        if (gen->parsed()) {
            cfg.generator.validate();
            fs::create_directories(out_dir);
            scenegen::Benchmark b = scenegen::build_benchmark(cfg.generator);
            scenegen::save_dataset(b.source_train, out_dir + "/source_train.odbd");
            scenegen::save_dataset(b.source_val, out_dir + "/source_val.odbd");
            for (size_t k = 0; k < b.target_train.size(); ++k) {
                const std::string stem = out_dir + "/t" + std::to_string(k);
                scenegen::save_dataset(b.target_train[k], stem + "_train.odbd");
                scenegen::save_dataset(b.target_val[k], stem + "_val.odbd");
            }
            std::cout << "wrote " << (2 + 2 * b.target_train.size()) << " datasets to " << out_dir
                      << "\n";
        } else if (train_cmd->parsed()) {
            harness::TrainOptions opts;
            opts.out_dir = out_dir;
            opts.dump_fisher = dump_fisher;
            opts.dump_bridges = dump_bridges;
            harness::TrainResult r;
            if (!data_dir.empty()) {
                scenegen::Benchmark b = load_benchmark(data_dir);
                r = harness::train(cfg, &b, opts);
            } else {
                r = harness::train(cfg, nullptr, opts);
            }
            print_reports(r.final_reports, r.final_avg_miou);
            std::cout << "outputs in " << out_dir << "\n";
        } else if (eval_cmd->parsed()) {
            segnet::Checkpoint ck = segnet::load_checkpoint(checkpoint);
            scenegen::Benchmark b = load_benchmark(data_dir);
            auto reports = harness::evaluate_targets(ck.params, b);
            const double avg = metrics::average_over_targets(reports);
            print_reports(reports, avg);
            if (eval_cmd->count("--out")) {
                fs::create_directories(out_dir);
                std::ofstream csv(out_dir + "/report.csv");
                metrics::write_report_csv(csv, reports, avg);
                nlohmann::json jr = nlohmann::json::array();
                for (const auto& rep : reports) jr.push_back(metrics::report_to_json(rep));
                std::ofstream js(out_dir + "/report.json");
                js << nlohmann::json({{"reports", jr}, {"avg_miou", avg}}).dump(2) << "\n";
            }
        } else if (ablate_cmd->parsed()) {
            harness::AblationReport rep = harness::ablate(cfg, parse_seeds(seeds_csv), &std::cout);
            fs::create_directories(out_dir);
            std::ofstream csv(out_dir + "/ablation.csv");
            harness::write_ablation_csv(csv, rep);
            harness::write_ablation_csv(std::cout, rep);
        } else if (order_cmd->parsed()) {
            std::vector<std::vector<std::string>> orders;
            if (!orders_csv.empty())
                for (const auto& o : split(orders_csv, ';')) orders.push_back(split(o, ','));
            else {
                std::vector<std::string> fwd;
                for (int k = 0; k < cfg.generator.num_targets; ++k)
                    fwd.push_back("t" + std::to_string(k));
                orders.push_back(fwd);
                std::reverse(fwd.begin(), fwd.end());
                orders.push_back(fwd);
            }
            harness::OrderReport rep =
                harness::order_study(cfg, orders, parse_seeds(seeds_csv), &std::cout);
            fs::create_directories(out_dir);
            std::ofstream csv(out_dir + "/order_study.csv");
            harness::write_order_csv(csv, rep);
            harness::write_order_csv(std::cout, rep);
        } else if (plot_cmd->parsed()) {
            const auto files = harness::emit_plots(harness::load_runlog(runlog), out_dir);
            for (const auto& f : files) std::cout << f << "\n";
        }
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
