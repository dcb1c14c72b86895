#include "lorac/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <omp.h>
#include <sstream>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "lorac/checkpoint.hpp"
#include "lorac/csv.hpp"
#include "lorac/data.hpp"
#include "lorac/gradcheck.hpp"
#include "lorac/merge.hpp"
#include "lorac/model.hpp"
#include "lorac/rng.hpp"
#include "lorac/train.hpp"

namespace lorac {

namespace {

using nlohmann::json;

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("bad integer list element '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty integer list '" + s + "'");
    return out;
}

std::optional<RankVariant> parse_rank_mode(const std::string& s) {
    if (s == "plain") return RankVariant::PlainR;
    if (s == "rk") return RankVariant::RTimesK;
    if (s == "auto") return std::nullopt;
    throw ConfigError("rank-mode must be plain|rk|auto, got '" + s + "'");
}

// --------------------------------------------------------------- data args

struct SyntheticSpec {
    int classes = 4;
    int per_class = 64;
    int eval_per_class = 16;
    int size = 16;
    std::uint64_t seed = 7;
    bool style_shift = false;
    bool corrupt_mixed_train = false;
};

SyntheticSpec parse_synthetic_spec(const std::string& body) {
    SyntheticSpec spec;
    if (body.empty()) return spec;
    std::istringstream in(body);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("synthetic spec wants k=v, got '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string val = item.substr(eq + 1);
        try {
            if (key == "classes") spec.classes = std::stoi(val);
            else if (key == "per_class") spec.per_class = std::stoi(val);
            else if (key == "eval_per_class") spec.eval_per_class = std::stoi(val);
            else if (key == "size") spec.size = std::stoi(val);
            else if (key == "seed") spec.seed = std::stoull(val);
            else if (key == "style") spec.style_shift = (val == "shift");
            else if (key == "corrupt") {
                if (val == "mixed") spec.corrupt_mixed_train = true;
                else if (val == "none") spec.corrupt_mixed_train = false;
                else throw ConfigError("corrupt must be mixed|none");
            } else {
                throw ConfigError("unknown synthetic key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad number in synthetic spec: '" + item + "'");
        }
    }
    return spec;
}

struct DataOpts {
    std::string data;
    std::string eval_data;
    bool style_shift = false;

    void add_to(CLI::App* cmd, bool required = true) {
        auto* opt = cmd->add_option("--data", data,
                                    "Dataset: synthetic:SPEC or a .lrcd file path");
        if (required) opt->required();
        cmd->add_option("--eval-data", eval_data, "Eval split path (file-based data only)");
        cmd->add_flag("--style-shift", style_shift,
                      "Render eval split under a shifted style regime (synthetic data)");
    }
};

struct LoadedData {
    Dataset train;
    Dataset eval_clean;
};

LoadedData load_data(const DataOpts& opts, bool need_train, bool need_eval) {
    LoadedData out;
    if (opts.data.rfind("synthetic:", 0) == 0 || opts.data == "synthetic") {
        SyntheticSpec spec = parse_synthetic_spec(
            opts.data.size() > 10 ? opts.data.substr(10) : std::string());
        if (opts.style_shift) spec.style_shift = true;
        if (need_train) {
            out.train = generate_synthetic(spec.classes, spec.per_class, spec.size, spec.size,
                                           Rng::mix(spec.seed, 0xA11CE));
            if (spec.corrupt_mixed_train) {
                out.train = corrupt_mixed(out.train, Rng::mix(spec.seed, 0xC0552));
            }
        }
        if (need_eval) {
            out.eval_clean = generate_synthetic(spec.classes, spec.eval_per_class, spec.size,
                                                spec.size, Rng::mix(spec.seed, 0xE7A1),
                                                spec.style_shift);
        }
        return out;
    }
    if (need_train) out.train = read_dataset(opts.data);
    if (need_eval) {
        if (!opts.eval_data.empty()) {
            out.eval_clean = read_dataset(opts.eval_data);
        } else if (!need_train) {
            out.eval_clean = read_dataset(opts.data);
        } else {
            throw ConfigError("file-based --data needs --eval-data for the eval split");
        }
    }
    return out;
}

Network load_plain_base(const std::string& path) {
    Network base = load_full_checkpoint(path);
    if (base.lora_enabled) {
        throw ConfigError("checkpoint " + path + " holds live LoRA branches; expected a plain model");
    }
    return base;
}

// ------------------------------------------------------------ param-report

struct ParamReportRow {
    int r;
    std::string layer;
    ConvSpec spec;
    std::int64_t full, kernel, layer_wise;
    Ratio kernel_ratio, layer_ratio;
    double reduction_pct;
    bool kernel_warn;
};

int cmd_param_report(const std::string& config_path, const std::vector<int>& r_list,
                     const std::vector<int>& alpha_list, const std::string& rank_mode,
                     const std::string& out_path) {
    const ModelConfig cfg = ModelConfig::parse_file(config_path);
    const auto variant_opt = parse_rank_mode(rank_mode);
    const RankVariant variant = variant_opt.value_or(select_rank_mode(backbone_param_count(cfg)));
    const auto specs = conv_specs_of(cfg);

    std::vector<ParamReportRow> rows;
    for (int r : r_list) {
        RankMode mode{variant, r};
        for (std::size_t i = 0; i < specs.size(); ++i) {
            ParamReportRow row;
            row.r = r;
            row.layer = i == 0 ? "stem" : "conv" + std::to_string(i);
            row.spec = specs[i];
            row.full = count_full(specs[i]);
            row.kernel = count_kernel_wise(specs[i], mode.rho_dim(specs[i].k));
            row.layer_wise = count_layer_wise(specs[i], mode);
            row.kernel_ratio = ratio_kernel_wise(specs[i], mode.rho_dim(specs[i].k));
            row.layer_ratio = ratio_layer_wise(specs[i], mode);
            row.reduction_pct = 100.0 * (1.0 - row.layer_ratio.value());
            row.kernel_warn = row.kernel_ratio.num > row.kernel_ratio.den;
            rows.push_back(row);
        }
    }

    std::cout << "# param-report: " << cfg.canonical_text() << "\n";
    std::cout << "# rank variant: " << (variant == RankVariant::PlainR ? "plain-r" : "r*k")
              << "  (alpha " << csv::join_row([&] {
                     std::vector<std::string> a;
                     for (int x : alpha_list) a.push_back(std::to_string(x));
                     return a;
                 }())
              << " does not affect counts)\n";
    std::cout << std::left << std::setw(8) << "r" << std::setw(10) << "layer" << std::setw(22)
              << "spec(out,in,k,s)" << std::setw(12) << "full" << std::setw(14) << "kernel-wise"
              << std::setw(12) << "layer-wise" << std::setw(12) << "ratio" << std::setw(12)
              << "reduction" << "warn\n";

    csv::Table table;
    table.push_back({"r", "layer", "c_out", "c_in", "k", "stride", "full", "kernel_wise",
                     "kernel_ratio", "layer_wise", "layer_ratio", "reduction_pct", "kernel_warn"});
    for (int r : r_list) {
        std::int64_t tot_full = 0, tot_kernel = 0, tot_layer = 0;
        for (const ParamReportRow& row : rows) {
            if (row.r != r) continue;
            tot_full += row.full;
            tot_kernel += row.kernel;
            tot_layer += row.layer_wise;
            std::ostringstream sp;
            sp << "(" << row.spec.c_out << "," << row.spec.c_in << "," << row.spec.k << ","
               << row.spec.stride << ")";
            std::cout << std::left << std::setw(8) << row.r << std::setw(10) << row.layer
                      << std::setw(22) << sp.str() << std::setw(12) << row.full << std::setw(14)
                      << row.kernel << std::setw(12) << row.layer_wise << std::setw(12)
                      << fmt(row.layer_ratio.value()) << std::setw(12)
                      << fmt(row.reduction_pct, 2) + "%" << (row.kernel_warn ? "kernel-ratio>1" : "")
                      << "\n";
            table.push_back({std::to_string(row.r), row.layer, std::to_string(row.spec.c_out),
                             std::to_string(row.spec.c_in), std::to_string(row.spec.k),
                             std::to_string(row.spec.stride), std::to_string(row.full),
                             std::to_string(row.kernel), fmt(row.kernel_ratio.value(), 6),
                             std::to_string(row.layer_wise), fmt(row.layer_ratio.value(), 6),
                             fmt(row.reduction_pct, 4), row.kernel_warn ? "1" : "0"});
        }
        const double total_red = 100.0 * (1.0 - static_cast<double>(tot_layer) / tot_full);
        std::cout << std::left << std::setw(8) << r << std::setw(10) << "TOTAL" << std::setw(22)
                  << "" << std::setw(12) << tot_full << std::setw(14) << tot_kernel << std::setw(12)
                  << tot_layer << std::setw(12) << fmt(static_cast<double>(tot_layer) / tot_full)
                  << std::setw(12) << fmt(total_red, 2) + "%"
                  << (tot_kernel > tot_full ? "kernel-ratio>1" : "") << "\n";
        table.push_back({std::to_string(r), "TOTAL", "", "", "", "", std::to_string(tot_full),
                         std::to_string(tot_kernel),
                         fmt(static_cast<double>(tot_kernel) / tot_full, 6),
                         std::to_string(tot_layer), fmt(static_cast<double>(tot_layer) / tot_full, 6),
                         fmt(total_red, 4), tot_kernel > tot_full ? "1" : "0"});
    }
    if (!out_path.empty()) {
        csv::write_file(out_path, table);
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

// ----------------------------------------------------------- train commands

struct TrainOpts {
    int epochs = 30;
    int batch_size = 64;
    float lr = 0.1f;
    float weight_decay = 5e-4f;
    std::uint64_t seed = 7;
    bool freeze_bn_stats = false;

    void add_to(CLI::App* cmd, int default_epochs = 30) {
        epochs = default_epochs;
        cmd->add_option("--epochs", epochs, "Training epochs");
        cmd->add_option("--batch-size", batch_size, "Minibatch size");
        cmd->add_option("--lr", lr, "Initial learning rate");
        cmd->add_option("--weight-decay", weight_decay, "SGD weight decay");
        cmd->add_option("--seed", seed, "Run seed (data order, init)");
        cmd->add_flag("--freeze-bn-stats", freeze_bn_stats,
                      "Do not update BN running statistics while training");
    }

    TrainConfig to_config() const {
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.lr = lr;
        tc.weight_decay = weight_decay;
        tc.seed = seed;
        tc.schedule = TrainConfig::default_schedule(epochs);
        tc.freeze_bn_stats = freeze_bn_stats;
        return tc;
    }
};

void write_report(const TrainReport& report, const std::string& path) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for write: " + path);
    f << report.to_json(true).dump(2) << "\n";
}

int cmd_pretrain(const std::string& config_path, const DataOpts& data_opts, const TrainOpts& topts,
                 const std::string& out_path, const std::string& report_path) {
    const ModelConfig cfg = ModelConfig::parse_file(config_path);
    LoadedData data = load_data(data_opts, true, true);
    Network net = build_plain_network(cfg);
    TrainConfig tc = topts.to_config();
    TrainReport report = finetune(net, data.train, EvalSuite::clean_only(data.eval_clean), tc);
    const std::int64_t bytes = save_full_checkpoint(net, out_path);
    const auto& last = report.final_record();
    std::cout << "pretrain: " << report.epochs << " epochs, final train loss "
              << fmt(last.train_loss) << ", train acc " << fmt(last.train_acc) << ", eval acc "
              << fmt(last.eval_clean_acc) << "\n";
    std::cout << "wrote " << out_path << " (" << bytes << " bytes)\n";
    write_report(report, report_path);
    return 0;
}

int cmd_finetune(const std::string& base_path, const DataOpts& data_opts, const TrainOpts& topts,
                 int r, int alpha, const std::string& rank_mode, int eval_severity,
                 const std::string& out_path, const std::string& report_path) {
    Network base = load_plain_base(base_path);
    LoadedData data = load_data(data_opts, true, true);
    Network net = adapt_network(base, r, static_cast<float>(alpha), parse_rank_mode(rank_mode));
    TrainConfig tc = topts.to_config();
    EvalSuite suite = EvalSuite::build(data.eval_clean, eval_severity, tc.seed);
    TrainReport report = finetune(net, data.train, suite, tc);

    std::cout << "updated parameters: " << report.updated_parameter_count << " ("
              << fmt(100.0 * report.updated_parameter_fraction, 3) << "% of the model)\n";
    const auto& last = report.final_record();
    std::cout << "final: train loss " << fmt(last.train_loss) << ", clean acc "
              << fmt(last.eval_clean_acc) << ", corrupted mean acc " << fmt(last.corrupt_mean_acc)
              << "\n";
    if (!out_path.empty()) {
        const std::int64_t bytes = save_adapter_checkpoint(net, out_path);
        std::cout << "wrote " << out_path << " (" << bytes << " bytes)\n";
    }
    write_report(report, report_path);
    return 0;
}

// ------------------------------------------------------------------- sweep

int cmd_sweep(const std::string& base_path, const DataOpts& data_opts, const TrainOpts& topts,
              const std::vector<int>& r_list, const std::vector<int>& alpha_list,
              const std::string& rank_mode, int eval_severity, const std::string& out_dir) {
    if (r_list.empty() || alpha_list.empty()) throw ConfigError("sweep: empty r or alpha set");
    Network base = load_plain_base(base_path);
    LoadedData data = load_data(data_opts, true, true);
    const auto variant = parse_rank_mode(rank_mode);
    EvalSuite suite = EvalSuite::build(data.eval_clean, eval_severity, topts.seed);

    struct Cell {
        int r, alpha;
        EpochRecord last;
        std::int64_t updated = 0;
    };
    const int n_cells = static_cast<int>(r_list.size() * alpha_list.size());
    std::vector<Cell> cells(static_cast<std::size_t>(n_cells));

    // Cells are independent; run them in parallel worker slots and merge in
    // deterministic order afterwards.
#pragma omp parallel for schedule(dynamic)
    for (int idx = 0; idx < n_cells; ++idx) {
        const int r = r_list[static_cast<std::size_t>(idx) / alpha_list.size()];
        const int alpha = alpha_list[static_cast<std::size_t>(idx) % alpha_list.size()];
        Network net = adapt_network(base, r, static_cast<float>(alpha), variant);
        TrainConfig tc = topts.to_config();
        tc.seed = Rng::mix(topts.seed, static_cast<std::uint64_t>(r) * 1000003ULL +
                                            static_cast<std::uint64_t>(alpha));
        TrainReport rep = finetune(net, data.train, suite, tc);
        cells[static_cast<std::size_t>(idx)] =
            Cell{r, alpha, rep.final_record(), rep.updated_parameter_count};
    }

    std::filesystem::create_directories(out_dir);
    csv::Table grid;
    grid.push_back({"r", "alpha", "alpha_over_r", "alpha_over_r_eq_2", "clean_acc",
                    "corrupt_mean_acc", "noise", "blur", "weather", "digital", "train_loss",
                    "updated_params"});
    for (const Cell& c : cells) {
        std::vector<std::string> row = {
            std::to_string(c.r),
            std::to_string(c.alpha),
            fmt(static_cast<double>(c.alpha) / c.r, 4),
            c.alpha == 2 * c.r ? "1" : "0",
            fmt(c.last.eval_clean_acc),
            fmt(c.last.corrupt_mean_acc),
        };
        for (const auto& [name, acc] : c.last.family_acc) {
            (void)name;
            row.push_back(fmt(acc));
        }
        row.push_back(fmt(c.last.train_loss));
        row.push_back(std::to_string(c.updated));
        grid.push_back(row);
    }
    csv::write_file(out_dir + "/grid.csv", grid);

    // Long-form plot data: corrupted-mean accuracy as a function of alpha per
    // r, and of r per alpha; parameter count per r.
    csv::Table plot;
    plot.push_back({"figure", "series", "x", "y"});
    for (const Cell& c : cells) {
        plot.push_back({"acc_vs_alpha", "r=" + std::to_string(c.r), std::to_string(c.alpha),
                        fmt(c.last.corrupt_mean_acc)});
        plot.push_back({"acc_vs_r", "alpha=" + std::to_string(c.alpha), std::to_string(c.r),
                        fmt(c.last.corrupt_mean_acc)});
        plot.push_back({"params_vs_r", "updated", std::to_string(c.r), std::to_string(c.updated)});
    }
    csv::write_file(out_dir + "/plot.csv", plot);

    const Cell* best = &cells[0];
    for (const Cell& c : cells) {
        if (c.last.corrupt_mean_acc > best->last.corrupt_mean_acc) best = &c;
    }
    json summary;
    summary["schema"] = "lorac.sweep_summary.v1";
    summary["cells"] = n_cells;
    summary["best"] = {{"r", best->r},
                       {"alpha", best->alpha},
                       {"corrupt_mean_acc", best->last.corrupt_mean_acc},
                       {"clean_acc", best->last.eval_clean_acc}};
    json per_r = json::array();
    for (int r : r_list) {
        const Cell* b = nullptr;
        for (const Cell& c : cells) {
            if (c.r == r && (!b || c.last.corrupt_mean_acc > b->last.corrupt_mean_acc)) b = &c;
        }
        per_r.push_back({{"r", r}, {"best_alpha", b->alpha},
                         {"corrupt_mean_acc", b->last.corrupt_mean_acc}});
    }
    summary["best_alpha_per_r"] = per_r;
    {
        std::ofstream f(out_dir + "/summary.json");
        if (!f) throw IoError("cannot open for write: " + out_dir + "/summary.json");
        f << summary.dump(2) << "\n";
    }

    std::cout << "sweep: " << n_cells << " cells -> " << out_dir << "\n";
    std::cout << "best cell: r=" << best->r << " alpha=" << best->alpha << " corrupted mean acc "
              << fmt(best->last.corrupt_mean_acc) << "\n";
    for (const auto& item : per_r) {
        std::cout << "  r=" << item["r"] << ": best alpha=" << item["best_alpha"] << " acc "
                  << fmt(item["corrupt_mean_acc"].get<double>()) << "\n";
    }
    return 0;
}

// ------------------------------------------------------------- merge / eval

int cmd_merge(const std::string& base_path, const std::string& adapter_path, bool fuse_bn,
              const std::string& out_path) {
    Network base = load_plain_base(base_path);
    Network branch = load_adapter_checkpoint(base, adapter_path);
    export_inference_model(branch, fuse_bn, out_path);
    std::cout << "wrote " << out_path << (fuse_bn ? " (BN fused)" : "") << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& adapter_path,
             const DataOpts& data_opts, int eval_severity, std::uint64_t seed,
             const std::string& format, const std::string& out_path) {
    Network net = load_full_checkpoint(model_path);
    if (!adapter_path.empty()) {
        if (net.lora_enabled) throw ConfigError("--adapter requires a plain base model");
        net = load_adapter_checkpoint(net, adapter_path);
    }
    LoadedData data = load_data(data_opts, false, true);
    if (data.eval_clean.meta.num_classes != net.cfg.num_classes) {
        throw ConfigError("eval: dataset has " + std::to_string(data.eval_clean.meta.num_classes) +
                          " classes, model expects " + std::to_string(net.cfg.num_classes));
    }
    EvalSuite suite = EvalSuite::build(data.eval_clean, eval_severity, seed);

    const float clean = evaluate(net, suite.clean);
    std::vector<std::pair<std::string, float>> fam_accs;
    double mean = 0.0;
    for (const auto& [name, sets] : suite.families) {
        double acc = 0.0;
        for (const Dataset& ds : sets) acc += evaluate(net, ds);
        acc /= static_cast<double>(sets.size());
        fam_accs.emplace_back(name, static_cast<float>(acc));
        mean += acc;
    }
    mean /= static_cast<double>(suite.families.size());

    std::cout << std::left << std::setw(10) << "clean" << std::setw(10) << "noise" << std::setw(10)
              << "blur" << std::setw(10) << "weather" << std::setw(10) << "digital" << "mean\n";
    std::cout << std::left << std::setw(10) << fmt(clean);
    for (const auto& [name, acc] : fam_accs) {
        (void)name;
        std::cout << std::setw(10) << fmt(acc);
    }
    std::cout << fmt(mean) << "\n";

    if (!out_path.empty()) {
        if (format == "csv") {
            csv::Table t;
            t.push_back({"clean", "noise", "blur", "weather", "digital", "mean"});
            std::vector<std::string> row{fmt(clean)};
            for (const auto& [name, acc] : fam_accs) {
                (void)name;
                row.push_back(fmt(acc));
            }
            row.push_back(fmt(mean));
            t.push_back(row);
            csv::write_file(out_path, t);
        } else {
            json j;
            j["schema"] = "lorac.eval.v1";
            j["clean_acc"] = clean;
            for (const auto& [name, acc] : fam_accs) j["family_acc"][name] = acc;
            j["corrupt_mean_acc"] = mean;
            std::ofstream f(out_path);
            if (!f) throw IoError("cannot open for write: " + out_path);
            f << j.dump(2) << "\n";
        }
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials) {
    double worst = 0.0;
    bool ok = true;
    using Check = gradcheck::Result (*)(std::uint64_t);
    const std::pair<const char*, Check> checks[] = {
        {"conv2d", &gradcheck::check_conv2d},
        {"matmul", &gradcheck::check_matmul},
        {"cross_entropy", &gradcheck::check_cross_entropy},
        {"lora_branch", &gradcheck::check_lora_branch},
    };
    for (const auto& [name, fn] : checks) {
        double op_worst = 0.0;
        for (int t = 0; t < trials; ++t) {
            const auto res = fn(Rng::mix(seed, fnv1a64(name) + static_cast<std::uint64_t>(t)));
            op_worst = std::max(op_worst, res.max_rel_err);
            ok = ok && res.pass;
        }
        worst = std::max(worst, op_worst);
        std::cout << (op_worst <= gradcheck::kRelTol ? "PASS " : "FAIL ") << name << ": max rel err "
                  << std::scientific << std::setprecision(3) << op_worst << std::defaultfloat
                  << " over " << trials << " trials\n";
    }
    std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << " (max rel err " << std::scientific
              << std::setprecision(3) << worst << std::defaultfloat << ", tolerance "
              << gradcheck::kRelTol << ")\n";
    return ok ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    if (const char* env = std::getenv("LORAC_THREADS")) {
        const int t = std::atoi(env);
        if (t >= 1) omp_set_num_threads(t);
    }

    CLI::App app{"LoRA-C: layer-wise low-rank adaptation of convolutional networks"};
    app.require_subcommand(1);

    int exit_code = 0;

    // param-report
    auto* rep = app.add_subcommand("param-report",
                                   "Closed-form updated-parameter counts and ratios per layer");
    std::string rep_config, rep_mode = "auto", rep_out;
    std::string rep_r = "1", rep_alpha = "1";
    rep->add_option("--model-config", rep_config, "Model config document")->required();
    rep->add_option("--r", rep_r, "Comma-separated rank list");
    rep->add_option("--alpha", rep_alpha, "Comma-separated alpha list (echoed; counts are alpha-free)");
    rep->add_option("--rank-mode", rep_mode, "plain|rk|auto");
    rep->add_option("--out", rep_out, "CSV output path");
    rep->callback([&] {
        exit_code = cmd_param_report(rep_config, parse_int_list(rep_r), parse_int_list(rep_alpha),
                                     rep_mode, rep_out);
    });

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Train the full backbone on a clean source task");
    std::string pre_config, pre_out, pre_report;
    DataOpts pre_data;
    TrainOpts pre_train;
    pre->add_option("--model-config", pre_config, "Model config document")->required();
    pre_data.add_to(pre);
    pre_train.add_to(pre, 30);
    pre->add_option("--out", pre_out, "Output LRCF checkpoint")->required();
    pre->add_option("--report", pre_report, "TrainReport JSON path");
    pre->callback([&] {
        exit_code = cmd_pretrain(pre_config, pre_data, pre_train, pre_out, pre_report);
    });

    // finetune
    auto* ft = app.add_subcommand("finetune", "LoRA-C fine-tuning of a pretrained backbone");
    std::string ft_base, ft_out, ft_report, ft_mode = "auto";
    int ft_r = 4, ft_alpha = 8, ft_sev = 3;
    DataOpts ft_data;
    TrainOpts ft_train;
    ft->add_option("--model", ft_base, "Pretrained LRCF checkpoint")->required();
    ft_data.add_to(ft);
    ft_train.add_to(ft, 30);
    ft->add_option("--r", ft_r, "Factorization rank");
    ft->add_option("--alpha", ft_alpha, "Branch scale alpha");
    ft->add_option("--rank-mode", ft_mode, "plain|rk|auto");
    ft->add_option("--eval-severity", ft_sev, "Corruption severity for eval families (1..5)");
    ft->add_option("--out", ft_out, "Output LRCA adapter checkpoint");
    ft->add_option("--report", ft_report, "TrainReport JSON path");
    ft->callback([&] {
        exit_code = cmd_finetune(ft_base, ft_data, ft_train, ft_r, ft_alpha, ft_mode, ft_sev,
                                 ft_out, ft_report);
    });

    // sweep
    auto* sw = app.add_subcommand("sweep", "Fine-tune every (r, alpha) cell from one base model");
    std::string sw_base, sw_out, sw_mode = "auto";
    std::string sw_r = "1,2,4,8,16,32,64", sw_alpha = "1,2,4,8,16,32,64,128";
    int sw_sev = 3;
    DataOpts sw_data;
    TrainOpts sw_train;
    sw->add_option("--model", sw_base, "Pretrained LRCF checkpoint")->required();
    sw_data.add_to(sw);
    sw_train.add_to(sw, 4);
    sw->add_option("--r", sw_r, "Comma-separated rank set");
    sw->add_option("--alpha", sw_alpha, "Comma-separated alpha set");
    sw->add_option("--rank-mode", sw_mode, "plain|rk|auto");
    sw->add_option("--eval-severity", sw_sev, "Corruption severity for eval families (1..5)");
    sw->add_option("--out", sw_out, "Output directory (grid.csv, plot.csv, summary.json)")
        ->required();
    sw->callback([&] {
        exit_code = cmd_sweep(sw_base, sw_data, sw_train, parse_int_list(sw_r),
                              parse_int_list(sw_alpha), sw_mode, sw_sev, sw_out);
    });

    // merge
    auto* mg = app.add_subcommand("merge", "Fold LoRA branches (and optionally BN) into the weights");
    std::string mg_base, mg_adapter, mg_out;
    bool mg_fuse = false;
    mg->add_option("--model", mg_base, "Pretrained LRCF checkpoint")->required();
    mg->add_option("--adapter", mg_adapter, "Fine-tuned LRCA adapter")->required();
    mg->add_flag("--fuse-bn", mg_fuse, "Also fold BN layers into conv weights/biases");
    mg->add_option("--out", mg_out, "Output LRCF checkpoint")->required();
    mg->callback([&] { exit_code = cmd_merge(mg_base, mg_adapter, mg_fuse, mg_out); });

    // eval
    auto* ev = app.add_subcommand("eval", "Clean plus per-family corrupted accuracy table");
    std::string ev_model, ev_adapter, ev_format = "csv", ev_out;
    int ev_sev = 3;
    std::uint64_t ev_seed = 7;
    DataOpts ev_data;
    ev->add_option("--model", ev_model, "LRCF checkpoint (plain or merged)")->required();
    ev->add_option("--adapter", ev_adapter, "Optional LRCA adapter over a plain base");
    ev_data.add_to(ev);
    ev->add_option("--eval-severity", ev_sev, "Corruption severity (1..5)");
    ev->add_option("--seed", ev_seed, "Corruption seed");
    ev->add_option("--format", ev_format, "csv|json for --out");
    ev->add_option("--out", ev_out, "Write the table to this path");
    ev->callback([&] {
        exit_code = cmd_eval(ev_model, ev_adapter, ev_data, ev_sev, ev_seed, ev_format, ev_out);
    });

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::uint64_t gc_seed = 7;
    int gc_trials = 50;
    gc->add_option("--seed", gc_seed, "Base seed");
    gc->add_option("--trials", gc_trials, "Random instances per op");
    gc->callback([&] { exit_code = cmd_gradcheck(gc_seed, gc_trials); });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ComputeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}

}  // namespace lorac
