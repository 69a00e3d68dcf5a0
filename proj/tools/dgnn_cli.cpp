// Operator surface: validate datasets, train, run ablations and sweeps,
// gradient-check the engine, export embeddings.
//
// Exit codes: 0 success, 1 runtime failure, 2 validation mismatch.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "dgnn/dgnn.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
    std::string config_file;
    std::map<std::string, std::string> overrides;
};

// Every subcommand shares the same knob set; flags override config-file
// entries, which override profile defaults.
void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_file, "flat key = value config file");
    // repeated flags take the last value, so callers can override a base
    // flag set without CLI11 rejecting the duplicate
    auto add = [cmd, &flags](const char* flag, const char* key, const char* desc) {
        std::string k(key);
        cmd->add_option_function<std::string>(
               flag, [&flags, k](const std::string& value) { flags.overrides[k] = value; }, desc)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    };
    add("--dataset", "dataset", "dataset directory");
    add("--profile", "profile", "dataset profile: cora, citeseer, chameleon, squirrel");
    add("--lambda", "lambda", "topological smoothing weight");
    add("--alpha", "alpha", "semantic smoothing weight");
    add("--beta", "beta", "structural-consistency weight");
    add("--epsilon", "epsilon", "graph-mix coefficient");
    add("--layers", "layers", "unrolled iterations");
    add("--k", "k", "semantic-graph neighbors per node");
    add("--lr", "lr", "learning rate");
    add("--dropout", "dropout", "dropout rate");
    add("--seeds", "seeds", "seed count (N means 1..N) or comma list");
    add("--ablation", "ablation", "A1, A2 or A3");
    add("--jobs", "jobs", "concurrent trials");
    add("--out", "out", "output directory");
    add("--mem-budget", "mem_budget", "forward-pass memory budget in MiB");
    add("--epochs", "epochs", "epoch budget");
    add("--patience", "patience", "early-stop patience");
    add("--weight-decay", "weight_decay", "L2 weight decay");
    add("--warmup", "warmup", "learning-rate warmup epochs");
    add("--mode", "mode", "network or analytic");
}

dgnn::RunConfig resolve_config(const CommonFlags& flags) {
    dgnn::RunConfig cfg;
    std::map<std::string, std::string> file_entries;
    if (!flags.config_file.empty()) file_entries = dgnn::parse_config_file(flags.config_file);

    // profile first (lowest precedence of the explicit sources)
    auto profile_from = [&](const std::map<std::string, std::string>& m) {
        auto it = m.find("profile");
        return it == m.end() ? std::string() : it->second;
    };
    std::string profile = profile_from(flags.overrides);
    if (profile.empty()) profile = profile_from(file_entries);
    if (!profile.empty()) dgnn::apply_profile(cfg, profile);

    for (const auto& [k, v] : file_entries) {
        if (k != "profile") dgnn::apply_config_entry(cfg, k, v);
    }
    for (const auto& [k, v] : flags.overrides) {
        if (k != "profile") dgnn::apply_config_entry(cfg, k, v);
    }
    return cfg;
}

dgnn::Graph load_graph(const dgnn::RunConfig& cfg) {
    if (cfg.dataset.empty()) {
        throw std::runtime_error("no dataset: pass --dataset <dir> or --profile <name>");
    }
    return dgnn::load_dataset(cfg.dataset);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_matrix(std::ofstream& out, const dgnn::Mat& m) {
    std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
    std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            double v = m(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
}

// Trained parameters: "DGNNPRM1" magic, then W, Wc, b as shape-prefixed
// row-major little-endian doubles.
void write_params(const fs::path& path, const dgnn::TrainedParams& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write("DGNNPRM1", 8);
    write_matrix(out, p.w);
    write_matrix(out, p.wc);
    write_matrix(out, p.b);
}

struct DatasetSummary {
    int n, d, c, edges;
    double homophily;
};

DatasetSummary summarize(const dgnn::Graph& g) {
    return {g.num_nodes(), g.feature_dim(), g.num_classes(), g.num_edges(),
            g.num_edges() ? dgnn::homophily_rate(g) : 0.0};
}

void print_summary(const DatasetSummary& s) {
    std::printf("nodes %d\nfeatures %d\nclasses %d\nedges %d\nhomophily %.3f\n", s.n, s.d, s.c,
                s.edges, s.homophily);
}

int cmd_validate(const CommonFlags& flags) {
    auto cfg = resolve_config(flags);
    auto g = load_graph(cfg);
    auto s = summarize(g);
    print_summary(s);
    if (cfg.profile.empty()) return 0;

    const auto& p = dgnn::find_profile(cfg.profile);
    int mismatches = 0;
    auto check_int = [&](const char* what, int expected, int found) {
        if (expected != found) {
            std::printf("MISMATCH %s: expected %d, found %d\n", what, expected, found);
            ++mismatches;
        }
    };
    check_int("nodes", p.nodes, s.n);
    check_int("features", p.features, s.d);
    check_int("classes", p.classes, s.c);
    check_int("edges", p.edges, s.edges);
    if (std::abs(p.homophily - s.homophily) > p.homophily_tol) {
        std::printf("MISMATCH homophily: expected %.3f±%.2f, found %.3f\n", p.homophily,
                    p.homophily_tol, s.homophily);
        ++mismatches;
    }
    if (mismatches) return 2;
    std::printf("profile %s: all statistics match\n", p.name.c_str());
    return 0;
}

// run_trials plus per-seed parameter capture for the train artifacts
struct TrainedTrials {
    dgnn::TrialsSummary summary;
    std::vector<dgnn::TrainedParams> params;
};

TrainedTrials run_trials_with_params(const dgnn::Graph& g, const dgnn::GraphOperators& ops,
                                     const dgnn::DgnnHyperparams& hp, const dgnn::TrainConfig& tc,
                                     const std::vector<unsigned>& seeds, int jobs) {
    TrainedTrials out;
    out.summary.reports.resize(seeds.size());
    out.params.resize(seeds.size());
    auto run_one = [&](std::size_t i) {
        dgnn::TrainConfig tci = tc;
        tci.seed = seeds[i];
        auto split = dgnn::make_split(g.n, seeds[i]);
        auto [p, report] = dgnn::train(g, ops, hp, tci, split);
        out.params[i] = std::move(p);
        out.summary.reports[i] = std::move(report);
        std::printf("seed %u: test accuracy %.4f (best epoch %d, %.1fs)\n", seeds[i],
                    out.summary.reports[i].test_accuracy, out.summary.reports[i].best_epoch,
                    out.summary.reports[i].wall_seconds);
        std::fflush(stdout);
    };
    if (jobs <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
    } else {
        std::vector<std::future<void>> fut;
        std::size_t next = 0;
        while (next < seeds.size() || !fut.empty()) {
            while (static_cast<int>(fut.size()) < jobs && next < seeds.size()) {
                fut.push_back(std::async(std::launch::async, run_one, next++));
            }
            fut.front().get();
            fut.erase(fut.begin());
        }
    }
    double sum = 0.0;
    for (const auto& r : out.summary.reports) sum += r.test_accuracy;
    out.summary.mean = sum / out.summary.reports.size();
    double sq = 0.0;
    for (const auto& r : out.summary.reports) {
        sq += (r.test_accuracy - out.summary.mean) * (r.test_accuracy - out.summary.mean);
    }
    out.summary.stddev = out.summary.reports.size() > 1
                             ? std::sqrt(sq / (out.summary.reports.size() - 1))
                             : 0.0;
    return out;
}

std::string dataset_label(const dgnn::RunConfig& cfg) {
    if (!cfg.profile.empty()) return cfg.profile;
    return fs::path(cfg.dataset).filename().string();
}

int cmd_train(const CommonFlags& flags) {
    auto cfg = resolve_config(flags);
    auto g = load_graph(cfg);
    auto hp = cfg.resolved_hp();
    hp.validate();
    cfg.tc.validate();

    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "resolved.config", dgnn::serialize_config(cfg));

    auto ops = dgnn::build_operators(g, cfg.tc.semantic_k);
    auto trials = run_trials_with_params(g, ops, hp, cfg.tc, cfg.seeds, cfg.jobs);

    write_text(fs::path(cfg.out_dir) / "report.csv", dgnn::reports_to_csv(trials.summary.reports));
    std::string md = "| dataset | test accuracy |\n|---|---|\n" +
                     dgnn::summary_markdown_row(dataset_label(cfg), trials.summary) + "\n";
    write_text(fs::path(cfg.out_dir) / "report.md", md);
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        write_params(fs::path(cfg.out_dir) / ("params_seed" + std::to_string(cfg.seeds[i]) + ".bin"),
                     trials.params[i]);
    }
    std::printf("%s\n", dgnn::summary_markdown_row(dataset_label(cfg), trials.summary).c_str());
    return 0;
}

int cmd_ablate(const CommonFlags& flags) {
    auto cfg = resolve_config(flags);
    if (!cfg.ablation.empty()) {
        throw std::runtime_error("ablate runs all variants; do not pass --ablation");
    }
    auto g = load_graph(cfg);
    cfg.tc.validate();
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "resolved.config", dgnn::serialize_config(cfg));
    auto ops = dgnn::build_operators(g, cfg.tc.semantic_k);

    // fixed column order: full, A1, A2, A3
    std::vector<std::pair<std::string, dgnn::DgnnHyperparams>> variants = {
        {"full", cfg.hp},
        {"A1", dgnn::ablation_config(dgnn::AblationVariant::A1, cfg.hp)},
        {"A2", dgnn::ablation_config(dgnn::AblationVariant::A2, cfg.hp)},
        {"A3", dgnn::ablation_config(dgnn::AblationVariant::A3, cfg.hp)},
    };
    std::string md = "| variant | test accuracy |\n|---|---|\n";
    std::string csv = "variant,mean,stddev\n";
    for (auto& [name, hp] : variants) {
        hp.validate();
        auto summary = dgnn::run_trials(g, ops, hp, cfg.tc, cfg.seeds, cfg.jobs);
        md += dgnn::summary_markdown_row(name, summary) + "\n";
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g\n", name.c_str(), summary.mean,
                      summary.stddev);
        csv += buf;
        std::printf("%s: %s\n", name.c_str(), summary.formatted().c_str());
        std::fflush(stdout);
    }
    write_text(fs::path(cfg.out_dir) / "ablation.md", md);
    write_text(fs::path(cfg.out_dir) / "ablation.csv", csv);
    return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis, const std::string& betas_arg) {
    auto cfg = resolve_config(flags);
    auto g = load_graph(cfg);
    cfg.tc.validate();
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "resolved.config", dgnn::serialize_config(cfg));
    auto ops = dgnn::build_operators(g, cfg.tc.semantic_k);

    auto row_csv = [](const dgnn::SweepRow& r) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.lambda, r.alpha,
                      r.beta, r.epsilon, r.result.mean, r.result.stddev);
        return std::string(buf);
    };
    const std::string header = "lambda,alpha,beta,epsilon,mean,stddev\n";

    if (axis == "epsilon") {
        std::vector<double> grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        auto rows = dgnn::sweep_epsilon(g, ops, cfg.resolved_hp(), cfg.tc, grid, cfg.seeds, cfg.jobs);
        std::string csv = header;
        for (const auto& r : rows) csv += row_csv(r);
        write_text(fs::path(cfg.out_dir) / "sweep_epsilon.csv", csv);
        std::printf("%s", csv.c_str());
        return 0;
    }
    if (axis == "lambda-alpha") {
        std::vector<double> grid = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
        std::vector<double> betas;
        for (const auto& tok : CLI::detail::split(betas_arg, ',')) {
            betas.push_back(std::stod(tok));
        }
        for (double beta : betas) {
            auto hp = cfg.resolved_hp();
            hp.beta = beta;
            auto rows = dgnn::sweep_lambda_alpha(g, ops, hp, cfg.tc, grid, grid, cfg.seeds, cfg.jobs);
            std::string csv = header;
            for (const auto& r : rows) csv += row_csv(r);
            char name[64];
            std::snprintf(name, sizeof(name), "sweep_lambda_alpha_beta%.9g.csv", beta);
            write_text(fs::path(cfg.out_dir) / name, csv);
            std::printf("wrote %s\n", name);
            std::fflush(stdout);
        }
        return 0;
    }
    throw std::runtime_error("unknown sweep axis '" + axis + "' (expected epsilon or lambda-alpha)");
}

int cmd_gradcheck(int nodes, int dim, int instances) {
    dgnn::DgnnHyperparams hp;
    hp.lambda = 1.0;
    hp.alpha = 1.0;
    hp.beta = 0.01;
    hp.epsilon = 0.5;
    hp.layers = 2;
    auto result = dgnn::gradient_check(nodes, dim, instances, hp);
    std::printf("%s rel_err=%.3g (n=%d, d=%d, %d instances, tolerance 1e-4)\n",
                result.pass ? "PASS" : "FAIL", result.max_rel_error, nodes, dim, instances);
    return result.pass ? 0 : 1;
}

int cmd_export(const CommonFlags& flags) {
    auto cfg = resolve_config(flags);
    auto g = load_graph(cfg);
    auto hp = cfg.resolved_hp();
    hp.validate();
    cfg.tc.validate();
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "resolved.config", dgnn::serialize_config(cfg));

    auto ops = dgnn::build_operators(g, cfg.tc.semantic_k);
    dgnn::TrainConfig tc = cfg.tc;
    tc.seed = cfg.seeds.front();
    auto split = dgnn::make_split(g.n, tc.seed);
    auto [params, report] = dgnn::train(g, ops, hp, tc, split);
    std::printf("trained seed %u: test accuracy %.4f\n", tc.seed, report.test_accuracy);

    // eval-mode forward with the trained factor, then dump the triple
    dgnn::Tape t;
    dgnn::ReconFactor rf{t.constant(params.w)};
    auto state = dgnn::forward(t.constant(g.features), ops.na, ops.na_f, rf, hp, tc.memory_budget);
    auto path = fs::path(cfg.out_dir) / "embeddings.csv";
    dgnn::export_embeddings(state, g.labels, path.string());
    std::printf("wrote %s\n", path.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decoupled graph neural network: training and analysis tools"};
    app.require_subcommand(1);

    CommonFlags flags;
    auto* validate = app.add_subcommand("validate", "load a dataset and check its statistics");
    add_common_flags(validate, flags);

    auto* train = app.add_subcommand("train", "train over seeds and write reports");
    add_common_flags(train, flags);

    auto* ablate = app.add_subcommand("ablate", "compare full DGNN against A1/A2/A3");
    add_common_flags(ablate, flags);

    std::string axis = "epsilon";
    std::string betas = "0.001,0.005,0.01,0.02";
    auto* sweep = app.add_subcommand("sweep", "hyperparameter sweeps");
    add_common_flags(sweep, flags);
    sweep->add_option("--axis", axis, "epsilon or lambda-alpha");
    sweep->add_option("--betas", betas, "beta values for the lambda-alpha grid");

    int gc_nodes = 8, gc_dim = 5, gc_instances = 10;
    auto* gradcheck = app.add_subcommand("gradcheck", "verify gradients against finite differences");
    gradcheck->add_option("--nodes", gc_nodes, "instance node count");
    gradcheck->add_option("--dim", gc_dim, "instance feature dimension");
    gradcheck->add_option("--instances", gc_instances, "random instances");

    auto* export_cmd = app.add_subcommand("export", "train one seed and export embeddings");
    add_common_flags(export_cmd, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(flags);
        if (train->parsed()) return cmd_train(flags);
        if (ablate->parsed()) return cmd_ablate(flags);
        if (sweep->parsed()) return cmd_sweep(flags, axis, betas);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_nodes, gc_dim, gc_instances);
        if (export_cmd->parsed()) return cmd_export(flags);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
