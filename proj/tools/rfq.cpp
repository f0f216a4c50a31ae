// rfq: command-line front end for the random-features experiments.
#include "rfq/bitpack.hpp"
#include "rfq/dataio.hpp"
#include "rfq/experiments.hpp"
#include "rfq/rf_model.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rfq;

namespace {

struct Common {
    std::string config_path;
    std::string preset = "desk";
    std::string out = "results";
    std::vector<std::string> sets;
    long long threads = -1;
    long long seed = -1;
    long long trials = -1;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string keys_footer(const std::string& experiment) {
    std::string s = "Config keys:";
    for (const auto& k : config_keys(experiment)) s += " " + k;
    return s + "\nPrecedence: flags and --set > --config file > --preset (default desk).";
}

void add_common(CLI::App* sub, Common& c, const std::string& experiment) {
    sub->add_option("--config", c.config_path, "key = value config file");
    sub->add_option("--preset", c.preset, "built-in preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--set", c.sets, "override one config key, key=value (repeatable)");
    sub->add_option("--threads", c.threads, "worker threads (fallback: RF_THREADS)");
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--trials", c.trials, "trials per sweep point");
    sub->footer(keys_footer(experiment));
}

Config merged_config(const Common& c, const std::string& experiment) {
    Config cfg;
    if (!c.config_path.empty()) {
        try {
            cfg = Config::load(c.config_path);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.threads >= 0) cfg.set("threads", std::to_string(c.threads));
    if (c.seed >= 0) cfg.set("seed", std::to_string(c.seed));
    if (c.trials >= 0) cfg.set("trials", std::to_string(c.trials));
    cfg.set("out", c.out);
    cfg.merge_defaults(preset(c.preset, experiment));
    cfg.set("preset", c.preset);
    return cfg;
}

ExperimentConfig experiment_config(const Config& cfg, const std::string& experiment) {
    try {
        return make_experiment_config(cfg, experiment);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidConfig) throw UsageError(e.what());
        throw;
    }
}

void write_outputs(const ResultTable& t, const Config& cfg, const std::string& out_dir, const std::string& name) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create '" + out_dir + "': " + ec.message());
    const fs::path dir(out_dir);
    write_csv(t.to_table(true), (dir / (name + ".csv")).string());
    write_csv(t.summary_table(), (dir / (name + "_summary.csv")).string());
    const std::string echo = (dir / (name + "_config.txt")).string();
    std::FILE* f = std::fopen(echo.c_str(), "w");
    if (!f) throw Error(ErrorCode::IoError, "cannot write '" + echo + "'");
    const std::string text = cfg.to_text();
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
    std::cout << "wrote " << (dir / (name + ".csv")).string() << " (" << t.rows.size() << " rows, "
              << t.aggregates.size() << " aggregates)\n";
}

void print_summary(const ResultTable& t, const std::string& metric_suffix) {
    for (const auto& r : t.aggregates) {
        if (r.metric.size() < metric_suffix.size() ||
            r.metric.compare(r.metric.size() - metric_suffix.size(), metric_suffix.size(), metric_suffix) != 0)
            continue;
        std::printf("%-14s %-10s L=%zu d_hidden=%zu %s = %.6g\n", r.experiment.c_str(), r.weight_kind.c_str(), r.L,
                    r.d_hidden, r.metric.c_str(), r.value);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep random-features laboratory: one-bit quantization, interpolation and asymptotic theory"};
    app.require_subcommand(1, 1);

    Common depth_c, mnist_c, theory_c, compare_c, bench_c;
    auto* depth = app.add_subcommand("depth-sweep", "synthetic depth sweep, Gaussian vs one-bit weights");
    add_common(depth, depth_c, "depth_sweep");
    auto* mnist = app.add_subcommand("mnist-sweep", "MNIST depth and width sweeps (accuracy)");
    add_common(mnist, mnist_c, "mnist_sweep");
    auto* theory = app.add_subcommand("theory", "solve the asymptotic risk systems on theory_grid");
    add_common(theory, theory_c, "theory");
    auto* compare = app.add_subcommand("theory-compare", "theory risk vs empirical min-norm / mirror MSE");
    add_common(compare, compare_c, "theory_compare");
    auto* bench = app.add_subcommand("bench", "packed one-bit kernel vs dense matvec");
    add_common(bench, bench_c, "bench");

    std::size_t pk_in = 1024, pk_out = 1024;
    long long pk_seed = 1;
    std::string pk_file, pk_inspect;
    auto* pack = app.add_subcommand("pack", "write or inspect a packed sign layer (RFB1 file)");
    pack->add_option("--d-in", pk_in, "input dimension")->check(CLI::PositiveNumber);
    pack->add_option("--d-out", pk_out, "output dimension")->check(CLI::PositiveNumber);
    pack->add_option("--seed", pk_seed, "seed of the Gaussian draw");
    pack->add_option("--file", pk_file, "output path");
    pack->add_option("--inspect", pk_inspect, "print the header of an existing file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return e.get_exit_code() == 0 ? code : 2;
    }

    try {
        if (*pack) {
            if (!pk_inspect.empty()) {
                const PackedOneBit P = load_packed(pk_inspect);
                std::printf("d_out=%zu d_in=%zu words_per_row=%zu bytes=%zu scale=%.17g\n", P.d_out, P.d_in,
                            P.words_per_row, P.bytes(), P.scale);
                return 0;
            }
            if (pk_file.empty()) throw UsageError("pack needs --file or --inspect");
            const RFNetwork net = build_network({pk_in, pk_out}, make_activation(Activation::Identity),
                                                WeightKind::Rademacher, static_cast<std::uint64_t>(pk_seed));
            save_packed(std::get<PackedOneBit>(net.layers[0].storage), pk_file);
            std::printf("wrote %s (%zu bytes of sign bits)\n", pk_file.c_str(), packed_bytes_for(pk_out, pk_in));
            return 0;
        }

        struct Route {
            CLI::App* sub;
            Common* c;
            const char* experiment;
        };
        for (const Route& r : {Route{depth, &depth_c, "depth_sweep"}, Route{mnist, &mnist_c, "mnist_sweep"},
                               Route{theory, &theory_c, "theory"}, Route{compare, &compare_c, "theory_compare"},
                               Route{bench, &bench_c, "bench"}}) {
            if (!*r.sub) continue;
            const std::string exp = r.experiment;
            const Config cfg = merged_config(*r.c, exp);
            const ExperimentConfig ec = experiment_config(cfg, exp);
            ResultTable t;
            if (exp == "depth_sweep")
                t = run_depth_sweep(ec);
            else if (exp == "mnist_sweep")
                t = run_mnist_sweep(ec);
            else if (exp == "theory")
                t = run_theory(ec);
            else if (exp == "theory_compare")
                t = run_theory_compare(ec);
            else
                t = run_bench(ec);
            write_outputs(t, cfg, r.c->out, exp);
            if (exp == "depth_sweep") print_summary(t, "test_mse_rel_gap");
            if (exp == "mnist_sweep") print_summary(t, "accuracy_gap");
            if (exp == "theory_compare") print_summary(t, "theory_rel_gap");
            if (exp == "bench") {
                for (const auto& row : t.rows)
                    if (row.metric == "speedup") std::printf("bench d=%zu speedup = %.3g\n", row.d, row.value);
            }
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "rfq: usage: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "rfq: error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "rfq: error: Internal: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
