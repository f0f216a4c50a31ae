#pragma once

#include "rfq/common.hpp"
#include "rfq/dataio.hpp"
#include "rfq/gep.hpp"
#include "rfq/rf_model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rfq {

struct ExperimentConfig {
    std::string experiment = "depth_sweep";
    std::size_t d = 2048;
    std::size_t d_hidden = 1024;
    std::size_t n = 400;
    std::size_t n_test = 2000;
    std::size_t trials = 10;
    std::vector<std::size_t> depths{1, 2, 3, 4, 5};
    std::vector<WeightKind> kinds{WeightKind::Gaussian, WeightKind::Rademacher};
    Activation activation = Activation::Tanh;
    std::string mirror = "squared_l2";
    double entropy_a0 = 0.0;  // <= 0: 1/d_L
    std::uint64_t master_seed = 1;
    double fit_tol = 1e-10;
    int fit_max_iter = 100;
    bool closed_form = true;
    std::size_t threads = 0;  // 0: RF_THREADS or hardware concurrency

    // mnist
    std::string mnist_train_images, mnist_train_labels, mnist_test_images, mnist_test_labels;
    std::size_t k_per_class = 20;
    std::size_t test_per_class = 20;
    std::size_t mnist_width = 512;  // width of the depth sweep
    std::size_t mnist_depth = 2;    // depth of the width sweep
    std::vector<std::size_t> mnist_widths{256, 512, 1024, 2048, 4196};

    // theory-compare: each entry is d_0, ..., d_L followed by n
    std::vector<std::vector<std::size_t>> theory_grid;

    // bench
    std::vector<std::size_t> bench_dims{512, 1024, 2048, 4096, 8192};
    std::size_t bench_reps = 20;
    std::size_t bench_warmup = 3;

    void validate() const;
};

// Config keys read by each experiment, for --help.
std::vector<std::string> config_keys(const std::string& experiment);
// Built-in presets "desk" and "paper" as key/value configs.
Config preset(const std::string& name, const std::string& experiment);
ExperimentConfig make_experiment_config(const Config& c, const std::string& experiment);

struct ResultRow {
    std::string experiment;
    std::string weight_kind;
    std::size_t L = 0;
    std::size_t d = 0;
    std::size_t d_hidden = 0;
    std::size_t n = 0;
    std::size_t n_test = 0;
    std::int64_t seed = -1;  // -1 on aggregate rows
    std::string mirror;
    std::string metric;
    double value = 0.0;
};

struct ResultTable {
    std::vector<ResultRow> rows;        // per-trial and theory rows
    std::vector<ResultRow> aggregates;  // <metric>_mean / <metric>_std / rel_gap

    Table to_table(bool include_aggregates = true) const;
    Table summary_table() const;
    void sort();
};

// Per-trial seed, reduced to 53 bits so that it is exact in a CSV double.
std::int64_t trial_seed(std::uint64_t master, std::size_t trial, std::size_t sweep);

// Runs fn(0..count-1) on a pool of `threads` workers (0: RF_THREADS, else hardware concurrency).
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);
std::size_t resolve_threads(std::size_t requested);

// Mean squared prediction gap on fresh N(0, I/d) inputs.
double empirical_mse(const RFNetwork& net, const Vec& a, const Vec& a_star, std::size_t n_test, std::uint64_t seed);
// rho1^2 D^T W_L Sigma_{L-1} W_L^T D + rho2^2 |D|^2, D = a - a_star; needs state.cov[L-1].
double closed_form_mse(const Vec& a, const Vec& a_star, const RFNetwork& net, const GepState& state);

// mean/std rows per (experiment, kind, L, d, d_hidden, n, metric) and paired rel_gap rows
void append_aggregates(ResultTable& t);

ResultTable run_depth_sweep(const ExperimentConfig& cfg);
ResultTable run_mnist_sweep(const ExperimentConfig& cfg);
// Same sweep on already-loaded data (tests use synthetic stand-ins).
ResultTable run_mnist_sweep(const ExperimentConfig& cfg, const MnistData& data);
ResultTable run_theory_compare(const ExperimentConfig& cfg);
// Theory values only (SGD system and mirror saddle) for every theory_grid entry.
ResultTable run_theory(const ExperimentConfig& cfg);
ResultTable run_bench(const ExperimentConfig& cfg);

}  // namespace rfq
