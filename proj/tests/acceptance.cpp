// Acceptance run: one PASS/FAIL line per criterion.
// Exit status: nonzero when a numerical criterion (4-7) fails. The finite-sample sweeps (1-3) are
// reported but gate only under --strict, since their pass/fail at the pinned trial counts is
// partly a coin toss (see README). The speedup floor and criterion 8 never gate.
#include "rfq/bitpack.hpp"
#include "rfq/dataio.hpp"
#include "rfq/experiments.hpp"
#include "rfq/gep.hpp"
#include "rfq/interpolate.hpp"
#include "rfq/theory.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace rfq;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

const ResultRow* agg(const ResultTable& t, const std::string& experiment, const std::string& kind, std::size_t L,
                     std::size_t d_hidden, const std::string& metric) {
    for (const auto& r : t.aggregates)
        if (r.experiment == experiment && r.weight_kind == kind && r.L == L && r.d_hidden == d_hidden &&
            r.metric == metric)
            return &r;
    return nullptr;
}

Mat randn(std::size_t r, std::size_t c, std::mt19937_64& g) {
    std::normal_distribution<double> N;
    Mat M(r, c);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = N(g);
    return M;
}

// Paired-gap check shared by the two synthetic depth sweeps.
Outcome depth_gap(const ExperimentConfig& cfg) {
    const ResultTable t = run_depth_sweep(cfg);
    Outcome o{true, ""};
    for (std::size_t L : cfg.depths) {
        const ResultRow* gap = agg(t, "depth_sweep", "paired", L, cfg.d_hidden, "test_mse_rel_gap");
        const ResultRow* g = agg(t, "depth_sweep", "gaussian", L, cfg.d_hidden, "test_mse_mean");
        const ResultRow* r = agg(t, "depth_sweep", "rademacher", L, cfg.d_hidden, "test_mse_mean");
        if (!gap || !g || !r) {
            o.pass = false;
            o.detail += " L=" + std::to_string(L) + ":missing(fit errors?)";
            continue;
        }
        if (!(gap->value <= 0.05)) o.pass = false;
        o.detail += " L=" + std::to_string(L) + ":" + fmt("%.2f%%", 100 * gap->value) + fmt(" (G %.4g", g->value) +
                    fmt(", R %.4g)", r->value);
    }
    return o;
}

Outcome criterion1() {
    ExperimentConfig c = make_experiment_config(preset("desk", "depth_sweep"), "depth_sweep");
    c.closed_form = false;
    return depth_gap(c);
}

Outcome criterion2() {
    ExperimentConfig c = make_experiment_config(preset("desk", "depth_sweep"), "depth_sweep");
    c.closed_form = false;
    c.mirror = "neg_entropy";  // a0 = 1/d_L, n/d_L = 0.39
    return depth_gap(c);
}

Outcome criterion3() {
    const std::string d = std::string(RFQ_SOURCE_DIR) + "/data/";
    const MnistData data = load_mnist(d + "mnist5k-train-images-idx3-ubyte.gz", d + "mnist5k-train-labels-idx1-ubyte.gz",
                                      d + "mnist5k-test-images-idx3-ubyte.gz", d + "mnist5k-test-labels-idx1-ubyte.gz");
    const ExperimentConfig c = make_experiment_config(preset("desk", "mnist_sweep"), "mnist_sweep");
    const ResultTable t = run_mnist_sweep(c, data);
    Outcome o{true, ""};
    double worst = 0.0;
    std::string where;
    auto check = [&](const std::string& exp, std::size_t L, std::size_t w) {
        const ResultRow* gap = agg(t, exp, "paired", L, w, "accuracy_gap");
        const ResultRow* g = agg(t, exp, "gaussian", L, w, "accuracy_mean");
        if (!gap || !g) {
            o.pass = false;
            o.detail += " " + exp + " L=" + std::to_string(L) + " w=" + std::to_string(w) + ":missing";
            return;
        }
        if (!(gap->value <= 0.02)) o.pass = false;
        o.detail += " " + std::string(exp == "mnist_depth" ? "L" : "w") + "=" +
                    std::to_string(exp == "mnist_depth" ? L : w) + fmt(":%.1fpp", 100 * gap->value) +
                    fmt("@%.3f", g->value);
        if (gap->value > worst) worst = gap->value;
    };
    for (std::size_t L : c.depths) check("mnist_depth", L, c.mnist_width);
    for (std::size_t w : c.mnist_widths) check("mnist_width", c.mnist_depth, w);
    o.detail = fmt(" worst gap %.1fpp;", 100 * worst) + o.detail;
    return o;
}

Outcome criterion4() {
    const auto th = make_activation(Activation::Tanh);
    Outcome o{true, ""};
    for (std::size_t L : {1u, 2u}) {
        double cv[2] = {0, 0}, plain[2] = {0, 0};
        const std::size_t ds[2] = {256, 512};
        for (int k = 0; k < 2; ++k) {
            const std::size_t d = ds[k];
            for (std::uint64_t s = 0; s < 5; ++s) {
                const RFNetwork net = build_network(std::vector<std::size_t>(L + 1, d), th, WeightKind::Gaussian,
                                                    split_seed(1000 + s, d, L));
                const auto s0 = Sigma0Spec::isotropic(d);
                GepOptions opt;
                opt.keep_last = true;
                const GepState st = gep_recursion(s0, net, opt);
                const Mat& G = st.cov[L];
                const double norm = op_norm_diff(G, Mat::Zero(d, d));
                const std::uint64_t mc_seed = split_seed(2000 + s, d, L);
                cv[k] += op_norm_diff(mc_covariance_cv(net, s0, st, 50 * d, mc_seed), G) / norm / 5.0;
                plain[k] += op_norm_diff(mc_covariance(net, s0, 50 * d, mc_seed), G) / norm / 5.0;
            }
        }
        const double ratio = cv[0] / cv[1];
        if (!(ratio >= 1.3)) o.pass = false;
        o.detail += " L=" + std::to_string(L) + fmt(": cv %.3g", cv[0]) + fmt(" -> %.3g", cv[1]) +
                    fmt(" (x%.2f)", ratio) + fmt(", plain %.3g", plain[0]) + fmt(" -> %.3g", plain[1]) +
                    fmt(" (x%.2f);", plain[0] / plain[1]);
    }
    return o;
}

Outcome criterion5(bool& speed_ok) {
    std::mt19937_64 g(55);
    Outcome o{true, ""};
    double worst = 0.0;
    std::size_t shapes = 0;
    for (std::size_t din : {1u, 2u, 63u, 64u, 65u, 127u, 128u, 129u, 200u, 511u, 1000u, 4096u})
        for (std::size_t dout : {1u, 3u, 64u, 100u}) {
            const Mat W = randn(dout, din, g);
            const PackedOneBit P = pack_signs(W);
            if (P.bytes() != dout * ((din + 63) / 64) * 8 || P.bytes() != packed_bytes_for(dout, din)) o.pass = false;
            const Mat X = randn(5, din, g);
            const Mat dense = X * unpack(P).transpose();
            const double err = (packed_matmul(P, X) - dense).cwiseAbs().maxCoeff();
            worst = std::max(worst, err / static_cast<double>(din));
            if (!(err <= 1e-10 * static_cast<double>(din))) o.pass = false;
            ++shapes;
        }
    const BenchReport b = bench_kernel(4096, 4096, 1000, 10);
    speed_ok = b.speedup >= 2.0;
    o.detail = " " + std::to_string(shapes) + " shapes, max err/d_in " + fmt("%.2g", worst) +
               "; 4096x4096 packed " + std::to_string(b.packed_bytes) + " B vs dense " +
               std::to_string(b.dense_bytes) + " B" + fmt(" (x%.0f)", double(b.dense_bytes) / b.packed_bytes) +
               fmt("; speedup %.2fx", b.speedup) + (speed_ok ? "" : " [WARNING: below the 2x soft floor]");
    return o;
}

Outcome criterion6() {
    std::mt19937_64 g(66);
    Outcome o{true, ""};
    double res = 0, row = 0, kkt = 0, quad = 0, smd = 0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 5 + t % 20, D = n + 10 + 3 * t;
        const Mat P = randn(n, D, g);
        const Vec y = randn(n, 1, g);
        const auto r = min_norm_fit(P, y);
        res = std::max(res, (P * r.a - y).cwiseAbs().maxCoeff());
        row = std::max(row, row_space_residual(P, r.a));

        // positive features keep a positive interpolant available for the entropy mirror
        const Mat Q = P.cwiseAbs();
        const Vec a_pos = (randn(D, 1, g).array().abs() + 0.1).matrix();
        const Vec yq = Q * a_pos;
        const MirrorMap ent = neg_entropy();
        const Vec a0 = Vec::Constant(D, 1.0);
        const auto b = bregman_fit(Q, yq, ent, a0);
        const Vec grad_gap = ent.gradient(b.a) - ent.gradient(a0);
        kkt = std::max({kkt, (Q * b.a - yq).cwiseAbs().maxCoeff() / std::max(1.0, yq.cwiseAbs().maxCoeff()),
                        row_space_residual(Q, grad_gap) / std::max(1.0, grad_gap.norm())});

        const Vec a0q = randn(D, 1, g);
        quad = std::max(quad, (bregman_fit(P, y, squared_l2(), a0q).a - min_norm_fit(P, y, a0q).a).cwiseAbs().maxCoeff());
    }
    for (int t = 0; t < 10; ++t) {
        const Mat P = randn(4, 12, g);
        const Vec y = randn(4, 1, g);
        const double L = (P * P.transpose()).eigenvalues().real().maxCoeff();
        const auto s = smd_train(P, y, Loss{}, squared_l2(), Vec::Zero(12), 1.0 / L, 200000, 1e-12);
        smd = std::max(smd, (s.a - min_norm_fit(P, y).a).norm());
    }
    o.pass = res <= 1e-8 && row <= 1e-8 && kkt <= 1e-8 && quad <= 1e-8 && smd <= 1e-4;
    o.detail = fmt(" residual %.2g", res) + fmt(", row space %.2g", row) + fmt(", bregman KKT %.2g", kkt) +
               fmt(", quadratic vs min-norm %.2g", quad) + fmt(", smd %.2g", smd);
    return o;
}

TheoryInput chain_input(const std::vector<std::size_t>& dims, std::size_t n, Activation a) {
    const double s0 = 1.0 / static_cast<double>(dims[0]);
    return make_theory_input(dims, n, std::vector<double>(dims[0], s0),
                             gep_asymptotic(s0, dims.size() - 1, make_activation(a)));
}

Outcome criterion7() {
    struct Case {
        std::vector<std::size_t> dims;
        std::size_t n;
        Activation a;
    };
    const std::vector<Case> grid = {{{2048, 1024}, 400, Activation::Tanh},
                                    {{2048, 1024, 1024}, 400, Activation::Tanh},
                                    {{2048, 1024, 1024, 1024, 1024, 1024}, 400, Activation::Tanh},
                                    {{1000, 800, 600}, 300, Activation::ScaledErf},
                                    {{800, 600, 500}, 300, Activation::Identity}};
    Outcome o{true, ""};
    double worst_res = 0, worst_gap = 0;
    for (const auto& c : grid) {
        const TheoryInput in = chain_input(c.dims, c.n, c.a);
        const TheorySolution s = solve_sgd_system(in);
        if (!s.converged) {
            o.pass = false;
            continue;
        }
        const double res = std::max(s.residual, sgd_residual(in, s));
        worst_res = std::max(worst_res, res);
        const SaddleSolution q = solve_mirror_saddle(in, squared_l2(), 0.0);
        const double gap = std::abs(q.tau_sq - s.tau_sq) / s.tau_sq;
        worst_gap = std::max(worst_gap, gap);
        if (!(res <= 1e-10) || !q.converged || !(gap <= 1e-3)) o.pass = false;
    }
    o.detail = fmt(" max SGD residual %.2g", worst_res) + fmt(", max quadratic-saddle rel gap %.2g", worst_gap);
    return o;
}

Outcome criterion8() {
    Outcome o{true, ""};
    struct Item {
        const char* label;
        Activation a;
        std::string mirror;
        double tol;
        bool gates;
    };
    const std::vector<Item> items = {{"identity", Activation::Identity, "squared_l2", 0.10, true},
                                     {"tanh", Activation::Tanh, "squared_l2", 0.20, true},
                                     {"tanh entropy", Activation::Tanh, "neg_entropy", 0.25, false}};
    for (const auto& it : items) {
        ExperimentConfig c;
        c.theory_grid = {{2000, 1600, 1200, 400}};
        c.n_test = 4000;
        c.trials = 5;
        c.kinds = {WeightKind::Gaussian};
        c.activation = it.a;
        c.mirror = it.mirror;
        const ResultTable t = run_theory_compare(c);
        double theory = NAN, emp = NAN, gap = NAN;
        for (const auto& r : t.rows)
            if (r.metric == "theory_tau_sq") theory = r.value;
        for (const auto& r : t.aggregates) {
            if (r.metric == "test_mse_mean") emp = r.value;
            if (r.metric == "theory_rel_gap") gap = r.value;
        }
        if (it.gates && !(gap <= it.tol)) o.pass = false;
        o.detail += std::string(" ") + it.label + fmt(": theory %.4g", theory) + fmt(" vs MC %.4g", emp) +
                    fmt(" (%.1f%%", 100 * gap) + fmt(", limit %.0f%%);", 100 * it.tol);
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
    enum Gate { Numerical, Statistical, Soft };
    struct Crit {
        int id;
        const char* name;
        Gate gate;
        std::function<Outcome()> run;
    };
    bool speed_ok = true;
    const std::vector<Crit> crits = {
        {1, "losslessness, min-norm depth sweep", Statistical, criterion1},
        {2, "losslessness, entropy depth sweep", Statistical, criterion2},
        {3, "MNIST accuracy gap", Statistical, criterion3},
        {4, "GEP accuracy improves with width", Numerical, criterion4},
        {5, "packed kernel correctness and footprint", Numerical, [&] { return criterion5(speed_ok); }},
        {6, "interpolator optimality", Numerical, criterion6},
        {7, "theory solver self-consistency", Numerical, criterion7},
        {8, "theory vs Monte Carlo (soft)", Soft, criterion8},
    };
    int gating_failures = 0, reported_failures = 0;
    for (const auto& c : crits) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string(" exception: ") + e.what();
        }
        std::printf("criterion %d: %s  %s [%.1fs]%s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, seconds_since(t0),
                    o.detail.c_str());
        std::fflush(stdout);
        if (o.pass) continue;
        if (c.gate == Numerical || (strict && c.gate == Statistical))
            ++gating_failures;
        else
            ++reported_failures;
    }
    if (!speed_ok) std::printf("note: packed speedup below the soft 2x floor (reported, not gating)\n");
    std::printf("acceptance: %d gating failure%s, %d reported-only failure%s%s\n", gating_failures,
                gating_failures == 1 ? "" : "s", reported_failures, reported_failures == 1 ? "" : "s",
                strict ? " (strict)" : "");
    return gating_failures == 0 ? 0 : 1;
}
