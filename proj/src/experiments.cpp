#include "rfq/experiments.hpp"

#include "rfq/bitpack.hpp"
#include "rfq/interpolate.hpp"
#include "rfq/theory.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

namespace rfq {

// ---- config ----

void ExperimentConfig::validate() const {
    if (trials < 1) throw Error(ErrorCode::InvalidConfig, "trials must be >= 1");
    if (kinds.empty()) throw Error(ErrorCode::InvalidConfig, "kinds must be nonempty");
    if (experiment == "depth_sweep") {
        if (depths.empty()) throw Error(ErrorCode::InvalidConfig, "depths must be nonempty");
        for (std::size_t L : depths)
            if (L == 0) throw Error(ErrorCode::InvalidConfig, "depths must be >= 1");
        if (d == 0 || d_hidden == 0 || n == 0 || n_test == 0)
            throw Error(ErrorCode::InvalidConfig, "d, d_hidden, n, n_test must be positive");
    } else if (experiment == "mnist_sweep") {
        if (depths.empty() || mnist_widths.empty()) throw Error(ErrorCode::InvalidConfig, "sweep sets must be nonempty");
        if (k_per_class == 0 || test_per_class == 0)
            throw Error(ErrorCode::InvalidConfig, "k_per_class and test_per_class must be positive");
    } else if (experiment == "theory_compare" || experiment == "theory") {
        if (theory_grid.empty()) throw Error(ErrorCode::InvalidConfig, "theory_grid must be nonempty");
        for (const auto& g : theory_grid)
            if (g.size() < 3) throw Error(ErrorCode::InvalidConfig, "theory_grid entries need d_0, ..., d_L, n");
    } else if (experiment == "bench") {
        if (bench_dims.empty()) throw Error(ErrorCode::InvalidConfig, "bench_dims must be nonempty");
    }
    if (mirror != "squared_l2" && mirror != "neg_entropy")
        throw Error(ErrorCode::InvalidConfig, "mirror must be squared_l2 or neg_entropy");
}

std::vector<std::string> config_keys(const std::string& experiment) {
    const std::vector<std::string> common{"seed", "trials", "threads", "out"};
    std::vector<std::string> k;
    if (experiment == "depth_sweep")
        k = {"d", "d_hidden", "n", "n_test", "depths", "kinds", "activation", "mirror", "entropy_a0", "fit_tol",
             "fit_max_iter", "closed_form"};
    else if (experiment == "mnist_sweep")
        k = {"mnist_train_images", "mnist_train_labels", "mnist_test_images", "mnist_test_labels", "k_per_class",
             "test_per_class", "depths", "mnist_width", "mnist_widths", "mnist_depth", "kinds", "activation"};
    else if (experiment == "theory")
        k = {"theory_grid", "activation", "mirror", "entropy_a0"};
    else if (experiment == "theory_compare")
        k = {"theory_grid", "n_test", "kinds", "activation", "mirror", "entropy_a0", "fit_tol", "fit_max_iter"};
    else if (experiment == "bench")
        k = {"bench_dims", "bench_reps", "bench_warmup"};
    k.insert(k.end(), common.begin(), common.end());
    return k;
}

Config preset(const std::string& name, const std::string& experiment) {
    if (name != "desk" && name != "paper") throw Error(ErrorCode::InvalidConfig, "unknown preset '" + name + "'");
    const bool paper = name == "paper";
    Config c;
    c.set("seed", "1");
    if (experiment == "depth_sweep") {
        c.set("d", paper ? "8192" : "2048");
        c.set("d_hidden", paper ? "4096" : "1024");
        c.set("n", paper ? "1000" : "400");
        c.set("n_test", paper ? "5000" : "2000");
        c.set("trials", "10");
        c.set("depths", "1,2,3,4,5");
        c.set("activation", "tanh");
        c.set("mirror", "squared_l2");
        c.set("closed_form", paper ? "false" : "true");
    } else if (experiment == "mnist_sweep") {
        c.set("k_per_class", "20");
        c.set("test_per_class", "20");
        c.set("trials", "20");
        c.set("depths", "1,2,3,4,5");
        c.set("mnist_width", "512");
        c.set("mnist_widths", "256,512,1024,2048,4196");
        c.set("mnist_depth", "2");
        c.set("activation", "relu");
    } else if (experiment == "theory_compare" || experiment == "theory") {
        c.set("theory_grid", paper ? "4000,3000,1000; 4000,3000,2000,1000; 3000,2400,1800,1200,500"
                                   : "1000,800,300; 1000,800,600,300; 1200,1000,800,600,250");
        c.set("n_test", "2000");
        c.set("trials", "5");
        c.set("kinds", "gaussian");
        c.set("activation", "tanh");
        c.set("mirror", "squared_l2");
    } else if (experiment == "bench") {
        c.set("bench_dims", paper ? "512,1024,2048,4096,8192" : "512,1024,2048,4096");
        c.set("bench_reps", "20");
        c.set("bench_warmup", "3");
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown experiment '" + experiment + "'");
    }
    return c;
}

namespace {

std::vector<std::vector<std::size_t>> parse_grid(const std::string& s, const std::string& key) {
    std::vector<std::vector<std::size_t>> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t end = s.find(';', start);
        if (end == std::string::npos) end = s.size();
        const std::string part = s.substr(start, end - start);
        Config tmp;
        tmp.set(key, part);
        auto v = tmp.get_size_list(key, {});
        if (!v.empty()) out.push_back(v);
        start = end + 1;
    }
    return out;
}

}  // namespace

ExperimentConfig make_experiment_config(const Config& c, const std::string& experiment) {
    ExperimentConfig e;
    e.experiment = experiment;
    e.d = static_cast<std::size_t>(c.get_int("d", static_cast<long long>(e.d)));
    e.d_hidden = static_cast<std::size_t>(c.get_int("d_hidden", static_cast<long long>(e.d_hidden)));
    e.n = static_cast<std::size_t>(c.get_int("n", static_cast<long long>(e.n)));
    e.n_test = static_cast<std::size_t>(c.get_int("n_test", static_cast<long long>(e.n_test)));
    e.trials = static_cast<std::size_t>(c.get_int("trials", static_cast<long long>(e.trials)));
    e.depths = c.get_size_list("depths", e.depths);
    if (c.has("kinds")) {
        e.kinds.clear();
        for (const auto& k : c.get_string_list("kinds", {})) {
            try {
                e.kinds.push_back(parse_weight_kind(k));
            } catch (const Error& err) {
                throw Error(ErrorCode::InvalidConfig, err.detail());
            }
        }
    }
    if (c.has("activation")) {
        try {
            e.activation = parse_activation(c.get_string("activation")).variant;
        } catch (const Error& err) {
            throw Error(ErrorCode::InvalidConfig, err.detail());
        }
    }
    if (c.has("mirror")) {
        try {
            e.mirror = get_mirror(c.get_string("mirror")).name;
        } catch (const Error& err) {
            throw Error(ErrorCode::InvalidConfig, err.detail());
        }
    }
    e.entropy_a0 = c.get_double("entropy_a0", e.entropy_a0);
    const long long seed = c.get_int("seed", static_cast<long long>(e.master_seed));
    if (seed < 0) throw Error(ErrorCode::InvalidConfig, "seed must be nonnegative");
    e.master_seed = static_cast<std::uint64_t>(seed);
    e.fit_tol = c.get_double("fit_tol", e.fit_tol);
    e.fit_max_iter = static_cast<int>(c.get_int("fit_max_iter", e.fit_max_iter));
    e.closed_form = c.get_bool("closed_form", e.closed_form);
    const long long th = c.get_int("threads", 0);
    if (th < 0) throw Error(ErrorCode::InvalidConfig, "threads must be >= 0");
    e.threads = static_cast<std::size_t>(th);

    e.mnist_train_images = c.get_string("mnist_train_images");
    e.mnist_train_labels = c.get_string("mnist_train_labels");
    e.mnist_test_images = c.get_string("mnist_test_images");
    e.mnist_test_labels = c.get_string("mnist_test_labels");
    e.k_per_class = static_cast<std::size_t>(c.get_int("k_per_class", static_cast<long long>(e.k_per_class)));
    e.test_per_class = static_cast<std::size_t>(c.get_int("test_per_class", static_cast<long long>(e.test_per_class)));
    e.mnist_width = static_cast<std::size_t>(c.get_int("mnist_width", static_cast<long long>(e.mnist_width)));
    e.mnist_depth = static_cast<std::size_t>(c.get_int("mnist_depth", static_cast<long long>(e.mnist_depth)));
    e.mnist_widths = c.get_size_list("mnist_widths", e.mnist_widths);

    if (c.has("theory_grid")) e.theory_grid = parse_grid(c.get_string("theory_grid"), "theory_grid");

    e.bench_dims = c.get_size_list("bench_dims", e.bench_dims);
    e.bench_reps = static_cast<std::size_t>(c.get_int("bench_reps", static_cast<long long>(e.bench_reps)));
    e.bench_warmup = static_cast<std::size_t>(c.get_int("bench_warmup", static_cast<long long>(e.bench_warmup)));
    e.validate();
    return e;
}

// ---- tables ----

namespace {

auto row_key(const ResultRow& r) {
    return std::tie(r.experiment, r.mirror, r.L, r.d, r.d_hidden, r.n, r.n_test, r.weight_kind, r.seed, r.metric);
}

void append_rows(Table& t, const std::vector<ResultRow>& rows) {
    for (const auto& r : rows)
        t.rows.push_back({r.experiment, r.weight_kind, double(r.L), double(r.d), double(r.d_hidden), double(r.n),
                          double(r.n_test), double(r.seed), r.mirror, r.metric, r.value});
}

Table empty_table() {
    Table t;
    t.columns = {"experiment", "weight_kind", "L", "d", "d_hidden", "n", "n_test", "seed", "mirror", "metric", "value"};
    return t;
}

}  // namespace

Table ResultTable::to_table(bool include_aggregates) const {
    Table t = empty_table();
    append_rows(t, rows);
    if (include_aggregates) append_rows(t, aggregates);
    return t;
}

Table ResultTable::summary_table() const {
    Table t = empty_table();
    append_rows(t, aggregates);
    return t;
}

void ResultTable::sort() {
    auto cmp = [](const ResultRow& a, const ResultRow& b) { return row_key(a) < row_key(b); };
    std::sort(rows.begin(), rows.end(), cmp);
    std::sort(aggregates.begin(), aggregates.end(), cmp);
}

std::int64_t trial_seed(std::uint64_t master, std::size_t trial, std::size_t sweep) {
    return static_cast<std::int64_t>(split_seed(master, trial, sweep) >> 11);
}

std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("RF_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(resolve_threads(threads), std::max<std::size_t>(count, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void append_aggregates(ResultTable& t) {
    using Key = std::tuple<std::string, std::string, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,
                           std::string, std::string>;
    std::map<Key, std::vector<double>> groups;
    std::map<Key, ResultRow> proto;
    for (const auto& r : t.rows) {
        if (r.seed < 0) continue;  // theory rows are single values
        Key k{r.experiment, r.mirror, r.L, r.d, r.d_hidden, r.n, r.n_test, r.weight_kind, r.metric};
        groups[k].push_back(r.value);
        proto.emplace(k, r);
    }
    std::map<Key, double> means;
    for (const auto& [k, vals] : groups) {
        double m = 0.0;
        for (double v : vals) m += v;
        m /= static_cast<double>(vals.size());
        double s = 0.0;
        for (double v : vals) s += (v - m) * (v - m);
        s = vals.size() > 1 ? std::sqrt(s / static_cast<double>(vals.size() - 1)) : 0.0;
        ResultRow r = proto.at(k);
        r.seed = -1;
        r.metric = std::get<8>(k) + "_mean";
        r.value = m;
        t.aggregates.push_back(r);
        r.metric = std::get<8>(k) + "_std";
        r.value = s;
        t.aggregates.push_back(r);
        means[k] = m;
    }
    // paired gaps between weight kinds
    const std::string g = weight_kind_name(WeightKind::Gaussian), q = weight_kind_name(WeightKind::Rademacher);
    for (const auto& [k, mg] : means) {
        if (std::get<7>(k) != g) continue;
        const std::string& metric = std::get<8>(k);
        const bool relative = metric == "test_mse" || metric == "closed_form_mse";
        if (!relative && metric != "accuracy") continue;
        Key kq = k;
        std::get<7>(kq) = q;
        auto it = means.find(kq);
        if (it == means.end()) continue;
        ResultRow r = proto.at(k);
        r.seed = -1;
        r.weight_kind = "paired";
        r.metric = metric + (relative ? "_rel_gap" : "_gap");
        r.value = relative ? std::abs(mg - it->second) / mg : std::abs(mg - it->second);
        t.aggregates.push_back(r);
    }
}

// ---- MSE ----

double empirical_mse(const RFNetwork& net, const Vec& a, const Vec& a_star, std::size_t n_test, std::uint64_t seed) {
    if (a.size() != a_star.size() || static_cast<std::size_t>(a.size()) != net.d_out())
        throw Error(ErrorCode::DimMismatch, "coefficient length must equal d_L");
    const Mat X = gen_synthetic(net.d_in(), n_test, seed);
    const Vec diff = a - a_star;
    if (diff.isZero(0.0)) return 0.0;
    const Vec r = forward(net, X) * diff;
    return r.squaredNorm() / static_cast<double>(n_test);
}

namespace {

double closed_form_at(const Vec& diff, const WeightLayer& layer, double rho1, double rho2_sq, const Mat& cov) {
    if (cov.rows() != static_cast<Eigen::Index>(layer.d_in))
        throw Error(ErrorCode::DimMismatch, "Sigma_{L-1} not available for the last layer");
    // u = W_L^T diff, computed through the layer map applied to the 1 x d_L row
    const Mat W = layer.dense();
    const Vec u = W.transpose() * diff;
    const double q = u.dot(cov * u);
    return std::max(0.0, rho1 * rho1 * q) + rho2_sq * diff.squaredNorm();
}

}  // namespace

double closed_form_mse(const Vec& a, const Vec& a_star, const RFNetwork& net, const GepState& state) {
    const std::size_t L = net.depth();
    if (a.size() != a_star.size() || static_cast<std::size_t>(a.size()) != net.d_out())
        throw Error(ErrorCode::DimMismatch, "coefficient length must equal d_L");
    if (state.depth() < L || state.cov.size() < L || state.cov[L - 1].size() == 0)
        throw Error(ErrorCode::DimMismatch, "GEP state lacks Sigma_{L-1}");
    const Vec diff = a - a_star;
    if (diff.isZero(0.0)) return 0.0;
    return closed_form_at(diff, net.layers[L - 1], state.rho1[L], state.rho2_sq[L], state.cov[L - 1]);
}

// ---- sweeps ----

namespace {

Mat activate(const ActivationKind& act, const Mat& Z) {
    return Z.unaryExpr([&](double z) { return act(z); });
}

struct FitOut {
    Vec a;
    double residual = 0.0;
    bool ok = true;
    std::string error;
};

FitOut fit_last_layer(const Mat& Phi, const Vec& y, const ExperimentConfig& cfg) {
    FitOut out;
    try {
        if (cfg.mirror == "neg_entropy") {
            const double a0 = cfg.entropy_a0 > 0.0 ? cfg.entropy_a0 : 1.0 / static_cast<double>(Phi.cols());
            auto r = bregman_fit(Phi, y, neg_entropy(), Vec::Constant(Phi.cols(), a0), cfg.fit_tol, cfg.fit_max_iter);
            out.a = std::move(r.a);
            out.residual = r.residual_inf;
        } else {
            auto r = min_norm_fit(Phi, y);
            out.a = std::move(r.a);
            out.residual = r.residual_inf;
        }
    } catch (const Error& e) {
        out.ok = false;
        out.error = error_name(e.code());
    }
    return out;
}

struct RowBase {
    std::string experiment, kind, mirror;
    std::size_t L, d, dh, n, n_test;
    std::int64_t seed;

    ResultRow make(const std::string& metric, double v) const {
        return {experiment, kind, L, d, dh, n, n_test, seed, mirror, metric, v};
    }
};

std::vector<ResultRow> collect(std::vector<std::vector<ResultRow>>& parts) {
    std::vector<ResultRow> all;
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    return all;
}

}  // namespace

ResultTable run_depth_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const ActivationKind act = make_activation(cfg.activation);
    const std::size_t Lmax = *std::max_element(cfg.depths.begin(), cfg.depths.end());
    std::vector<std::size_t> dims{cfg.d};
    for (std::size_t l = 0; l < Lmax; ++l) dims.push_back(cfg.d_hidden);

    std::vector<std::vector<ResultRow>> parts(cfg.trials);
    parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
        const std::int64_t s = trial_seed(cfg.master_seed, t, 0);
        const auto us = static_cast<std::uint64_t>(s);
        const Mat Xtr = gen_synthetic(cfg.d, cfg.n, split_seed(us, 1));
        const Mat Xte = gen_synthetic(cfg.d, cfg.n_test, split_seed(us, 2));
        const RFNetwork gauss = build_network(dims, act, WeightKind::Gaussian, us, true);
        for (WeightKind kind : cfg.kinds) {
            const RFNetwork net = kind == WeightKind::Gaussian ? gauss : quantize(gauss);
            GepState state;
            if (cfg.closed_form) {
                GepOptions o;
                o.keep_all = true;
                state = gep_recursion(Sigma0Spec::isotropic(cfg.d), net, o);
            }
            Mat Htr = Xtr, Hte = Xte;
            for (std::size_t L = 1; L <= Lmax; ++L) {
                Htr = activate(act, net.layers[L - 1].apply(Htr));
                Hte = activate(act, net.layers[L - 1].apply(Hte));
                if (std::find(cfg.depths.begin(), cfg.depths.end(), L) == cfg.depths.end()) continue;
                RowBase b{"depth_sweep", weight_kind_name(kind), cfg.mirror, L, cfg.d, cfg.d_hidden, cfg.n, cfg.n_test, s};
                const Vec a_star = sample_ground_truth(cfg.d_hidden, split_seed(us, 3, L));
                const Vec y = Htr * a_star;
                const double smin = sigma_min_diagnostic(Htr);
                parts[t].push_back(b.make("sigma_min", smin));
                parts[t].push_back(b.make("ill_conditioned", smin < 1e-10 ? 1.0 : 0.0));
                FitOut f = fit_last_layer(Htr, y, cfg);
                if (!f.ok) {
                    parts[t].push_back(b.make("fit_error_" + f.error, 1.0));
                    continue;
                }
                parts[t].push_back(b.make("fit_residual", f.residual));
                const Vec diff = f.a - a_star;
                parts[t].push_back(b.make("test_mse", (Hte * diff).squaredNorm() / static_cast<double>(cfg.n_test)));
                if (cfg.closed_form)
                    parts[t].push_back(b.make("closed_form_mse",
                                              closed_form_at(diff, net.layers[L - 1], state.rho1[L], state.rho2_sq[L],
                                                             state.cov[L - 1])));
            }
        }
    });
    ResultTable out;
    out.rows = collect(parts);
    append_aggregates(out);
    out.sort();
    return out;
}

ResultTable run_mnist_sweep(const ExperimentConfig& cfg) {
    if (cfg.mnist_train_images.empty() || cfg.mnist_train_labels.empty() || cfg.mnist_test_images.empty() ||
        cfg.mnist_test_labels.empty())
        throw Error(ErrorCode::InsufficientData,
                    "mnist_train_images, mnist_train_labels, mnist_test_images and mnist_test_labels are required");
    const MnistData data =
        load_mnist(cfg.mnist_train_images, cfg.mnist_train_labels, cfg.mnist_test_images, cfg.mnist_test_labels);
    return run_mnist_sweep(cfg, data);
}

ResultTable run_mnist_sweep(const ExperimentConfig& cfg, const MnistData& data) {
    ExperimentConfig c = cfg;
    c.experiment = "mnist_sweep";
    c.validate();
    const ActivationKind act = make_activation(cfg.activation);
    int num_classes = 0;
    for (int l : data.train.labels) num_classes = std::max(num_classes, l + 1);
    for (int l : data.test.labels) num_classes = std::max(num_classes, l + 1);
    const std::size_t d = static_cast<std::size_t>(data.train.X.cols());
    const std::size_t n = cfg.k_per_class * static_cast<std::size_t>(num_classes);
    const std::size_t n_test = cfg.test_per_class * static_cast<std::size_t>(num_classes);
    const std::size_t Lmax = *std::max_element(cfg.depths.begin(), cfg.depths.end());

    // job 0: depth sweep at fixed width; job 1 + i: width i at fixed depth
    const std::size_t per_trial = 1 + cfg.mnist_widths.size();
    std::vector<std::vector<ResultRow>> parts(cfg.trials * per_trial);
    parallel_for(parts.size(), cfg.threads, [&](std::size_t job) {
        const std::size_t t = job / per_trial, j = job % per_trial;
        const std::int64_t s = trial_seed(cfg.master_seed, t, 0);
        const auto us = static_cast<std::uint64_t>(s);
        const auto tr_idx = balanced_subsample(data.train.labels, cfg.k_per_class, split_seed(us, 1), num_classes);
        const auto te_idx = balanced_subsample(data.test.labels, cfg.test_per_class, split_seed(us, 2), num_classes);
        Mat Xtr(tr_idx.size(), d), Xte(te_idx.size(), d);
        std::vector<int> ytr, yte;
        for (std::size_t i = 0; i < tr_idx.size(); ++i) {
            Xtr.row(i) = data.train.X.row(tr_idx[i]);
            ytr.push_back(data.train.labels[tr_idx[i]]);
        }
        for (std::size_t i = 0; i < te_idx.size(); ++i) {
            Xte.row(i) = data.test.X.row(te_idx[i]);
            yte.push_back(data.test.labels[te_idx[i]]);
        }
        const Mat Y = one_hot(ytr, num_classes);

        const std::size_t width = j == 0 ? cfg.mnist_width : cfg.mnist_widths[j - 1];
        const std::size_t depth = j == 0 ? Lmax : cfg.mnist_depth;
        std::vector<std::size_t> dims{d};
        for (std::size_t l = 0; l < depth; ++l) dims.push_back(width);
        const std::uint64_t net_seed = j == 0 ? split_seed(us, 4) : split_seed(us, 5, width);
        const RFNetwork gauss = build_network(dims, act, WeightKind::Gaussian, net_seed, true);
        for (WeightKind kind : cfg.kinds) {
            const RFNetwork net = kind == WeightKind::Gaussian ? gauss : quantize(gauss);
            Mat Htr = Xtr, Hte = Xte;
            for (std::size_t L = 1; L <= depth; ++L) {
                Htr = activate(act, net.layers[L - 1].apply(Htr));
                Hte = activate(act, net.layers[L - 1].apply(Hte));
                if (j == 0 && std::find(cfg.depths.begin(), cfg.depths.end(), L) == cfg.depths.end()) continue;
                if (j != 0 && L != depth) continue;
                RowBase b{j == 0 ? "mnist_depth" : "mnist_width", weight_kind_name(kind), "squared_l2", L, d, width, n,
                          n_test, s};
                const double smin = sigma_min_diagnostic(Htr);
                parts[job].push_back(b.make("sigma_min", smin));
                parts[job].push_back(b.make("ill_conditioned", smin < 1e-10 ? 1.0 : 0.0));
                parts[job].push_back(b.make("input_scale", data.train.input_scale));
                MultiInterpolationResult fit;
                try {
                    fit = min_norm_fit(Htr, Y);
                } catch (const Error& e) {
                    parts[job].push_back(b.make(std::string("fit_error_") + error_name(e.code()), 1.0));
                    continue;
                }
                const Mat P = Hte * fit.A;
                std::size_t correct = 0;
                for (Eigen::Index i = 0; i < P.rows(); ++i) {
                    Eigen::Index arg;
                    P.row(i).maxCoeff(&arg);
                    if (arg == yte[static_cast<std::size_t>(i)]) ++correct;
                }
                parts[job].push_back(b.make("fit_residual", fit.residual_inf));
                parts[job].push_back(b.make("accuracy", static_cast<double>(correct) / static_cast<double>(P.rows())));
            }
        }
    });
    ResultTable out;
    out.rows = collect(parts);
    append_aggregates(out);
    out.sort();
    return out;
}

namespace {

TheoryInput grid_input(const std::vector<std::size_t>& entry, const ActivationKind& act) {
    const std::vector<std::size_t> dims(entry.begin(), entry.end() - 1);
    const std::size_t L = dims.size() - 1;
    const GepState st = gep_asymptotic(1.0 / static_cast<double>(dims[0]), L, act);
    return make_theory_input(dims, entry.back(), std::vector<double>(dims[0], 1.0 / static_cast<double>(dims[0])), st);
}

double entropy_a0(const ExperimentConfig& cfg, std::size_t dL) {
    return cfg.entropy_a0 > 0.0 ? cfg.entropy_a0 : 1.0 / static_cast<double>(dL);
}

}  // namespace

ResultTable run_theory_compare(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.experiment = "theory_compare";
    c.validate();
    const ActivationKind act = make_activation(cfg.activation);
    const std::size_t G = cfg.theory_grid.size();
    std::vector<std::vector<ResultRow>> parts(G * (cfg.trials + 1));
    parallel_for(parts.size(), cfg.threads, [&](std::size_t job) {
        const std::size_t g = job / (cfg.trials + 1), t = job % (cfg.trials + 1);
        const auto& entry = cfg.theory_grid[g];
        const std::vector<std::size_t> dims(entry.begin(), entry.end() - 1);
        const std::size_t n = entry.back(), L = dims.size() - 1, dL = dims.back();
        if (t == cfg.trials) {
            RowBase b{"theory_compare", "theory", cfg.mirror, L, dims[0], dL, n, cfg.n_test, -1};
            try {
                const TheoryInput in = grid_input(entry, act);
                double tau_sq;
                if (cfg.mirror == "neg_entropy") {
                    tau_sq = solve_mirror_saddle(in, neg_entropy(), entropy_a0(cfg, dL)).tau_sq;
                } else {
                    tau_sq = solve_sgd_system(in).tau_sq;
                }
                parts[job].push_back(b.make("theory_tau_sq", tau_sq));
            } catch (const Error& e) {
                parts[job].push_back(b.make(std::string("theory_error_") + error_name(e.code()), 1.0));
            }
            return;
        }
        const std::int64_t s = trial_seed(cfg.master_seed, t, g);
        const auto us = static_cast<std::uint64_t>(s);
        const Mat Xtr = gen_synthetic(dims[0], n, split_seed(us, 1));
        const Mat Xte = gen_synthetic(dims[0], cfg.n_test, split_seed(us, 2));
        const RFNetwork gauss = build_network(dims, act, WeightKind::Gaussian, us, true);
        const Vec a_star = sample_ground_truth(dL, split_seed(us, 3));
        for (WeightKind kind : cfg.kinds) {
            const RFNetwork net = kind == WeightKind::Gaussian ? gauss : quantize(gauss);
            RowBase b{"theory_compare", weight_kind_name(kind), cfg.mirror, L, dims[0], dL, n, cfg.n_test, s};
            const Mat Htr = forward(net, Xtr);
            FitOut f = fit_last_layer(Htr, Htr * a_star, cfg);
            if (!f.ok) {
                parts[job].push_back(b.make("fit_error_" + f.error, 1.0));
                continue;
            }
            const Vec r = forward(net, Xte) * (f.a - a_star);
            parts[job].push_back(b.make("test_mse", r.squaredNorm() / static_cast<double>(cfg.n_test)));
        }
    });
    ResultTable out;
    out.rows = collect(parts);
    append_aggregates(out);
    // relative gap of each kind's mean test MSE to the theory value
    for (const auto& th : out.rows) {
        if (th.weight_kind != "theory" || th.metric != "theory_tau_sq") continue;
        for (const auto& a : std::vector<ResultRow>(out.aggregates)) {
            if (a.metric != "test_mse_mean" || a.L != th.L || a.d != th.d || a.d_hidden != th.d_hidden || a.n != th.n)
                continue;
            ResultRow r = a;
            r.metric = "theory_rel_gap";
            r.value = th.value > 0.0 ? std::abs(a.value - th.value) / th.value : std::abs(a.value);
            out.aggregates.push_back(r);
        }
    }
    out.sort();
    return out;
}

ResultTable run_theory(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.experiment = "theory";
    c.validate();
    const ActivationKind act = make_activation(cfg.activation);
    ResultTable out;
    for (const auto& entry : cfg.theory_grid) {
        const std::vector<std::size_t> dims(entry.begin(), entry.end() - 1);
        const std::size_t n = entry.back(), L = dims.size() - 1, dL = dims.back();
        RowBase b{"theory", "theory", "squared_l2", L, dims[0], dL, n, 0, -1};
        try {
            const TheoryInput in = grid_input(entry, act);
            const TheorySolution s = solve_sgd_system(in);
            out.rows.push_back(b.make("tau_sq", s.tau_sq));
            out.rows.push_back(b.make("kappa", s.theta));
            out.rows.push_back(b.make("residual", s.residual));
            out.rows.push_back(b.make("converged", s.converged ? 1.0 : 0.0));
            out.rows.push_back(b.make("rank_limited", s.rank_limited ? 1.0 : 0.0));
            for (std::size_t l = 0; l < s.zeta.size(); ++l) {
                out.rows.push_back(b.make("zeta_" + std::to_string(l), s.zeta[l]));
                out.rows.push_back(b.make("u_" + std::to_string(l), s.u[l]));
            }
        } catch (const Error& e) {
            out.rows.push_back(b.make(std::string("error_") + error_name(e.code()), 1.0));
        }
        b.mirror = cfg.mirror;
        try {
            const TheoryInput in = grid_input(entry, act);
            const double a0 = cfg.mirror == "neg_entropy" ? entropy_a0(cfg, dL) : 0.0;
            const SaddleSolution s = solve_mirror_saddle(in, get_mirror(cfg.mirror), a0);
            out.rows.push_back(b.make("saddle_tau_sq", s.tau_sq));
            out.rows.push_back(b.make("saddle_beta", s.beta));
            out.rows.push_back(b.make("saddle_mu", s.mu));
            out.rows.push_back(b.make("saddle_tau_prime", s.tau_prime));
            out.rows.push_back(b.make("saddle_residual", s.residual));
            out.rows.push_back(b.make("saddle_converged", s.converged ? 1.0 : 0.0));
        } catch (const Error& e) {
            out.rows.push_back(b.make(std::string("saddle_error_") + error_name(e.code()), 1.0));
        }
    }
    out.sort();
    return out;
}

ResultTable run_bench(const ExperimentConfig& cfg) {
    ResultTable out;
    for (std::size_t dim : cfg.bench_dims) {
        const BenchReport r = bench_kernel(dim, dim, cfg.bench_reps, cfg.bench_warmup, split_seed(cfg.master_seed, dim));
        RowBase b{"bench", weight_kind_name(WeightKind::Rademacher), "none", 1, dim, dim, 1, 0,
                  static_cast<std::int64_t>(cfg.master_seed)};
        out.rows.push_back(b.make("dense_ns", r.dense_ns));
        out.rows.push_back(b.make("packed_ns", r.packed_ns));
        out.rows.push_back(b.make("speedup", r.speedup));
        out.rows.push_back(b.make("dense_bytes", static_cast<double>(r.dense_bytes)));
        out.rows.push_back(b.make("packed_bytes", static_cast<double>(r.packed_bytes)));
        out.rows.push_back(b.make("memory_ratio", static_cast<double>(r.dense_bytes) / static_cast<double>(r.packed_bytes)));
    }
    out.sort();
    return out;
}

}  // namespace rfq
