#include "rfq/theory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace rfq {

TheoryInput make_theory_input(const std::vector<std::size_t>& dims, std::size_t n, std::vector<double> sigma0_eigs,
                              const GepState& state) {
    if (state.depth() + 1 != dims.size())
        throw Error(ErrorCode::DimMismatch, "GEP state depth does not match dims");
    TheoryInput in;
    in.dims = dims;
    in.n = n;
    in.sigma0_eigs = std::move(sigma0_eigs);
    in.rho1 = state.rho1;
    in.rho2_sq = state.rho2_sq;
    return in;
}

namespace {

void validate(const TheoryInput& in) {
    if (in.dims.size() < 2) throw Error(ErrorCode::EmptyDims, "theory needs d_0..d_L with L >= 1");
    for (std::size_t d : in.dims)
        if (d == 0) throw Error(ErrorCode::ZeroDim, "theory dims must be positive");
    const std::size_t L = in.depth();
    if (in.rho1.size() != L + 1 || in.rho2_sq.size() != L + 1)
        throw Error(ErrorCode::DimMismatch, "rho vectors must have L+1 entries (index 0 unused)");
    if (in.sigma0_eigs.size() != in.dims[0])
        throw Error(ErrorCode::DimMismatch, "Sigma0 spectrum length must equal d_0");
    for (double e : in.sigma0_eigs)
        if (!(e >= 0.0)) throw Error(ErrorCode::NonpositiveVariance, "Sigma0 eigenvalues must be nonnegative");
    for (std::size_t l = 1; l <= L; ++l) {
        if (!(in.rho1[l] * in.rho1[l] > 0.0))
            throw Error(ErrorCode::DegenerateRatio, "rho1 of layer " + std::to_string(l) + " is zero");
        if (!(in.rho2_sq[l] >= 0.0)) throw Error(ErrorCode::NonpositiveVariance, "rho2^2 must be nonnegative");
    }
    if (in.n == 0) throw Error(ErrorCode::ZeroDim, "n must be positive");
    if (in.n >= in.dims.back())
        throw Error(ErrorCode::DegenerateRatio, "need n < d_L for interpolation (n=" + std::to_string(in.n) +
                                                    ", d_L=" + std::to_string(in.dims.back()) + ")");
}

}  // namespace

StieltjesChain::StieltjesChain(const TheoryInput& in) : dims_(in.dims) {
    const std::size_t L = in.depth();
    rho1_sq_.assign(L + 1, 0.0);
    rho2_sq_.assign(L + 1, 0.0);
    for (std::size_t l = 1; l <= L; ++l) {
        rho1_sq_[l] = in.rho1[l] * in.rho1[l];
        rho2_sq_[l] = in.rho2_sq[l];
    }
    std::map<double, double> groups;
    const double w = 1.0 / static_cast<double>(in.sigma0_eigs.size());
    for (double e : in.sigma0_eigs) groups[e] += w;
    base_.assign(groups.begin(), groups.end());
}

double StieltjesChain::rank_fraction(std::size_t level) const {
    if (level == 0) {
        double r = 0.0;
        for (auto [e, w] : base_)
            if (e > 0.0) r += w;
        return r;
    }
    if (rho2_sq_[level] > 0.0) return 1.0;
    const double q = static_cast<double>(dims_[level - 1]), p = static_cast<double>(dims_[level]);
    return std::min(1.0, q / p * rank_fraction(level - 1));
}

double StieltjesChain::solve_level(std::size_t level, double up, double* h_out, double* dh_out,
                                   double* fprime_out) const {
    const double ratio = static_cast<double>(dims_[level]) / static_cast<double>(dims_[level - 1]);
    // h(e) = (1/q) sum s/(1+se) = eta_S(1/e)/e, written through the level below.
    auto hfun = [&](double m, double& h, double& dh) {
        const double e = ratio * m;
        const double y = 1.0 / e;
        Point P = eval(level - 1, y);
        const double nu = P.m - y * P.D;
        h = P.eta * y;
        dh = -y * y * (P.eta - y * nu);
    };
    double lo = 0.0, hi = 1.0 / up;
    double m = hi, h = 0.0, dh = 0.0;
    double f = 0.0, fp = 1.0;
    for (int it = 0; it < 200; ++it) {
        hfun(m, h, dh);
        f = m * (up + h) - 1.0;
        fp = up + h + m * dh * ratio;
        if (f == 0.0) break;
        if (f < 0.0)
            lo = m;
        else
            hi = m;
        if (std::abs(f) < 1e-15 || hi - lo <= 1e-15 * hi) break;
        double mn = m - f / fp;
        if (!(mn > lo && mn < hi) || !std::isfinite(mn)) mn = lo > 0.0 ? 0.5 * (lo + hi) : 0.5 * hi;
        m = mn;
    }
    if (!(fp > 0.0))
        throw Error(ErrorCode::DegenerateRatio, "nonpositive Jacobian in the layer-" + std::to_string(level) + " solve");
    if (h_out) *h_out = h;
    if (dh_out) *dh_out = dh;
    if (fprime_out) *fprime_out = fp;
    return m;
}

StieltjesChain::Point StieltjesChain::eval(std::size_t level, double u) const {
    Point P;
    if (level == 0) {
        for (auto [e, w] : base_) {
            const double inv = 1.0 / (e + u);
            P.m += w * inv;
            P.eta += w * e * inv;
            P.D += w * inv * inv;
        }
        return P;
    }
    const double r1 = rho1_sq_[level], r2 = rho2_sq_[level];
    const double up = (u + r2) / r1;
    double h = 0.0, fp = 1.0;
    const double mB = solve_level(level, up, &h, nullptr, &fp);
    const double etaB = h / (up + h);
    const double DB = mB / fp;
    P.m = mB / r1;
    P.eta = (r2 + u * etaB) / (u + r2);
    P.D = DB / (r1 * r1);
    return P;
}

void StieltjesChain::trace(std::size_t level, double u, std::vector<double>& us, std::vector<Point>& pts) const {
    us.assign(level + 1, 0.0);
    pts.assign(level + 1, Point{});
    for (std::size_t l = level;; --l) {
        us[l] = u;
        pts[l] = eval(l, u);
        if (l == 0) break;
        const double mB = pts[l].m * rho1_sq_[l];
        const double e = static_cast<double>(dims_[l]) / static_cast<double>(dims_[l - 1]) * mB;
        u = 1.0 / e;
    }
}

TheorySolution solve_sgd_system(const TheoryInput& input, double tol, int max_iter) {
    validate(input);
    const std::size_t L = input.depth();
    const double p = static_cast<double>(input.dims[L]);
    const double target = static_cast<double>(input.n) / p;
    StieltjesChain chain(input);

    TheorySolution sol;
    if (chain.rank_fraction(L) <= target * (1.0 + 1e-12)) {
        sol.rank_limited = true;
        sol.converged = true;
        sol.tau_sq = 0.0;
        sol.theta = 0.0;
        return sol;
    }

    auto g = [&](double k) { return chain.eval(L, k).eta - target; };
    double hi = 1.0, lo = 1.0;
    for (int it = 0; g(hi) > 0.0; ++it) {
        hi *= 4.0;
        if (it > 2000) throw Error(ErrorCode::NoConvergence, "cannot bracket kappa from above");
    }
    for (int it = 0; g(lo) < 0.0; ++it) {
        lo /= 4.0;
        if (it > 2000) throw Error(ErrorCode::NoConvergence, "cannot bracket kappa from below");
    }
    if (lo > hi) std::swap(lo, hi);
    double tl = std::log(lo), th = std::log(hi);
    double t = 0.5 * (tl + th);
    int it = 0;
    for (; it < max_iter; ++it) {
        const double k = std::exp(t);
        StieltjesChain::Point P = chain.eval(L, k);
        const double gv = P.eta - target;
        if (std::abs(gv) <= tol * 1e-2) break;
        if (gv > 0.0)
            tl = t;
        else
            th = t;
        if (th - tl <= 1e-15 * std::max(1.0, std::abs(t))) break;
        const double nu = P.m - k * P.D;
        const double dg = -nu * k;  // d eta / d log k
        double tn = t - gv / dg;
        if (!(tn > tl && tn < th) || !std::isfinite(tn)) tn = 0.5 * (tl + th);
        t = tn;
    }
    sol.iterations = it;
    sol.theta = std::exp(t);
    std::vector<StieltjesChain::Point> pts;
    chain.trace(L, sol.theta, sol.u, pts);
    sol.zeta.resize(L + 1);
    sol.zeta_prime.resize(L + 1);
    sol.eta.resize(L + 1);
    for (std::size_t l = 0; l <= L; ++l) {
        sol.zeta[l] = pts[l].m;
        sol.zeta_prime[l] = pts[l].D;
        sol.eta[l] = pts[l].eta;
    }
    sol.tau_sq = sol.theta * target;
    sol.residual = sgd_residual(input, sol);
    sol.converged = sol.residual <= std::max(tol, 1e-12) && it < max_iter;
    if (it >= max_iter) {
        std::ostringstream os;
        os << "kappa solve hit max_iter=" << max_iter << ", residual " << sol.residual;
        throw Error(ErrorCode::NoConvergence, os.str());
    }
    return sol;
}

double sgd_residual(const TheoryInput& input, const TheorySolution& sol) {
    const std::size_t L = input.depth();
    const double p = static_cast<double>(input.dims[L]);
    const double target = static_cast<double>(input.n) / p;
    if (sol.rank_limited) {
        StieltjesChain chain(input);
        return chain.rank_fraction(L) <= target * (1.0 + 1e-12) && sol.tau_sq == 0.0 ? 0.0 : 1.0;
    }
    if (sol.u.size() != L + 1 || sol.zeta.size() != L + 1 || sol.eta.size() != L + 1)
        return std::numeric_limits<double>::infinity();

    double res = 0.0;
    auto upd = [&](double r) { res = std::max(res, std::isfinite(r) ? r : std::numeric_limits<double>::infinity()); };

    // base spectrum
    {
        double m = 0.0, eta = 0.0;
        const double w = 1.0 / static_cast<double>(input.sigma0_eigs.size());
        for (double e : input.sigma0_eigs) {
            m += w / (e + sol.u[0]);
            eta += w * e / (e + sol.u[0]);
        }
        upd(std::abs(sol.zeta[0] - m) / m);
        upd(std::abs(sol.eta[0] - eta));
    }
    for (std::size_t l = 0; l <= L; ++l) upd(std::abs(sol.eta[l] - (1.0 - sol.u[l] * sol.zeta[l])));
    for (std::size_t l = 1; l <= L; ++l) {
        const double r1 = input.rho1[l] * input.rho1[l], r2 = input.rho2_sq[l];
        const double up = (sol.u[l] + r2) / r1;
        const double mB = r1 * sol.zeta[l];
        const double e = static_cast<double>(input.dims[l]) / static_cast<double>(input.dims[l - 1]) * mB;
        upd(std::abs(sol.u[l - 1] * e - 1.0));
        const double h = sol.eta[l - 1] * sol.u[l - 1];
        upd(std::abs(mB * (up + h) - 1.0));
    }
    upd(std::abs(sol.eta[L] - target));
    upd(std::abs(sol.u[L] - sol.theta) / sol.theta);
    upd(std::abs(sol.tau_sq - sol.theta * target) / std::max(sol.tau_sq, std::numeric_limits<double>::min()));
    return res;
}

MoreauResult moreau_envelope(const MirrorMap& mirror, double c, double v) {
    if (!(c > 0.0)) throw Error(ErrorCode::OutOfRange, "Moreau parameter c must be positive");
    MoreauResult r;
    r.prox = mirror.prox(c, v);
    const double d = v - r.prox;
    r.value = d * d / (2.0 * c) + mirror.f(r.prox);
    return r;
}

double expected_moreau(const MirrorMap& mirror, double c, double z_var, double astar_var, double a0_scalar,
                       int nodes) {
    if (!(z_var >= 0.0) || !(astar_var >= 0.0)) throw Error(ErrorCode::NonpositiveVariance, "variances must be >= 0");
    const GaussHermite& gh = gauss_hermite(nodes);
    const double sa = std::sqrt(astar_var), sz = std::sqrt(z_var);
    const double g0 = mirror.df(a0_scalar);
    double acc = 0.0;
    for (std::size_t i = 0; i < gh.x.size(); ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < gh.x.size(); ++j) {
            const double v = sa * gh.x[i] - g0 - c * sz * gh.x[j];
            inner += gh.w[j] * moreau_envelope(mirror, c, v).value;
        }
        acc += gh.w[i] * inner;
    }
    return acc;
}

namespace {

struct WPart {
    double value = 0.0;
    double w_gamma = 0.0;  // d value / d gamma
    double w_sigma = 0.0;  // d value / d sigma_z^2
};

// p * E min_x [D_psi(x, a0) + (gamma/2)(x - a)^2 + sigma z (x - a)], a ~ N(0, 1/p), z ~ N(0,1).
WPart w_part(const MirrorMap& mirror, double a0, double p, double gamma, double s2, int nodes) {
    const GaussHermite& gh = gauss_hermite(nodes);
    const double sigma = std::sqrt(s2);
    const double sa = 1.0 / std::sqrt(p);
    const double g0 = mirror.df(a0), f0 = mirror.f(a0);
    const double c = 1.0 / gamma;
    WPart out;
    for (std::size_t i = 0; i < gh.x.size(); ++i) {
        const double a = sa * gh.x[i];
        for (std::size_t j = 0; j < gh.x.size(); ++j) {
            const double z = gh.x[j];
            const double wt = gh.w[i] * gh.w[j];
            const double v = a + (g0 - sigma * z) * c;
            const double x = mirror.prox(c, v);
            const double w = x - a;
            const double phi = mirror.f(x) - f0 - g0 * (x - a0) + 0.5 * gamma * w * w + sigma * z * w;
            out.value += wt * phi;
            out.w_gamma += wt * 0.5 * w * w;
            out.w_sigma += wt * z * w;
        }
    }
    out.value *= p;
    out.w_gamma *= p;
    out.w_sigma *= p / (2.0 * sigma);
    return out;
}

}  // namespace

SaddleEval saddle_objective(const TheoryInput& input, const StieltjesChain& chain, const MirrorMap& mirror,
                            double a0, const double v[4], int nodes) {
    const std::size_t L = input.depth();
    const double p = static_cast<double>(input.dims[L]);
    const double q = static_cast<double>(input.dims[L - 1]);
    const double r1 = input.rho1[L] * input.rho1[L];
    const double r2 = input.rho2_sq[L];
    const double sn = std::sqrt(static_cast<double>(input.n));
    const double t = v[0], b = v[1], mu = v[2], tp = v[3];

    const double r = mu / tp;
    const double c = b * sn * r1 / t;
    const double y = r / c;
    const StieltjesChain::Point P = chain.eval(L - 1, y);
    const double nuS = P.m - y * P.D;
    // traces of (cS + r)^-k S^j over the q-dimensional layer L-1 space
    const double t0 = P.m / c;
    const double T1 = q * P.eta / c;
    const double t2 = P.D / (c * c);
    const double t3 = nuS / (c * c);
    const double t4 = (P.eta - y * nuS) / (c * c);

    const double nw = r - r * r * t0;
    const double dnw_c = r * r * t3;
    const double dnw_r = 1.0 - 2.0 * r * t0 + r * r * t2;
    const double gamma = b * sn * r2 / t + nw;
    const double s2 = b * b * r2 + mu * mu / q;

    const WPart W = w_part(mirror, a0, p, gamma, s2, nodes);

    SaddleEval out;
    out.gamma = gamma;
    out.sigma_z_sq = s2;
    out.w_gamma = W.w_gamma;
    out.value = W.value + 0.5 * b * sn * t + 0.5 * mu * tp - 0.5 * b * b * r1 * T1;
    out.grad[0] = W.w_gamma * (-b * sn * r2 / (t * t) - dnw_c * c / t) + 0.5 * b * sn - 0.5 * b * b * r1 * q * t4 * c / t;
    out.grad[1] = W.w_gamma * (sn * r2 / t + dnw_c * c / b) + W.w_sigma * 2.0 * b * r2 + 0.5 * sn * t - b * r1 * T1 +
                  0.5 * b * b * r1 * q * t4 * c / b;
    out.grad[2] = W.w_gamma * dnw_r / tp + W.w_sigma * 2.0 * mu / q + 0.5 * tp + 0.5 * b * b * r1 * q * t3 / tp;
    out.grad[3] = -W.w_gamma * dnw_r * mu / (tp * tp) + 0.5 * mu - 0.5 * b * b * r1 * q * t3 * mu / (tp * tp);
    return out;
}

namespace {

using V4 = std::array<double, 4>;

double scaled_norm(const double g[4], const V4& v) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s = std::max(s, std::abs(g[j] * v[j]));
    return s;
}

bool all_finite(const SaddleEval& e) {
    if (!std::isfinite(e.value)) return false;
    for (double g : e.grad)
        if (!std::isfinite(g)) return false;
    return true;
}

struct NewtonOut {
    V4 v;
    double gnorm;
    int iters;
    bool ok;
};

// Newton on the stationarity system grad F = 0, finite-difference Jacobian of the analytic gradient.
NewtonOut saddle_newton(const TheoryInput& in, const StieltjesChain& chain, const MirrorMap& mirror, double a0,
                        V4 v, int nodes, int max_iter, double gtol) {
    auto eval = [&](const V4& x, SaddleEval& e) {
        try {
            e = saddle_objective(in, chain, mirror, a0, x.data(), nodes);
        } catch (const Error&) {
            return false;
        }
        return all_finite(e);
    };
    SaddleEval cur;
    if (!eval(v, cur)) return {v, std::numeric_limits<double>::infinity(), 0, false};
    double gn = scaled_norm(cur.grad, v);
    int it = 0, escapes = 0;
    for (; it < max_iter && gn > gtol; ++it) {
        Eigen::Matrix4d J;
        for (int j = 0; j < 4; ++j) {
            const double h = 1e-6 * v[j];
            V4 vp = v, vm = v;
            vp[j] += h;
            vm[j] -= h;
            SaddleEval ep, em;
            if (!eval(vp, ep) || !eval(vm, em)) return {v, gn, it, false};
            for (int i = 0; i < 4; ++i) J(i, j) = (ep.grad[i] - em.grad[i]) / (2.0 * h);
        }
        Eigen::Vector4d g(cur.grad[0], cur.grad[1], cur.grad[2], cur.grad[3]);
        Eigen::Vector4d dx = J.fullPivLu().solve(-g);
        if (!dx.allFinite()) return {v, gn, it, false};
        double s = 1.0;
        for (int j = 0; j < 4; ++j)
            while (v[j] + s * dx[j] <= 0.1 * v[j]) s *= 0.5;
        const double s_full = s;
        bool moved = false;
        while (s > 1e-10) {
            V4 vn;
            for (int j = 0; j < 4; ++j) vn[j] = v[j] + s * dx[j];
            SaddleEval en;
            if (eval(vn, en)) {
                const double gnn = scaled_norm(en.grad, vn);
                if (gnn < (1.0 - 1e-4 * s) * gn || gnn <= gtol) {
                    v = vn;
                    cur = en;
                    gn = gnn;
                    moved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if (!moved) {
            // no merit decrease: take the capped full step a few times before giving up
            if (++escapes > 8) return {v, gn, it, false};
            V4 vn;
            for (int j = 0; j < 4; ++j) vn[j] = v[j] + s_full * dx[j];
            SaddleEval en;
            if (!eval(vn, en)) return {v, gn, it, false};
            v = vn;
            cur = en;
            gn = scaled_norm(en.grad, vn);
        }
    }
    return {v, gn, it, gn <= gtol};
}

double fd_stationarity(const TheoryInput& in, const StieltjesChain& chain, const MirrorMap& mirror, double a0,
                       const V4& v, int nodes) {
    // central differences of F in log coordinates, relative to max(1, |F|)
    const double h = 1e-5;
    const double F = saddle_objective(in, chain, mirror, a0, v.data(), nodes).value;
    double r = 0.0;
    for (int j = 0; j < 4; ++j) {
        V4 vp = v, vm = v;
        vp[j] *= std::exp(h);
        vm[j] *= std::exp(-h);
        const double fp = saddle_objective(in, chain, mirror, a0, vp.data(), nodes).value;
        const double fm = saddle_objective(in, chain, mirror, a0, vm.data(), nodes).value;
        r = std::max(r, std::abs(fp - fm) / (2.0 * h));
    }
    return r / std::max(1.0, std::abs(F));
}

}  // namespace

SaddleSolution solve_mirror_saddle(const TheoryInput& input, const MirrorMap& mirror, double a0,
                                   const SaddleOptions& opt) {
    validate(input);
    if (!mirror.in_domain(a0)) throw Error(ErrorCode::DomainViolation, "a0 outside the mirror domain");
    const std::size_t L = input.depth();
    // Symmetric feature columns positively span R^n only while n/d_L < 1/2; past that a positive
    // interpolant fails to exist with probability -> 1 and the scalar problem has no finite saddle.
    if (mirror.domain == MirrorDomain::PositiveOrthant && 2 * input.n >= input.dims[L])
        throw Error(ErrorCode::DegenerateRatio, "positive-orthant mirror needs n/d_L < 1/2 (n=" +
                                                    std::to_string(input.n) + ", d_L=" + std::to_string(input.dims[L]) +
                                                    ")");
    StieltjesChain chain(input);
    SaddleSolution out;

    TheorySolution sgd = solve_sgd_system(input);
    out.sgd_tau_sq = sgd.tau_sq;
    if (sgd.rank_limited) {
        // features span at most n directions: every interpolant has zero test risk
        out.converged = true;
        return out;
    }

    const double k = mirror.d2f(a0);
    if (!(k > 0.0) || !std::isfinite(k)) throw Error(ErrorCode::DomainViolation, "mirror curvature at a0 must be positive");
    const MirrorMap quad = scaled_quadratic(k);
    const int newton_iters = std::max(20, opt.max_outer);
    const double gtol = 1e-12;

    // quadratic stage: multistart around the SGD risk; duals scale with the curvature k
    NewtonOut best{{0, 0, 0, 0}, std::numeric_limits<double>::infinity(), 0, false};
    const double t0 = std::sqrt(sgd.tau_sq);
    const double scales[] = {1.0, 3.0, 0.3, 10.0, 0.1};
    for (double bs : scales) {
        for (double ms : scales) {
            V4 v0{t0, bs * k, ms * k, 0.5};
            NewtonOut r = saddle_newton(input, chain, quad, a0, v0, opt.nodes, newton_iters, gtol);
            if (r.gnorm < best.gnorm) best = r;
            if (r.ok) break;
        }
        if (best.ok) break;
    }
    if (!best.ok) {
        std::ostringstream os;
        os << "quadratic stage did not converge, scaled gradient " << best.gnorm;
        throw Error(ErrorCode::NoConvergence, os.str());
    }
    int total_iters = best.iters;
    V4 v = best.v;
    const bool is_quadratic = mirror.name == "squared_l2" || mirror.name == "quadratic";
    MirrorMap target = mirror;
    if (!is_quadratic) {
        // homotopy theta: 0 -> 1 on theta * psi + (1 - theta) * quad, halving the step on failure
        double theta = 0.0;
        double dtheta = 1.0 / std::max(1, opt.homotopy_steps);
        while (theta < 1.0) {
            const double next = std::min(1.0, theta + dtheta);
            MirrorMap mix = next >= 1.0 ? mirror : blend(mirror, quad, next);
            NewtonOut r = saddle_newton(input, chain, mix, a0, v, opt.nodes, newton_iters, gtol);
            total_iters += r.iters;
            if (r.ok) {
                v = r.v;
                theta = next;
                dtheta = std::min(2.0 * dtheta, 0.25);
            } else {
                dtheta *= 0.5;
                if (dtheta < 1e-4) {
                    std::ostringstream os;
                    os << "homotopy stalled at theta=" << theta << ", scaled gradient " << r.gnorm;
                    throw Error(ErrorCode::NoConvergence, os.str());
                }
            }
        }
    }
    const SaddleEval e = saddle_objective(input, chain, target, a0, v.data(), opt.nodes);
    out.t = v[0];
    out.beta = v[1];
    out.mu = v[2];
    out.tau_prime = v[3];
    out.tau_sq = v[0] * v[0];
    out.value = e.value;
    out.gamma = e.gamma;
    out.sigma_z_sq = e.sigma_z_sq;
    out.omega_sq = 2.0 * e.w_gamma;
    out.iterations = total_iters;
    out.residual = fd_stationarity(input, chain, target, a0, v, opt.nodes);
    out.converged = out.residual <= opt.tol;
    return out;
}

double sigma_min_diagnostic(const Mat& Phi) {
    const double D = static_cast<double>(Phi.cols());
    Eigen::MatrixXd G = Phi * Phi.transpose() / D;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success) return 0.0;
    const auto& dv = ldlt.vectorD();
    if (dv.minCoeff() <= 0.0) return 0.0;
    const Eigen::Index n = G.rows();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
    double lam = 0.0;
    for (int it = 0; it < 500; ++it) {
        Eigen::VectorXd w = ldlt.solve(v);
        const double nw = w.norm();
        if (!std::isfinite(nw) || nw == 0.0) return 0.0;
        const double l = 1.0 / nw;
        v = w / nw;
        if (std::abs(l - lam) <= 1e-13 * l) {
            lam = l;
            break;
        }
        lam = l;
    }
    return lam;
}

}  // namespace rfq
