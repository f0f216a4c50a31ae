#include "rfq/interpolate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rfq {

double MirrorMap::potential(const Vec& w) const {
    double s = 0.0;
    for (double x : w) s += f(x);
    return s;
}

Vec MirrorMap::gradient(const Vec& w) const { return w.unaryExpr([this](double x) { return df(x); }); }

Vec MirrorMap::inverse_gradient(const Vec& v) const { return v.unaryExpr([this](double x) { return inv_df(x); }); }

double MirrorMap::bregman(const Vec& a, const Vec& a0) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) s += f(a[i]) - f(a0[i]) - df(a0[i]) * (a[i] - a0[i]);
    return s;
}

double MirrorMap::prox(double c, double v) const {
    // g is strictly increasing; on the positive orthant we solve in t = log x.
    const bool logspace = domain == MirrorDomain::PositiveOrthant;
    auto x_of = [&](double t) { return logspace ? std::exp(t) : t; };
    const bool has_log = logspace && df_log && xd2f_log;
    auto g = [&](double t) {
        double x = x_of(t);
        return (has_log ? df_log(t) : df(x)) + (x - v) / c;
    };
    auto dg = [&](double t) {
        double x = x_of(t);
        if (has_log) return xd2f_log(t) + x / c;
        double d = d2f(x) + 1.0 / c;
        return logspace ? d * x : d;
    };

    double t = logspace ? (v > 0.0 ? std::log(v) : 0.0) : v;
    double lo = t, hi = t;
    double glo = g(lo), ghi = glo;
    if (glo == 0.0) return x_of(t);
    double width = logspace ? 1.0 : std::max(1.0, std::abs(v));
    if (glo > 0.0) {
        while (glo > 0.0) {
            hi = lo;
            ghi = glo;
            lo -= width;
            width *= 2.0;
            glo = g(lo);
        }
    } else {
        while (ghi < 0.0) {
            lo = hi;
            glo = ghi;
            hi += width;
            width *= 2.0;
            ghi = g(hi);
        }
    }
    t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double gt = g(t);
        if (gt == 0.0) break;
        if (gt < 0.0)
            lo = t;
        else
            hi = t;
        double step = gt / dg(t);
        double tn = t - step;
        if (!(tn > lo && tn < hi) || !std::isfinite(tn)) tn = 0.5 * (lo + hi);
        if (std::abs(tn - t) <= 1e-16 * std::max(1.0, std::abs(t)) || hi - lo <= 1e-16 * std::max(1.0, std::abs(t))) {
            t = tn;
            break;
        }
        t = tn;
    }
    return x_of(t);
}

MirrorMap squared_l2() {
    MirrorMap m;
    m.name = "squared_l2";
    m.domain = MirrorDomain::AllReals;
    m.f = [](double x) { return 0.5 * x * x; };
    m.df = [](double x) { return x; };
    m.inv_df = [](double v) { return v; };
    m.d2f = [](double) { return 1.0; };
    m.strong_convexity = 1.0;
    return m;
}

MirrorMap neg_entropy() {
    MirrorMap m;
    m.name = "neg_entropy";
    m.domain = MirrorDomain::PositiveOrthant;
    m.f = [](double x) { return x > 0.0 ? x * std::log(x) : (x == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()); };
    m.df = [](double x) { return std::log(x) + 1.0; };
    m.inv_df = [](double v) { return std::exp(v - 1.0); };
    m.d2f = [](double x) { return 1.0 / x; };
    m.df_log = [](double t) { return t + 1.0; };
    m.xd2f_log = [](double) { return 1.0; };
    // 1/max(w) on a bounded region; no global constant
    m.strong_convexity = 0.0;
    return m;
}

MirrorMap scaled_quadratic(double k) {
    MirrorMap m;
    m.name = "quadratic";
    m.domain = MirrorDomain::AllReals;
    m.f = [k](double x) { return 0.5 * k * x * x; };
    m.df = [k](double x) { return k * x; };
    m.inv_df = [k](double v) { return v / k; };
    m.d2f = [k](double) { return k; };
    m.strong_convexity = k;
    return m;
}

MirrorMap zero_mirror() {
    MirrorMap m;
    m.name = "zero";
    m.domain = MirrorDomain::AllReals;
    m.f = [](double) { return 0.0; };
    m.df = [](double) { return 0.0; };
    m.inv_df = [](double) { return std::numeric_limits<double>::quiet_NaN(); };
    m.d2f = [](double) { return 0.0; };
    m.strong_convexity = 0.0;
    return m;
}

MirrorMap blend(const MirrorMap& a, const MirrorMap& b, double theta) {
    MirrorMap m;
    m.name = "blend";
    m.domain = (a.domain == MirrorDomain::PositiveOrthant || b.domain == MirrorDomain::PositiveOrthant)
                   ? MirrorDomain::PositiveOrthant
                   : MirrorDomain::AllReals;
    const double u = 1.0 - theta;
    m.f = [a, b, theta, u](double x) { return theta * a.f(x) + u * b.f(x); };
    m.df = [a, b, theta, u](double x) { return theta * a.df(x) + u * b.df(x); };
    m.d2f = [a, b, theta, u](double x) { return theta * a.d2f(x) + u * b.d2f(x); };
    m.inv_df = [m](double v) {
        // root of df(x) = v; df is increasing
        MirrorMap z = m;
        z.df = [m, v](double x) { return m.df(x) - v; };
        return z.prox(1e300, 0.0);
    };
    m.strong_convexity = theta * a.strong_convexity + u * b.strong_convexity;
    if (m.domain == MirrorDomain::PositiveOrthant) {
        auto dfl = [](const MirrorMap& q) -> std::function<double(double)> {
            if (q.df_log) return q.df_log;
            return [q](double t) { return q.df(std::exp(t)); };
        };
        auto xdl = [](const MirrorMap& q) -> std::function<double(double)> {
            if (q.xd2f_log) return q.xd2f_log;
            return [q](double t) {
                const double x = std::exp(t);
                return x * q.d2f(x);
            };
        };
        m.df_log = [fa = dfl(a), fb = dfl(b), theta, u](double t) { return theta * fa(t) + u * fb(t); };
        m.xd2f_log = [fa = xdl(a), fb = xdl(b), theta, u](double t) { return theta * fa(t) + u * fb(t); };
    }
    return m;
}

std::map<std::string, MirrorMap> mirror_library() {
    return {{"squared_l2", squared_l2()}, {"neg_entropy", neg_entropy()}};
}

MirrorMap get_mirror(const std::string& name) {
    if (name == "squared_l2" || name == "sgd" || name == "l2") return squared_l2();
    if (name == "neg_entropy" || name == "entropy") return neg_entropy();
    throw Error(ErrorCode::InvalidConfig, "unknown mirror '" + name + "'");
}

namespace {

Eigen::LLT<Eigen::MatrixXd> gram_factor(const Mat& Phi) {
    Eigen::MatrixXd G = Phi * Phi.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::SingularGram, "Gram matrix is not numerically positive definite");
    double rc = llt.rcond();
    if (!(rc > 1e-15)) {
        std::ostringstream os;
        os << "Gram matrix reciprocal condition " << rc;
        throw Error(ErrorCode::SingularGram, os.str());
    }
    return llt;
}

void check_fit_shapes(const Mat& Phi, Eigen::Index rows) {
    if (Phi.rows() == 0 || Phi.cols() == 0) throw Error(ErrorCode::ShapeMismatch, "empty feature matrix");
    if (rows != Phi.rows())
        throw Error(ErrorCode::ShapeMismatch, "targets have " + std::to_string(rows) + " rows, features " +
                                                  std::to_string(Phi.rows()));
    if (Phi.rows() > Phi.cols())
        throw Error(ErrorCode::ShapeMismatch, "interpolation needs n <= D (n=" + std::to_string(Phi.rows()) +
                                                  ", D=" + std::to_string(Phi.cols()) + ")");
}

}  // namespace

InterpolationResult min_norm_fit(const Mat& Phi, const Vec& y, const Vec& a0_in) {
    check_fit_shapes(Phi, y.size());
    Vec a0 = a0_in.size() == 0 ? Vec::Zero(Phi.cols()) : a0_in;
    if (a0.size() != Phi.cols()) throw Error(ErrorCode::ShapeMismatch, "a0 length does not match feature count");
    auto llt = gram_factor(Phi);
    InterpolationResult res;
    res.dual = llt.solve(y - Phi * a0);
    res.a = a0 + Phi.transpose() * res.dual;
    res.residual_inf = (Phi * res.a - y).lpNorm<Eigen::Infinity>();
    res.iterations = 1;
    return res;
}

MultiInterpolationResult min_norm_fit(const Mat& Phi, const Mat& Y) {
    check_fit_shapes(Phi, Y.rows());
    auto llt = gram_factor(Phi);
    MultiInterpolationResult res;
    res.dual = llt.solve(Eigen::MatrixXd(Y));
    res.A = Phi.transpose() * res.dual;
    res.residual_inf = (Phi * res.A - Y).lpNorm<Eigen::Infinity>();
    return res;
}

double row_space_residual(const Mat& Phi, const Vec& v) {
    auto llt = gram_factor(Phi);
    Vec coef = llt.solve(Phi * v);
    return (v - Phi.transpose() * coef).norm();
}

InterpolationResult bregman_fit(const Mat& Phi, const Vec& y, const MirrorMap& mirror, const Vec& a0, double tol,
                                int max_iter) {
    check_fit_shapes(Phi, y.size());
    if (a0.size() != Phi.cols()) throw Error(ErrorCode::ShapeMismatch, "a0 length does not match feature count");
    for (double v : a0)
        if (!mirror.in_domain(v)) throw Error(ErrorCode::DomainViolation, "a0 outside the mirror domain");

    const Vec g0 = mirror.gradient(a0);
    Vec lambda = Vec::Zero(Phi.rows());
    Vec a = a0;
    Vec r = Phi * a - y;
    double rn2 = r.squaredNorm();
    bool domain_trouble = false;

    auto eval = [&](const Vec& lam, Vec& a_out, Vec& r_out) {
        a_out = mirror.inverse_gradient(g0 + Phi.transpose() * lam);
        for (double v : a_out)
            if (!std::isfinite(v) || !mirror.in_domain(v)) return false;
        r_out = Phi * a_out - y;
        return r_out.allFinite();
    };

    InterpolationResult res;
    for (int it = 0; it <= max_iter; ++it) {
        double rinf = r.lpNorm<Eigen::Infinity>();
        if (rinf <= tol) {
            res.a = a;
            res.dual = lambda;
            res.residual_inf = rinf;
            res.iterations = it;
            return res;
        }
        if (it == max_iter) break;

        Vec h = a.unaryExpr([&](double x) { return 1.0 / mirror.d2f(x); });
        Eigen::MatrixXd J = Phi * h.asDiagonal() * Phi.transpose();
        Eigen::LLT<Eigen::MatrixXd> llt(J);
        if (llt.info() != Eigen::Success)
            throw Error(ErrorCode::SingularGram, "dual Newton Jacobian is not positive definite");
        Vec step = -llt.solve(r);

        double s = 1.0;
        Vec a_new, r_new;
        bool accepted = false;
        while (s > 1e-14) {
            Vec lam_new = lambda + s * step;
            if (eval(lam_new, a_new, r_new)) {
                double nn = r_new.squaredNorm();
                if (nn <= (1.0 - 1e-4 * s) * rn2) {
                    lambda = lam_new;
                    accepted = true;
                    break;
                }
            } else {
                domain_trouble = true;
            }
            s *= 0.5;
        }
        if (!accepted) {
            std::ostringstream os;
            os << "line search stalled at iteration " << it << ", best residual " << rinf;
            throw Error(domain_trouble ? ErrorCode::DomainViolation : ErrorCode::NoConvergence, os.str());
        }
        a = std::move(a_new);
        r = std::move(r_new);
        rn2 = r.squaredNorm();
    }
    std::ostringstream os;
    os << "max_iter=" << max_iter << ", best residual " << r.lpNorm<Eigen::Infinity>();
    throw Error(ErrorCode::NoConvergence, os.str());
}

double Loss::derivative(double r) const {
    if (kind == Squared) return r;
    return std::clamp(r, -delta, delta);
}

InterpolationResult smd_train(const Mat& Phi, const Vec& y, const Loss& loss, const MirrorMap& mirror,
                              const Vec& a0, double step, int max_epochs, double tol) {
    check_fit_shapes(Phi, y.size());
    if (a0.size() != Phi.cols()) throw Error(ErrorCode::ShapeMismatch, "a0 length does not match feature count");
    Vec z = mirror.gradient(a0);
    Vec a = a0;
    Vec lambda = Vec::Zero(Phi.rows());
    Vec r = Phi * a - y;
    const double r0 = std::max(r.lpNorm<Eigen::Infinity>(), std::numeric_limits<double>::min());
    InterpolationResult res;
    for (int ep = 0; ep <= max_epochs; ++ep) {
        double rinf = r.lpNorm<Eigen::Infinity>();
        if (rinf <= tol) {
            res.a = a;
            res.dual = lambda;
            res.residual_inf = rinf;
            res.iterations = ep;
            return res;
        }
        if (!std::isfinite(rinf) || rinf > 1e6 * r0) {
            std::ostringstream os;
            os << "residual grew to " << rinf << " at epoch " << ep;
            throw Error(ErrorCode::Divergence, os.str());
        }
        if (ep == max_epochs) break;
        Vec lp = r.unaryExpr([&](double v) { return loss.derivative(v); });
        lambda -= step * lp;
        z -= step * (Phi.transpose() * lp);
        a = mirror.inverse_gradient(z);
        r = Phi * a - y;
    }
    std::ostringstream os;
    os << "max_epochs=" << max_epochs << ", residual " << r.lpNorm<Eigen::Infinity>();
    throw Error(ErrorCode::NoConvergence, os.str());
}

}  // namespace rfq
