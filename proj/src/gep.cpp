#include "rfq/gep.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <tuple>

namespace rfq {

namespace {

GaussHermite build_gauss_hermite(int n) {
    // Golub-Welsch on the Jacobi matrix of He_k, then Newton polish with the
    // orthonormal three-term recurrence.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussHermite gh;
    gh.x.resize(n);
    gh.w.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = es.eigenvalues()[i];
        double sum_sq = 0.0;
        int rescales = 0;  // sum_sq is stored divided by 1e300^rescales
        for (int it = 0; it < 4; ++it) {
            double p0 = 1.0, p1 = x;  // orthonormal psi_0, psi_1
            sum_sq = 1.0 + x * x;
            rescales = 0;
            for (int k = 1; k < n - 1; ++k) {
                double p2 = (x * p1 - std::sqrt(static_cast<double>(k)) * p0) / std::sqrt(static_cast<double>(k + 1));
                p0 = p1;
                p1 = p2;
                sum_sq += p1 * p1;
                if (sum_sq > 1e300) {
                    p0 *= 1e-150;
                    p1 *= 1e-150;
                    sum_sq *= 1e-300;
                    ++rescales;
                }
            }
            // p1 = psi_{n-1}; psi_n and its derivative sqrt(n) psi_{n-1}
            double pn = (x * p1 - std::sqrt(static_cast<double>(n - 1)) * p0) / std::sqrt(static_cast<double>(n));
            double dpn = std::sqrt(static_cast<double>(n)) * p1;
            if (dpn == 0.0) break;
            double dx = pn / dpn;
            x -= dx;
            if (std::abs(dx) < 1e-16 * std::max(1.0, std::abs(x))) break;
        }
        gh.x[i] = x;
        gh.w[i] = rescales > 0 ? 0.0 : 1.0 / sum_sq;
    }
    double tot = 0.0;
    for (double w : gh.w) tot += w;
    for (double& w : gh.w) w /= tot;
    // enforce exact symmetry
    for (int i = 0; i < n / 2; ++i) {
        double xa = 0.5 * (gh.x[n - 1 - i] - gh.x[i]);
        double wa = 0.5 * (gh.w[n - 1 - i] + gh.w[i]);
        gh.x[i] = -xa;
        gh.x[n - 1 - i] = xa;
        gh.w[i] = gh.w[n - 1 - i] = wa;
    }
    if (n % 2 == 1) gh.x[n / 2] = 0.0;
    return gh;
}

std::mutex g_cache_mutex;

}  // namespace

const GaussHermite& gauss_hermite(int nodes) {
    static std::map<int, std::unique_ptr<GaussHermite>> cache;
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    auto it = cache.find(nodes);
    if (it == cache.end()) it = cache.emplace(nodes, std::make_unique<GaussHermite>(build_gauss_hermite(nodes))).first;
    return *it->second;
}

namespace {

struct MomentKey {
    int variant;
    int nodes;
    double s2;
    bool operator<(const MomentKey& o) const {
        return std::tie(variant, nodes, s2) < std::tie(o.variant, o.nodes, o.s2);
    }
};

double round12(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.11e", v);
    return std::strtod(buf, nullptr);
}

struct MomentsFull {
    Moments m;
    double rho2_sq;
};

MomentsFull gh_moments(const ActivationKind& kind, double s2, int nodes) {
    const GaussHermite& gh = gauss_hermite(nodes);
    const double s = std::sqrt(s2);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < gh.x.size(); ++k) {
        double z = s * gh.x[k];
        double f = kind(z);
        m1 += gh.w[k] * z * f;
        m2 += gh.w[k] * f * f;
    }
    double rho1 = m1 / s2;
    // E[(phi(z) - rho1 z)^2], the same remainder without the cancellation in m2 - s2 rho1^2
    double r2 = 0.0;
    for (std::size_t k = 0; k < gh.x.size(); ++k) {
        double z = s * gh.x[k];
        double e = kind(z) - rho1 * z;
        r2 += gh.w[k] * e * e;
    }
    return {{m1, m2}, r2};
}

// `nodes` is the starting rule. Activations with poles near the real axis (tanh at large
// sigma^2) converge slowly, so the rule is doubled until two successive rules agree.
MomentsFull compute_moments(const ActivationKind& kind, double s2, int nodes) {
    if (kind.variant == Activation::Identity) return {{s2, s2}, 0.0};
    MomentsFull cur = gh_moments(kind, s2, nodes);
    for (int n = 2 * nodes; n <= 1600; n *= 2) {
        MomentsFull next = gh_moments(kind, s2, n);
        const double diff = std::max(std::abs(next.m.m1 - cur.m.m1), std::abs(next.m.m2 - cur.m.m2));
        cur = next;
        if (diff <= 1e-13 * std::max(1.0, std::abs(cur.m.m2))) break;
    }
    return cur;
}

const MomentsFull& cached_moments(const ActivationKind& kind, double sigma_sq, int nodes) {
    if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq))
        throw Error(ErrorCode::NonpositiveVariance, "sigma^2 must be positive, got " + std::to_string(sigma_sq));
    if (nodes < 20) throw Error(ErrorCode::OutOfRange, "Gauss-Hermite needs at least 20 nodes");
    static std::map<MomentKey, MomentsFull> cache;
    static std::mutex mu;
    double s2 = round12(sigma_sq);
    MomentKey key{static_cast<int>(kind.variant), nodes, s2};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    MomentsFull mf = compute_moments(kind, s2, nodes);
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(key, mf).first->second;
}

}  // namespace

Moments activation_moments(const ActivationKind& kind, double sigma_sq, int nodes) {
    return cached_moments(kind, sigma_sq, nodes).m;
}

RhoCoeffs rho_coeffs(const ActivationKind& kind, double sigma_sq, int nodes) {
    const MomentsFull& mf = cached_moments(kind, sigma_sq, nodes);
    RhoCoeffs rc;
    const double s2 = round12(sigma_sq);
    rc.rho1 = mf.m.m1 / s2;
    rc.rho2_sq = mf.rho2_sq;
    if (rc.rho2_sq < 0.0) {
        if (rc.rho2_sq < -1e-12) throw Error(ErrorCode::NonpositiveVariance, "negative variance remainder");
        rc.rho2_sq = 0.0;
    }
    return rc;
}

Sigma0Spec Sigma0Spec::isotropic(std::size_t d) {
    Sigma0Spec s;
    s.kind = IsotropicOverD;
    s.d = d;
    return s;
}

Sigma0Spec Sigma0Spec::diagonal(std::vector<double> eigs) {
    for (double e : eigs)
        if (!(e > 0.0)) throw Error(ErrorCode::NonpositiveVariance, "Sigma0 eigenvalues must be positive");
    Sigma0Spec s;
    s.kind = DiagonalSpectrum;
    s.d = eigs.size();
    s.eigs = std::move(eigs);
    return s;
}

Sigma0Spec Sigma0Spec::explicit_matrix(Mat S) {
    if (S.rows() != S.cols()) throw Error(ErrorCode::ShapeMismatch, "Sigma0 must be square");
    Sigma0Spec s;
    s.kind = ExplicitMatrix;
    s.d = static_cast<std::size_t>(S.rows());
    s.matrix = std::move(S);
    return s;
}

std::size_t Sigma0Spec::dim() const { return d; }

double Sigma0Spec::trace() const {
    switch (kind) {
        case IsotropicOverD: return 1.0;
        case DiagonalSpectrum: {
            double t = 0.0;
            for (double e : eigs) t += e;
            return t;
        }
        case ExplicitMatrix: return matrix.trace();
    }
    return 0.0;
}

std::vector<double> Sigma0Spec::eigenvalues() const {
    switch (kind) {
        case IsotropicOverD: return std::vector<double>(d, 1.0 / static_cast<double>(d));
        case DiagonalSpectrum: return eigs;
        case ExplicitMatrix: {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(matrix), Eigen::EigenvaluesOnly);
            return std::vector<double>(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
        }
    }
    return {};
}

Mat Sigma0Spec::dense() const {
    switch (kind) {
        case IsotropicOverD: return Mat::Identity(d, d) / static_cast<double>(d);
        case DiagonalSpectrum: {
            Mat S = Mat::Zero(d, d);
            for (std::size_t i = 0; i < d; ++i) S(i, i) = eigs[i];
            return S;
        }
        case ExplicitMatrix: return matrix;
    }
    return {};
}

Mat Sigma0Spec::sample(std::size_t n, std::uint64_t seed) const {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat G(n, d);
    for (Eigen::Index k = 0; k < G.size(); ++k) G.data()[k] = nd(gen);
    switch (kind) {
        case IsotropicOverD: G /= std::sqrt(static_cast<double>(d)); break;
        case DiagonalSpectrum:
            for (std::size_t j = 0; j < d; ++j) G.col(j) *= std::sqrt(eigs[j]);
            break;
        case ExplicitMatrix: {
            Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(matrix)};
            if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonpositiveVariance, "Sigma0 is not positive definite");
            Mat L = llt.matrixL();
            G = G * L.transpose();
            break;
        }
    }
    return G;
}

GepState gep_recursion(const Sigma0Spec& sigma0, const RFNetwork& net, const GepOptions& opt) {
    if (!net.activation.odd)
        throw Error(ErrorCode::NonOddActivation, "GEP recursion requires an odd activation, got " +
                                                     activation_name(net.activation.variant));
    if (sigma0.dim() != net.d_in())
        throw Error(ErrorCode::DimMismatch, "Sigma0 has dimension " + std::to_string(sigma0.dim()) +
                                                ", network input " + std::to_string(net.d_in()));
    const std::size_t L = net.depth();
    GepState st;
    st.sigma_sq.assign(L + 1, 0.0);
    st.rho1.assign(L + 1, 0.0);
    st.rho2_sq.assign(L + 1, 0.0);
    st.cov.assign(L + 1, Mat());

    Mat S = sigma0.dense();
    st.sigma_sq[0] = sigma0.trace() / static_cast<double>(sigma0.dim());
    if (opt.keep_all || L == 1) st.cov[0] = S;

    for (std::size_t l = 1; l <= L; ++l) {
        RhoCoeffs rc = rho_coeffs(net.activation, st.sigma_sq[l - 1], opt.nodes);
        st.rho1[l] = rc.rho1;
        st.rho2_sq[l] = rc.rho2_sq;
        const double r1sq = rc.rho1 * rc.rho1;
        const Mat W = net.layers[l - 1].dense();
        const double dl = static_cast<double>(W.rows());
        Mat WS = W * S;
        const bool need = l < L || opt.keep_last || opt.keep_all;
        if (need) {
            Mat Snew(W.rows(), W.rows());
            Snew.noalias() = r1sq * WS * W.transpose();
            Snew.diagonal().array() += rc.rho2_sq;
            Snew = 0.5 * (Snew + Snew.transpose()).eval();
            st.sigma_sq[l] = Snew.trace() / dl;
            S = std::move(Snew);
            if (opt.keep_all || l == L - 1 || (l == L && opt.keep_last)) st.cov[l] = S;
        } else {
            // Tr(W S W^T) = <W S, W>_F
            double tr = (WS.array() * W.array()).sum();
            st.sigma_sq[l] = (r1sq * tr + rc.rho2_sq * dl) / dl;
        }
    }
    return st;
}

GepState gep_asymptotic(double sigma0_sq, std::size_t L, const ActivationKind& kind, int nodes) {
    GepState st;
    st.sigma_sq.assign(L + 1, 0.0);
    st.rho1.assign(L + 1, 0.0);
    st.rho2_sq.assign(L + 1, 0.0);
    st.cov.assign(L + 1, Mat());
    st.sigma_sq[0] = sigma0_sq;
    for (std::size_t l = 1; l <= L; ++l) {
        RhoCoeffs rc = rho_coeffs(kind, st.sigma_sq[l - 1], nodes);
        st.rho1[l] = rc.rho1;
        st.rho2_sq[l] = rc.rho2_sq;
        st.sigma_sq[l] = rc.rho1 * rc.rho1 * st.sigma_sq[l - 1] + rc.rho2_sq;
    }
    return st;
}

Mat sample_equivalent_gaussian(const GepState& state, const RFNetwork& net, const Sigma0Spec& sigma0,
                               std::size_t layer, std::size_t n, std::uint64_t seed) {
    if (layer > net.depth() || layer > state.depth())
        throw Error(ErrorCode::LayerOutOfRange, "layer " + std::to_string(layer) + " of " + std::to_string(net.depth()));
    Mat G = sigma0.sample(n, split_seed(seed, 0));
    for (std::size_t l = 1; l <= layer; ++l) {
        const WeightLayer& W = net.layers[l - 1];
        Mat next = W.apply(G) * state.rho1[l];
        const double r2 = std::sqrt(state.rho2_sq[l]);
        if (r2 > 0.0) {
            std::mt19937_64 gen(split_seed(seed, l));
            std::normal_distribution<double> nd(0.0, 1.0);
            for (Eigen::Index k = 0; k < next.size(); ++k) next.data()[k] += r2 * nd(gen);
        }
        G = std::move(next);
    }
    return G;
}

Mat mc_covariance(const RFNetwork& net, const Sigma0Spec& sigma0, std::size_t n_mc, std::uint64_t seed) {
    const std::size_t dL = net.d_out();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(dL, dL);
    const std::size_t blocks = (n_mc + kMcBlock - 1) / kMcBlock;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t rows = std::min(kMcBlock, n_mc - b * kMcBlock);
        Mat X = sigma0.sample(rows, split_seed(seed, b));
        Mat F = forward(net, X);
        C.noalias() += F.transpose() * F;
    }
    C /= static_cast<double>(n_mc);
    return Mat(0.5 * (C + C.transpose()));
}

Mat mc_covariance_cv(const RFNetwork& net, const Sigma0Spec& sigma0, const GepState& state, std::size_t n_mc,
                     std::uint64_t seed) {
    const std::size_t L = net.depth();
    if (state.depth() != L) throw Error(ErrorCode::DimMismatch, "GEP state depth does not match network");
    double c = 1.0;
    for (std::size_t l = 1; l <= L; ++l) c *= state.rho1[l];

    const std::size_t dL = net.d_out();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(dL, dL);
    const std::size_t blocks = (n_mc + kMcBlock - 1) / kMcBlock;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t rows = std::min(kMcBlock, n_mc - b * kMcBlock);
        Mat X = sigma0.sample(rows, split_seed(seed, b));
        Mat F = forward(net, X);
        Mat Lin = X;
        for (const auto& layer : net.layers) Lin = layer.apply(Lin);
        Lin *= c;
        C.noalias() += F.transpose() * F;
        C.noalias() -= Lin.transpose() * Lin;
    }
    C /= static_cast<double>(n_mc);

    Mat M = sigma0.dense();
    for (const auto& layer : net.layers) {
        Mat W = layer.dense();
        Mat WM = W * M;
        M.resize(W.rows(), W.rows());
        M.noalias() = WM * W.transpose();
    }
    C += c * c * Eigen::MatrixXd(M);
    return Mat(0.5 * (C + C.transpose()));
}

double op_norm_diff(const Mat& A, const Mat& B, int iters) {
    if (A.rows() != B.rows() || A.cols() != B.cols() || A.rows() != A.cols())
        throw Error(ErrorCode::ShapeMismatch, "op_norm_diff needs two square matrices of equal shape");
    const Mat D = A - B;
    const Eigen::Index n = D.rows();
    if (n == 0) return 0.0;
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
    v.normalize();
    double lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        Vec w = D * v;
        double nw = w.norm();
        if (nw == 0.0) return 0.0;
        v = w / nw;
        if (std::abs(nw - lam) <= 1e-15 * nw && it > 10) {
            lam = nw;
            break;
        }
        lam = nw;
    }
    return lam;
}

}  // namespace rfq
