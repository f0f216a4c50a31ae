#pragma once

#include "rfq/common.hpp"
#include "rfq/gep.hpp"
#include "rfq/interpolate.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace rfq {

// Layer quantities are indexed by layer: rho1[l], rho2_sq[l] for l = 1..L (index 0 unused),
// matching GepState.
struct TheoryInput {
    std::vector<std::size_t> dims;  // d_0..d_L
    std::size_t n = 0;
    std::vector<double> sigma0_eigs;
    std::vector<double> rho1;
    std::vector<double> rho2_sq;

    std::size_t depth() const { return dims.size() - 1; }
};

TheoryInput make_theory_input(const std::vector<std::size_t>& dims, std::size_t n, std::vector<double> sigma0_eigs,
                              const GepState& state);

// Normalized resolvent traces of the GEP covariance Sigma_l at z = -u (u > 0):
//   m = (1/d_l) tr (Sigma_l + u)^-1,  eta = (1/d_l) tr Sigma_l (Sigma_l + u)^-1 = 1 - u m,
//   D = (1/d_l) tr (Sigma_l + u)^-2 = -dm/du.
// Level 0 uses the Sigma_0 spectrum; level l solves the deterministic equivalent of
// rho1^2 W Sigma_{l-1} W^T + rho2^2 I with W having i.i.d. entries of variance 1/d_{l-1}.
class StieltjesChain {
public:
    struct Point {
        double m = 0.0;
        double eta = 0.0;
        double D = 0.0;
    };

    explicit StieltjesChain(const TheoryInput& in);

    Point eval(std::size_t level, double u) const;
    // lim_{u->0} eta: the asymptotic rank fraction of Sigma_l
    double rank_fraction(std::size_t level) const;
    std::size_t depth() const { return dims_.size() - 1; }

    // Evaluation points reached by the nested solve started at (level, u):
    // us[k], pts[k] for k = 0..level.
    void trace(std::size_t level, double u, std::vector<double>& us, std::vector<Point>& pts) const;

private:
    double solve_level(std::size_t level, double up, double* h_out, double* dh_out, double* fprime_out) const;

    std::vector<std::size_t> dims_;
    std::vector<double> rho1_sq_;
    std::vector<double> rho2_sq_;
    std::vector<std::pair<double, double>> base_;  // (eigenvalue, weight)
};

struct TheorySolution {
    std::vector<double> u;           // evaluation point per level 0..L
    std::vector<double> zeta;        // m_l(-u_l)
    std::vector<double> zeta_prime;  // D_l(u_l)
    std::vector<double> eta;         // eta_l(u_l)
    double theta = 0.0;              // kappa: eta_L(kappa) = n/d_L
    double tau_sq = 0.0;
    double residual = 0.0;
    bool converged = false;
    bool rank_limited = false;       // GEP covariance rank <= n: exact recovery, tau_sq = 0
    int iterations = 0;
};

TheorySolution solve_sgd_system(const TheoryInput& input, double tol = 1e-13, int max_iter = 200);

// Independent re-evaluation of every equation at a returned solution; max absolute residual.
double sgd_residual(const TheoryInput& input, const TheorySolution& sol);

struct MoreauResult {
    double value = 0.0;
    double prox = 0.0;
};

// min_x (v - x)^2 / (2c) + psi(x)
MoreauResult moreau_envelope(const MirrorMap& mirror, double c, double v);

// E M_{psi;c}(a - psi'(a0) - c z), a ~ N(0, astar_var), z ~ N(0, z_var), by tensor Gauss-Hermite.
double expected_moreau(const MirrorMap& mirror, double c, double z_var, double astar_var, double a0_scalar,
                       int nodes = 40);

// Scalarized last-layer problem min_a D_psi(a, a0) s.t. Phi a = Phi a* under Gaussian features.
// Variables: t (= sqrt of the test risk), beta, mu, tau_prime.
struct SaddleSolution {
    double t = 0.0;
    double beta = 0.0;
    double mu = 0.0;
    double tau_prime = 0.0;
    double tau_sq = 0.0;
    double value = 0.0;
    double gamma = 0.0;       // curvature of the separable quadratic term
    double sigma_z_sq = 0.0;  // variance of the separable Gaussian term
    double omega_sq = 0.0;    // ||a - a*||^2
    double sgd_tau_sq = 0.0;  // reference value from solve_sgd_system
    double residual = 0.0;    // finite-difference stationarity residual
    bool converged = false;
    int iterations = 0;
};

struct SaddleOptions {
    double tol = 1e-7;
    int max_outer = 100;
    int nodes = 40;
    int homotopy_steps = 10;
};

SaddleSolution solve_mirror_saddle(const TheoryInput& input, const MirrorMap& mirror, double a0_scalar,
                                   const SaddleOptions& opt = {});

// Objective value and analytic gradient in (t, beta, mu, tau_prime); exposed for testing.
struct SaddleEval {
    double value = 0.0;
    double grad[4] = {0, 0, 0, 0};
    double gamma = 0.0;
    double sigma_z_sq = 0.0;
    double w_gamma = 0.0;
};
SaddleEval saddle_objective(const TheoryInput& input, const StieltjesChain& chain, const MirrorMap& mirror,
                            double a0_scalar, const double v[4], int nodes);

// Smallest eigenvalue of Phi Phi^T / D by inverse iteration; 0 if singular.
double sigma_min_diagnostic(const Mat& Phi);

}  // namespace rfq
