#pragma once

#include "rfq/common.hpp"
#include "rfq/rf_model.hpp"

#include <cstdint>
#include <vector>

namespace rfq {

// Probabilists' Gauss-Hermite rule normalized to a probability measure:
// sum_k w_k f(x_k) ~ E f(z), z ~ N(0,1).
struct GaussHermite {
    std::vector<double> x;
    std::vector<double> w;
};
const GaussHermite& gauss_hermite(int nodes);

struct Moments {
    double m1 = 0.0;  // E[z phi(z)]
    double m2 = 0.0;  // E[phi(z)^2]
};

struct RhoCoeffs {
    double rho1 = 0.0;
    double rho2_sq = 0.0;
};

Moments activation_moments(const ActivationKind& kind, double sigma_sq, int nodes = 200);
RhoCoeffs rho_coeffs(const ActivationKind& kind, double sigma_sq, int nodes = 200);

struct Sigma0Spec {
    enum Kind { IsotropicOverD, DiagonalSpectrum, ExplicitMatrix } kind = IsotropicOverD;
    std::size_t d = 0;
    std::vector<double> eigs;  // DiagonalSpectrum
    Mat matrix;                // ExplicitMatrix

    static Sigma0Spec isotropic(std::size_t d);
    static Sigma0Spec diagonal(std::vector<double> eigs);
    static Sigma0Spec explicit_matrix(Mat S);

    std::size_t dim() const;
    double trace() const;
    std::vector<double> eigenvalues() const;
    Mat dense() const;
    // rows ~ N(0, Sigma0)
    Mat sample(std::size_t n, std::uint64_t seed) const;
};

// Layer-indexed: sigma_sq[l] for l = 0..L; rho1[l], rho2_sq[l] for layer l = 1..L (index 0 unused).
struct GepState {
    std::vector<double> sigma_sq;
    std::vector<double> rho1;
    std::vector<double> rho2_sq;
    std::vector<Mat> cov;  // cov[l] materialized or empty

    std::size_t depth() const { return sigma_sq.size() - 1; }
};

struct GepOptions {
    int nodes = 200;
    bool keep_all = false;   // keep every Sigma_l
    bool keep_last = false;  // materialize Sigma_L (otherwise only its trace)
};

GepState gep_recursion(const Sigma0Spec& sigma0, const RFNetwork& net, const GepOptions& opt = {});

// sigma^2 chain and rho coefficients under the large-width trace limit
// sigma_l^2 = rho1^2 sigma_{l-1}^2 + rho2^2, with no network.
GepState gep_asymptotic(double sigma0_sq, std::size_t L, const ActivationKind& kind, int nodes = 200);

Mat sample_equivalent_gaussian(const GepState& state, const RFNetwork& net, const Sigma0Spec& sigma0,
                               std::size_t layer, std::size_t n, std::uint64_t seed);

// (1/n_mc) sum x^(L) x^(L)^T over x ~ N(0, Sigma0), in seeded blocks of 1024 rows.
Mat mc_covariance(const RFNetwork& net, const Sigma0Spec& sigma0, std::size_t n_mc, std::uint64_t seed);

// Same estimand with the linear proxy l(x) = (prod rho1) W_L...W_1 x as control variate:
// (1/n_mc) sum (x x^T - l l^T) + E[l l^T]. Unbiased; uses the rho1 of `state`.
Mat mc_covariance_cv(const RFNetwork& net, const Sigma0Spec& sigma0, const GepState& state, std::size_t n_mc,
                     std::uint64_t seed);

double op_norm_diff(const Mat& A, const Mat& B, int iters = 1000);

constexpr std::size_t kMcBlock = 1024;

}  // namespace rfq
