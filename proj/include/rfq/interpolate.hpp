#pragma once

#include "rfq/common.hpp"

#include <functional>
#include <map>
#include <string>

namespace rfq {

enum class MirrorDomain { AllReals, PositiveOrthant };

// Separable potential psi(w) = sum_i f(w_i); all callables act on one coordinate.
struct MirrorMap {
    std::string name;
    MirrorDomain domain = MirrorDomain::AllReals;
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::function<double(double)> inv_df;
    std::function<double(double)> d2f;
    double strong_convexity = 1.0;  // global M; 0 when only local
    // Optional, positive orthant only: df(e^t) and x d2f(x) at x = e^t, for prox solves
    // whose root lies below the smallest double.
    std::function<double(double)> df_log;
    std::function<double(double)> xd2f_log;

    bool in_domain(double x) const { return domain == MirrorDomain::AllReals || x > 0.0; }

    double potential(const Vec& w) const;
    Vec gradient(const Vec& w) const;
    Vec inverse_gradient(const Vec& v) const;
    double bregman(const Vec& a, const Vec& a0) const;

    // argmin_x f(x) + (x - v)^2 / (2c), by safeguarded Newton.
    double prox(double c, double v) const;
};

MirrorMap squared_l2();
MirrorMap neg_entropy();
// psi = (k/2) x^2
MirrorMap scaled_quadratic(double k);
// psi = 0 (not strictly convex; only meaningful inside a prox)
MirrorMap zero_mirror();
// theta * a + (1 - theta) * b on the intersection of the domains
MirrorMap blend(const MirrorMap& a, const MirrorMap& b, double theta);

std::map<std::string, MirrorMap> mirror_library();
MirrorMap get_mirror(const std::string& name);

struct InterpolationResult {
    Vec a;
    double residual_inf = 0.0;
    Vec dual;
    int iterations = 0;
};

struct MultiInterpolationResult {
    Mat A;
    double residual_inf = 0.0;
    Mat dual;
};

InterpolationResult min_norm_fit(const Mat& Phi, const Vec& y, const Vec& a0 = Vec());
MultiInterpolationResult min_norm_fit(const Mat& Phi, const Mat& Y);

// ||(I - P_row(Phi)) v||_2
double row_space_residual(const Mat& Phi, const Vec& v);

InterpolationResult bregman_fit(const Mat& Phi, const Vec& y, const MirrorMap& mirror, const Vec& a0,
                                double tol = 1e-10, int max_iter = 100);

struct Loss {
    enum Kind { Squared, Huber } kind = Squared;
    double delta = 1.0;
    double derivative(double r) const;
};

InterpolationResult smd_train(const Mat& Phi, const Vec& y, const Loss& loss, const MirrorMap& mirror,
                              const Vec& a0, double step, int max_epochs, double tol);

}  // namespace rfq
