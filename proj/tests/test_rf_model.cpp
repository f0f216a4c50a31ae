#include "rfq/rf_model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace rfq;

namespace {

RFNetwork single_layer(const Mat& W, Activation a) {
    RFNetwork net;
    net.layers.push_back(WeightLayer{W, static_cast<std::size_t>(W.cols()), static_cast<std::size_t>(W.rows())});
    net.activation = make_activation(a);
    net.dims = {static_cast<std::size_t>(W.cols()), static_cast<std::size_t>(W.rows())};
    return net;
}

}  // namespace

TEST_CASE("activation flags and oddness") {
    CHECK(make_activation(Activation::Identity).odd);
    CHECK(make_activation(Activation::Tanh).odd);
    CHECK(make_activation(Activation::ScaledErf).odd);
    CHECK_FALSE(make_activation(Activation::Relu).odd);
    for (Activation a : {Activation::Identity, Activation::Tanh, Activation::ScaledErf}) {
        ActivationKind k = make_activation(a);
        CHECK(k.lipschitz <= 1.0);
        for (double z = -6.0; z <= 6.0; z += 0.37) CHECK(k(-z) == -k(z));
    }
    CHECK(make_activation(Activation::ScaledErf).lipschitz == doctest::Approx(std::sqrt(2.0 / M_PI)));
    CHECK(parse_activation("tanh").variant == Activation::Tanh);
    CHECK_THROWS_AS(parse_activation("sigmoid"), Error);
}

TEST_CASE("build_network laws and errors") {
    RFNetwork r = build_network({2, 2}, make_activation(Activation::Tanh), WeightKind::Rademacher, 5);
    Mat D = r.layers[0].dense();
    for (Eigen::Index i = 0; i < D.size(); ++i) CHECK(std::abs(D.data()[i]) == doctest::Approx(0.7071067811865475));

    RFNetwork g1 = build_network({300, 200}, make_activation(Activation::Tanh), WeightKind::Gaussian, 9);
    RFNetwork g2 = build_network({300, 200}, make_activation(Activation::Tanh), WeightKind::Gaussian, 9);
    RFNetwork g3 = build_network({300, 200}, make_activation(Activation::Tanh), WeightKind::Gaussian, 10);
    CHECK(g1.layers[0].dense() == g2.layers[0].dense());
    CHECK(g1.layers[0].dense() != g3.layers[0].dense());

    CHECK_THROWS_AS(build_network({5}, make_activation(Activation::Tanh), WeightKind::Gaussian, 1), Error);
    CHECK_THROWS_AS(build_network({5, 0}, make_activation(Activation::Tanh), WeightKind::Gaussian, 1), Error);
    CHECK_THROWS_AS(build_network({5, 3}, make_activation(Activation::Relu), WeightKind::Gaussian, 1), Error);
    CHECK_NOTHROW(build_network({5, 3}, make_activation(Activation::Relu), WeightKind::Gaussian, 1, true));
}

TEST_CASE("second moments match 1/d_in for both kinds") {
    RFNetwork g = build_network({4096, 4096}, make_activation(Activation::Tanh), WeightKind::Gaussian, 3);
    const Mat W = g.layers[0].dense();
    const double var = W.squaredNorm() / static_cast<double>(W.size());
    CHECK(std::abs(var * 4096 - 1.0) < 0.05);
    RFNetwork q = quantize(g);
    const Mat Q = q.layers[0].dense();
    CHECK(Q.squaredNorm() / static_cast<double>(Q.size()) == doctest::Approx(1.0 / 4096).epsilon(1e-12));
}

TEST_CASE("Rademacher network is the sign of the Gaussian one") {
    auto act = make_activation(Activation::Tanh);
    RFNetwork g = build_network({100, 80, 60}, act, WeightKind::Gaussian, 17);
    RFNetwork r = build_network({100, 80, 60}, act, WeightKind::Rademacher, 17);
    RFNetwork q = quantize(g);
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK(r.layers[l].packed());
        CHECK(r.layers[l].dense() == q.layers[l].dense());
    }
}

TEST_CASE("forward hand examples") {
    Vec x(2);
    x << 3, -1;
    Mat X = x.transpose();
    RFNetwork id = single_layer(Mat::Identity(2, 2), Activation::Identity);
    CHECK((forward(id, X).row(0).transpose() - x).norm() == 0.0);
    Vec a(2);
    a << 1, 1;
    CHECK(predict(id, a, X)[0] == doctest::Approx(2.0));
    CHECK(predict(id, Vec(Vec::Zero(2)), X).isZero(0.0));

    Mat W(2, 2);
    W << 1, 1, 1, -1;
    W /= std::sqrt(2.0);
    RFNetwork t = single_layer(W, Activation::Tanh);
    Mat X2(1, 2);
    X2 << 1, 0;
    Mat Y = forward(t, X2);
    CHECK(Y(0, 0) == doctest::Approx(0.60885).epsilon(1e-5));
    CHECK(Y(0, 1) == doctest::Approx(0.60885).epsilon(1e-5));
    CHECK_THROWS_AS(forward(t, Mat::Zero(1, 3)), Error);
}

TEST_CASE("packed forward equals dense sign forward on random inputs") {
    auto act = make_activation(Activation::Tanh);
    RFNetwork q = build_network({130, 65, 40}, act, WeightKind::Rademacher, 2);
    RFNetwork dq = densify(q);
    CHECK_FALSE(dq.layers[0].packed());
    std::mt19937_64 g(4);
    std::normal_distribution<double> nd;
    Mat X(100, 130);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = nd(g) / std::sqrt(130.0);
    CHECK((forward(q, X) - forward(dq, X)).cwiseAbs().maxCoeff() <= 1e-10 * 130);
}

TEST_CASE("forward_trace, truncate and labels") {
    auto act = make_activation(Activation::ScaledErf);
    RFNetwork net = build_network({50, 40, 30, 20}, act, WeightKind::Gaussian, 8);
    Mat X = Mat::Random(7, 50);
    auto tr = forward_trace(net, X);
    REQUIRE(tr.size() == 3);
    CHECK(tr[2] == forward(net, X));
    CHECK(tr[1] == forward(truncate(net, 2), X));
    CHECK_THROWS_AS(truncate(net, 4), Error);
    CHECK_THROWS_AS(truncate(net, 0), Error);

    Vec a_star = sample_ground_truth(20, 3);
    CHECK(a_star == sample_ground_truth(20, 3));
    CHECK(make_labels(net, a_star, X) == predict(net, a_star, X));
    CHECK(make_labels(net, Vec::Zero(20), X).isZero(0.0));
    CHECK_THROWS_AS(predict(net, Vec(Vec::Zero(19)), X), Error);

    RFNetwork id = single_layer(Mat::Identity(3, 3), Activation::Identity);
    Mat Xi = Mat::Random(4, 3);
    Vec e1 = Vec::Zero(3);
    e1[0] = 1;
    CHECK((make_labels(id, e1, Xi) - Xi.col(0)).norm() == 0.0);
}
