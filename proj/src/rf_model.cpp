#include "rfq/rf_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rfq {

double ActivationKind::operator()(double z) const {
    switch (variant) {
        case Activation::Identity: return z;
        case Activation::Tanh: return std::tanh(z);
        case Activation::ScaledErf: return std::erf(z * M_SQRT1_2);
        case Activation::Relu: return z > 0.0 ? z : 0.0;
    }
    return z;
}

ActivationKind make_activation(Activation a) {
    ActivationKind k;
    k.variant = a;
    k.odd = a != Activation::Relu;
    // erf(z/sqrt2) has slope sqrt(2/pi) at 0, its maximum
    k.lipschitz = a == Activation::ScaledErf ? std::sqrt(2.0 / M_PI) : 1.0;
    return k;
}

ActivationKind parse_activation(const std::string& name) {
    if (name == "identity") return make_activation(Activation::Identity);
    if (name == "tanh") return make_activation(Activation::Tanh);
    if (name == "erf" || name == "scaled_erf") return make_activation(Activation::ScaledErf);
    if (name == "relu") return make_activation(Activation::Relu);
    throw Error(ErrorCode::InvalidConfig, "unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::ScaledErf: return "erf";
        case Activation::Relu: return "relu";
    }
    return "?";
}

std::string weight_kind_name(WeightKind k) { return k == WeightKind::Gaussian ? "gaussian" : "rademacher"; }

WeightKind parse_weight_kind(const std::string& name) {
    if (name == "gaussian") return WeightKind::Gaussian;
    if (name == "rademacher") return WeightKind::Rademacher;
    throw Error(ErrorCode::InvalidConfig, "unknown weight kind '" + name + "'");
}

Mat WeightLayer::apply(const Mat& X) const {
    if (static_cast<std::size_t>(X.cols()) != d_in)
        throw Error(ErrorCode::DimMismatch, "layer expects " + std::to_string(d_in) + " inputs, got " +
                                                std::to_string(X.cols()));
    if (const auto* P = std::get_if<PackedOneBit>(&storage)) return packed_matmul(*P, X);
    const Mat& W = std::get<Mat>(storage);
    Mat Y(X.rows(), W.rows());
    Y.noalias() = X * W.transpose();
    return Y;
}

Mat WeightLayer::dense() const {
    if (const auto* P = std::get_if<PackedOneBit>(&storage)) return unpack(*P);
    return std::get<Mat>(storage);
}

RFNetwork build_network(const std::vector<std::size_t>& dims, ActivationKind activation, WeightKind kind,
                        std::uint64_t seed, bool allow_non_odd) {
    if (dims.size() < 2) throw Error(ErrorCode::EmptyDims, "need at least [d_0, d_1]");
    for (std::size_t d : dims)
        if (d == 0) throw Error(ErrorCode::ZeroDim, "all dimensions must be positive");
    if (!activation.odd && !allow_non_odd)
        throw Error(ErrorCode::NonOddActivation,
                    activation_name(activation.variant) + " is not odd; pass allow_non_odd to use it");

    RFNetwork net;
    net.activation = activation;
    net.dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t din = dims[l], dout = dims[l + 1];
        std::mt19937_64 gen(split_seed(seed, 0x1a7e5ULL, l));
        std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(din)));
        Mat W(dout, din);
        for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = nd(gen);
        WeightLayer layer;
        layer.d_in = din;
        layer.d_out = dout;
        if (kind == WeightKind::Rademacher)
            layer.storage = pack_signs(W);
        else
            layer.storage = std::move(W);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

RFNetwork quantize(const RFNetwork& net) {
    RFNetwork q = net;
    for (auto& layer : q.layers)
        if (!layer.packed()) layer.storage = pack_signs(std::get<Mat>(layer.storage));
    return q;
}

RFNetwork densify(const RFNetwork& net) {
    RFNetwork q = net;
    for (auto& layer : q.layers)
        if (layer.packed()) layer.storage = unpack(std::get<PackedOneBit>(layer.storage));
    return q;
}

RFNetwork truncate(const RFNetwork& net, std::size_t L) {
    if (L == 0 || L > net.depth())
        throw Error(ErrorCode::LayerOutOfRange, "truncate to " + std::to_string(L) + " of " + std::to_string(net.depth()));
    RFNetwork t;
    t.activation = net.activation;
    t.layers.assign(net.layers.begin(), net.layers.begin() + static_cast<std::ptrdiff_t>(L));
    t.dims.assign(net.dims.begin(), net.dims.begin() + static_cast<std::ptrdiff_t>(L + 1));
    return t;
}

namespace {
void activate(Mat& Z, const ActivationKind& act) {
    if (act.variant == Activation::Identity) return;
    double* p = Z.data();
    const Eigen::Index n = Z.size();
    for (Eigen::Index k = 0; k < n; ++k) p[k] = act(p[k]);
}
}  // namespace

Mat forward(const RFNetwork& net, const Mat& X) {
    if (static_cast<std::size_t>(X.cols()) != net.d_in())
        throw Error(ErrorCode::DimMismatch, "input has " + std::to_string(X.cols()) + " columns, network expects " +
                                                std::to_string(net.d_in()));
    Mat cur = X;
    for (const auto& layer : net.layers) {
        cur = layer.apply(cur);
        activate(cur, net.activation);
    }
    return cur;
}

std::vector<Mat> forward_trace(const RFNetwork& net, const Mat& X) {
    if (static_cast<std::size_t>(X.cols()) != net.d_in())
        throw Error(ErrorCode::DimMismatch, "input has " + std::to_string(X.cols()) + " columns, network expects " +
                                                std::to_string(net.d_in()));
    std::vector<Mat> out;
    out.reserve(net.depth());
    const Mat* prev = &X;
    for (const auto& layer : net.layers) {
        out.push_back(layer.apply(*prev));
        activate(out.back(), net.activation);
        prev = &out.back();
    }
    return out;
}

Vec predict(const RFNetwork& net, const Vec& a, const Mat& X) {
    if (static_cast<std::size_t>(a.size()) != net.d_out())
        throw Error(ErrorCode::DimMismatch, "a has length " + std::to_string(a.size()) + ", expected " +
                                                std::to_string(net.d_out()));
    return forward(net, X) * a;
}

Mat predict(const RFNetwork& net, const Mat& A, const Mat& X) {
    if (static_cast<std::size_t>(A.rows()) != net.d_out())
        throw Error(ErrorCode::DimMismatch, "A has " + std::to_string(A.rows()) + " rows, expected " +
                                                std::to_string(net.d_out()));
    return forward(net, X) * A;
}

Vec sample_ground_truth(std::size_t d_L, std::uint64_t seed) {
    std::mt19937_64 gen(split_seed(seed, 0xa57a2ULL));
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(d_L)));
    Vec a(d_L);
    for (auto& v : a) v = nd(gen);
    return a;
}

Vec make_labels(const RFNetwork& net, const Vec& a_star, const Mat& X) { return predict(net, a_star, X); }

}  // namespace rfq
