#pragma once

#include "rfq/bitpack.hpp"
#include "rfq/common.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace rfq {

enum class Activation { Identity, Tanh, ScaledErf, Relu };

struct ActivationKind {
    Activation variant = Activation::Tanh;
    bool odd = true;
    double lipschitz = 1.0;

    double operator()(double z) const;
};

ActivationKind make_activation(Activation a);
ActivationKind parse_activation(const std::string& name);
std::string activation_name(Activation a);

enum class WeightKind { Gaussian, Rademacher };
std::string weight_kind_name(WeightKind k);
WeightKind parse_weight_kind(const std::string& name);

struct WeightLayer {
    std::variant<Mat, PackedOneBit> storage;
    std::size_t d_in = 0;
    std::size_t d_out = 0;

    bool packed() const { return std::holds_alternative<PackedOneBit>(storage); }
    // X (n x d_in) -> X W^T (n x d_out)
    Mat apply(const Mat& X) const;
    // Dense copy of the represented matrix.
    Mat dense() const;
};

struct RFNetwork {
    std::vector<WeightLayer> layers;
    ActivationKind activation;
    std::vector<std::size_t> dims;

    std::size_t depth() const { return layers.size(); }
    std::size_t d_in() const { return dims.front(); }
    std::size_t d_out() const { return dims.back(); }
};

// Rademacher layers are the signs of the Gaussian draw for the same seed, so
// build_network(dims, act, Rademacher, s) == quantize(build_network(dims, act, Gaussian, s)).
RFNetwork build_network(const std::vector<std::size_t>& dims, ActivationKind activation, WeightKind kind,
                        std::uint64_t seed, bool allow_non_odd = false);

// Sign-quantized copy: every dense layer is packed, packed layers are kept.
RFNetwork quantize(const RFNetwork& net);
// Same network with packed layers expanded to dense sign matrices.
RFNetwork densify(const RFNetwork& net);
// First L layers.
RFNetwork truncate(const RFNetwork& net, std::size_t L);

Mat forward(const RFNetwork& net, const Mat& X);
// Outputs of every layer: result[l] = x^(l+1), l = 0..L-1.
std::vector<Mat> forward_trace(const RFNetwork& net, const Mat& X);

Vec predict(const RFNetwork& net, const Vec& a, const Mat& X);
Mat predict(const RFNetwork& net, const Mat& A, const Mat& X);

Vec sample_ground_truth(std::size_t d_L, std::uint64_t seed);
Vec make_labels(const RFNetwork& net, const Vec& a_star, const Mat& X);

}  // namespace rfq
