#pragma once

#include "rfq/common.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rfq {

// Sign bits of a d_out x d_in matrix, 64 columns per word, bit 0 = lowest column.
// Entry (i, j) represents +scale if the bit is set and -scale otherwise.
struct PackedOneBit {
    std::size_t d_out = 0;
    std::size_t d_in = 0;
    std::size_t words_per_row = 0;
    std::vector<std::uint64_t> bits;
    double scale = 0.0;

    bool bit(std::size_t i, std::size_t j) const {
        return (bits[i * words_per_row + (j >> 6)] >> (j & 63)) & 1ULL;
    }
    const std::uint64_t* row(std::size_t i) const { return bits.data() + i * words_per_row; }
    std::size_t bytes() const { return bits.size() * sizeof(std::uint64_t); }

    bool operator==(const PackedOneBit& o) const {
        return d_out == o.d_out && d_in == o.d_in && bits == o.bits && scale == o.scale;
    }
};

struct BenchReport {
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    std::size_t reps = 0;
    double dense_ns = 0.0;
    double packed_ns = 0.0;
    double speedup = 0.0;
    std::size_t dense_bytes = 0;
    std::size_t packed_bytes = 0;
};

std::size_t packed_bytes_for(std::size_t d_out, std::size_t d_in);

// bit(i,j) = 1 iff W_ij >= 0; scale = 1/sqrt(d_in).
PackedOneBit pack_signs(const Mat& W);

// Dense sign(W)/sqrt(d_in) reconstruction.
Mat unpack(const PackedOneBit& P);

// y_i = scale * (2 * sum_{bit(i,j)=1} x_j - sum_j x_j)
Vec packed_matvec(const PackedOneBit& P, const Vec& x);

// Row-wise packed_matvec: returns n x d_out for X of shape n x d_in.
Mat packed_matmul(const PackedOneBit& P, const Mat& X);

BenchReport bench_kernel(std::size_t d_in, std::size_t d_out, std::size_t reps, std::size_t warmup,
                         std::uint64_t seed = 7);

// "RFB1" container: magic, u32 version, u32 d_out, u32 d_in, then little-endian words.
void save_packed(const PackedOneBit& P, const std::string& path);
PackedOneBit load_packed(const std::string& path);
std::vector<std::uint8_t> serialize_packed(const PackedOneBit& P);
PackedOneBit deserialize_packed(const std::vector<std::uint8_t>& bytes);

}  // namespace rfq
