#include "rfq/bitpack.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace rfq {

namespace {

constexpr std::uint32_t kVersion = 1;

// One 256-entry table per 8-column group: T[g][b] = sum of x over the set bits of b.
void build_tables(const double* x, std::size_t d_in, std::size_t words, std::vector<double>& T) {
    const std::size_t groups = words * 8;
    T.resize(groups * 256);
    double xs[8];
    for (std::size_t g = 0; g < groups; ++g) {
        for (int k = 0; k < 8; ++k) {
            std::size_t j = g * 8 + k;
            xs[k] = j < d_in ? x[j] : 0.0;
        }
        double* t = T.data() + g * 256;
        t[0] = 0.0;
        for (unsigned b = 1; b < 256; ++b) t[b] = t[b & (b - 1)] + xs[std::countr_zero(b)];
    }
}

void matvec_with_tables(const PackedOneBit& P, const std::vector<double>& T, double total, double* y) {
    const std::size_t W = P.words_per_row;
    for (std::size_t i = 0; i < P.d_out; ++i) {
        const std::uint64_t* row = P.row(i);
        const double* t = T.data();
        double s = 0.0;
        for (std::size_t w = 0; w < W; ++w, t += 8 * 256) {
            std::uint64_t v = row[w];
            s += t[0 * 256 + (v & 0xff)] + t[1 * 256 + ((v >> 8) & 0xff)] +
                 t[2 * 256 + ((v >> 16) & 0xff)] + t[3 * 256 + ((v >> 24) & 0xff)] +
                 t[4 * 256 + ((v >> 32) & 0xff)] + t[5 * 256 + ((v >> 40) & 0xff)] +
                 t[6 * 256 + ((v >> 48) & 0xff)] + t[7 * 256 + (v >> 56)];
        }
        y[i] = P.scale * (2.0 * s - total);
    }
}

void matvec_into(const PackedOneBit& P, const double* x, double* y, std::vector<double>& scratch) {
    double total = 0.0;
    for (std::size_t j = 0; j < P.d_in; ++j) total += x[j];
    build_tables(x, P.d_in, P.words_per_row, scratch);
    matvec_with_tables(P, scratch, total, y);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

}  // namespace

std::size_t packed_bytes_for(std::size_t d_out, std::size_t d_in) {
    return d_out * ((d_in + 63) / 64) * 8;
}

PackedOneBit pack_signs(const Mat& W) {
    if (W.rows() == 0 || W.cols() == 0) throw Error(ErrorCode::ShapeMismatch, "pack_signs: empty matrix");
    PackedOneBit P;
    P.d_out = static_cast<std::size_t>(W.rows());
    P.d_in = static_cast<std::size_t>(W.cols());
    P.words_per_row = (P.d_in + 63) / 64;
    P.bits.assign(P.d_out * P.words_per_row, 0ULL);
    P.scale = 1.0 / std::sqrt(static_cast<double>(P.d_in));
    for (std::size_t i = 0; i < P.d_out; ++i) {
        std::uint64_t* row = P.bits.data() + i * P.words_per_row;
        for (std::size_t j = 0; j < P.d_in; ++j)
            if (W(i, j) >= 0.0) row[j >> 6] |= 1ULL << (j & 63);
    }
    return P;
}

Mat unpack(const PackedOneBit& P) {
    Mat W(P.d_out, P.d_in);
    for (std::size_t i = 0; i < P.d_out; ++i)
        for (std::size_t j = 0; j < P.d_in; ++j) W(i, j) = P.bit(i, j) ? P.scale : -P.scale;
    return W;
}

Vec packed_matvec(const PackedOneBit& P, const Vec& x) {
    if (static_cast<std::size_t>(x.size()) != P.d_in)
        throw Error(ErrorCode::DimMismatch, "packed_matvec: x has length " + std::to_string(x.size()) +
                                                ", expected " + std::to_string(P.d_in));
    Vec y(P.d_out);
    std::vector<double> scratch;
    matvec_into(P, x.data(), y.data(), scratch);
    return y;
}

Mat packed_matmul(const PackedOneBit& P, const Mat& X) {
    if (static_cast<std::size_t>(X.cols()) != P.d_in)
        throw Error(ErrorCode::DimMismatch, "packed_matmul: X has " + std::to_string(X.cols()) +
                                                " columns, expected " + std::to_string(P.d_in));
    Mat Y(X.rows(), P.d_out);
    std::vector<double> scratch;
    for (Eigen::Index r = 0; r < X.rows(); ++r) matvec_into(P, X.row(r).data(), Y.row(r).data(), scratch);
    return Y;
}

BenchReport bench_kernel(std::size_t d_in, std::size_t d_out, std::size_t reps, std::size_t warmup,
                         std::uint64_t seed) {
    if (reps == 0) reps = 1;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat W(d_out, d_in);
    for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = nd(gen);
    Vec x(d_in);
    for (auto& v : x) v = nd(gen);
    PackedOneBit P = pack_signs(W);

    Vec y(d_out);
    std::vector<double> scratch;
    volatile double sink = 0.0;
    using clock = std::chrono::steady_clock;

    for (std::size_t r = 0; r < warmup; ++r) {
        y.noalias() = W * x;
        sink = sink + y[r % d_out];
    }
    auto t0 = clock::now();
    for (std::size_t r = 0; r < reps; ++r) {
        y.noalias() = W * x;
        sink = sink + y[r % d_out];
    }
    auto t1 = clock::now();

    for (std::size_t r = 0; r < warmup; ++r) {
        matvec_into(P, x.data(), y.data(), scratch);
        sink = sink + y[r % d_out];
    }
    auto t2 = clock::now();
    for (std::size_t r = 0; r < reps; ++r) {
        matvec_into(P, x.data(), y.data(), scratch);
        sink = sink + y[r % d_out];
    }
    auto t3 = clock::now();

    BenchReport rep;
    rep.d_in = d_in;
    rep.d_out = d_out;
    rep.reps = reps;
    rep.dense_ns = std::chrono::duration<double, std::nano>(t1 - t0).count() / static_cast<double>(reps);
    rep.packed_ns = std::chrono::duration<double, std::nano>(t3 - t2).count() / static_cast<double>(reps);
    rep.speedup = rep.dense_ns / rep.packed_ns;
    rep.dense_bytes = d_out * d_in * 8;
    rep.packed_bytes = packed_bytes_for(d_out, d_in);
    return rep;
}

std::vector<std::uint8_t> serialize_packed(const PackedOneBit& P) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + P.bytes());
    const char magic[4] = {'R', 'F', 'B', '1'};
    out.insert(out.end(), magic, magic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(P.d_out));
    put_u32(out, static_cast<std::uint32_t>(P.d_in));
    for (std::uint64_t w : P.bits)
        for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(w >> (8 * k)));
    return out;
}

PackedOneBit deserialize_packed(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16) throw Error(ErrorCode::Truncated, "RFB1 header needs 16 bytes, got " + std::to_string(bytes.size()));
    if (std::memcmp(bytes.data(), "RFB1", 4) != 0) throw Error(ErrorCode::BadMagic, "expected RFB1");
    std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kVersion) throw Error(ErrorCode::ParseError, "unsupported RFB1 version " + std::to_string(version));
    PackedOneBit P;
    P.d_out = get_u32(bytes.data() + 8);
    P.d_in = get_u32(bytes.data() + 12);
    if (P.d_out == 0 || P.d_in == 0) throw Error(ErrorCode::ZeroDim, "RFB1 with zero dimension");
    P.words_per_row = (P.d_in + 63) / 64;
    P.scale = 1.0 / std::sqrt(static_cast<double>(P.d_in));
    const std::size_t need = 16 + P.d_out * P.words_per_row * 8;
    if (bytes.size() < need)
        throw Error(ErrorCode::Truncated, "expected " + std::to_string(need) + " bytes, got " + std::to_string(bytes.size()));
    P.bits.resize(P.d_out * P.words_per_row);
    const std::uint8_t* p = bytes.data() + 16;
    for (auto& w : P.bits) {
        w = 0;
        for (int k = 0; k < 8; ++k) w |= std::uint64_t(p[k]) << (8 * k);
        p += 8;
    }
    if (const std::size_t tail = P.d_in % 64) {
        const std::uint64_t pad = ~((std::uint64_t(1) << tail) - 1);
        for (std::size_t i = 0; i < P.d_out; ++i)
            if (P.bits[i * P.words_per_row + P.words_per_row - 1] & pad)
                throw Error(ErrorCode::ParseError, "RFB1 row " + std::to_string(i) + " has padding bits set");
    }
    return P;
}

void save_packed(const PackedOneBit& P, const std::string& path) {
    auto bytes = serialize_packed(P);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::IoError, "write failed: " + path);
}

PackedOneBit load_packed(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_packed(bytes);
}

}  // namespace rfq
