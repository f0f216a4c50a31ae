#include "rfq/dataio.hpp"

#include <doctest.h>

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>

using namespace rfq;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
    return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
            static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_bytes(std::uint32_t magic, const std::vector<std::uint32_t>& dims,
                                    const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> b = be32(magic);
    for (auto d : dims) {
        auto e = be32(d);
        b.insert(b.end(), e.begin(), e.end());
    }
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an rfq::Error");
    return ErrorCode::Truncated;
}

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "rfq_test_dataio";
    fs::create_directories(dir);
    return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
    std::FILE* f = std::fopen(p.string().c_str(), "wb");
    REQUIRE(f);
    std::fwrite(b.data(), 1, b.size(), f);
    std::fclose(f);
}

void write_gz(const fs::path& p, const std::vector<std::uint8_t>& b) {
    gzFile g = gzopen(p.string().c_str(), "wb");
    REQUIRE(g);
    gzwrite(g, b.data(), static_cast<unsigned>(b.size()));
    gzclose(g);
}

std::string data_dir() { return std::string(RFQ_SOURCE_DIR) + "/data/"; }

}  // namespace

TEST_CASE("gen_synthetic moments and reproducibility") {
    const Mat X = gen_synthetic(16, 100000, 5);
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const double se = std::sqrt(1.0 / 16.0 / 100000.0);
    CHECK(mean.cwiseAbs().maxCoeff() <= 4 * se);
    const Mat Y = gen_synthetic(256, 10000, 6);
    CHECK(Y.rowwise().squaredNorm().mean() == doctest::Approx(1.0).epsilon(0.02));
    CHECK((gen_synthetic(8, 10, 42) - gen_synthetic(8, 10, 42)).norm() == 0.0);
    CHECK((gen_synthetic(8, 10, 42) - gen_synthetic(8, 10, 43)).norm() > 0.0);
}

TEST_CASE("parse_idx examples") {
    const auto img = parse_idx(idx_bytes(kIdxImages, {2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
    CHECK(img.count() == 2);
    CHECK(img.item_size() == 4);
    const Mat P = idx_images(img);
    REQUIRE(P.rows() == 2);
    REQUIRE(P.cols() == 4);
    CHECK(P(0, 0) == 1);
    CHECK(P(1, 3) == 8);

    const auto lab = parse_idx(idx_bytes(kIdxLabels, {3}, {7, 0, 9}));
    CHECK(idx_labels(lab) == std::vector<int>{7, 0, 9});

    CHECK(code_of([] { parse_idx(idx_bytes(kIdxLabels, {4}, {1, 2, 3})); }) == ErrorCode::Truncated);
    CHECK(code_of([] { parse_idx(idx_bytes(0x00000802, {1}, {1})); }) == ErrorCode::BadMagic);
    CHECK(code_of([] { parse_idx({0, 0}); }) == ErrorCode::Truncated);
    try {
        parse_idx(idx_bytes(kIdxImages, {2, 2, 2}, {1, 2, 3}));
        FAIL("expected Truncated");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("expected 24 bytes, got 19") != std::string::npos);
    }
}

TEST_CASE("parse_idx fuzz: truncations and corruptions give typed errors") {
    const auto good = idx_bytes(kIdxImages, {3, 4, 5}, std::vector<std::uint8_t>(60, 17));
    for (std::size_t len = 0; len < good.size(); ++len) {
        std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<long>(len));
        CHECK(code_of([&] { parse_idx(cut); }) == ErrorCode::Truncated);
    }
    std::mt19937_64 g(9);
    std::uniform_int_distribution<int> byte(0, 255), pos(0, 15);
    for (int t = 0; t < 2000; ++t) {
        auto b = good;
        b[static_cast<std::size_t>(pos(g))] = static_cast<std::uint8_t>(byte(g));
        try {
            parse_idx(b);
        } catch (const Error& e) {
            CHECK((e.code() == ErrorCode::BadMagic || e.code() == ErrorCode::Truncated));
        }
    }
}

TEST_CASE("IDX files: plain and gzip, plus missing files") {
    const auto bytes = idx_bytes(kIdxLabels, {5}, {0, 1, 2, 3, 4});
    write_bytes(temp_path("labels.idx"), bytes);
    write_gz(temp_path("labels.idx.gz"), bytes);
    CHECK(idx_labels(read_idx_file(temp_path("labels.idx").string())) == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(idx_labels(read_idx_file(temp_path("labels.idx.gz").string())) == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(code_of([] { read_idx_file(temp_path("nope.idx").string()); }) == ErrorCode::IoError);
}

TEST_CASE("normalize_mnist") {
    Mat P = Mat::Zero(3, 4);
    P.row(0) << 255, 0, 0, 0;
    P.row(1) << 0, 255, 255, 0;
    const auto N = normalize_mnist(P);
    CHECK(N.scale > 0.0);
    CHECK(N.X.row(2).isZero(0.0));
    CHECK(N.X.rowwise().squaredNorm().mean() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(normalize_mnist(P).scale == N.scale);
    CHECK((apply_mnist_scale(P, N.scale) - N.X).norm() == 0.0);
    CHECK(normalize_mnist(Mat::Zero(2, 2)).X.isZero(0.0));
}

TEST_CASE("balanced_subsample") {
    const std::vector<int> lab{0, 1, 1, 0};
    const auto one = balanced_subsample(lab, 1, 3);
    REQUIRE(one.size() == 2);
    CHECK(lab[one[0]] != lab[one[1]]);
    CHECK(balanced_subsample(lab, 2, 3) == std::vector<std::size_t>{0, 1, 2, 3});
    try {
        balanced_subsample(lab, 3, 3);
        FAIL("expected InsufficientClass");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientClass);
        CHECK(std::string(e.what()).find("have 2, need 3") != std::string::npos);
    }
    CHECK(code_of([&] { balanced_subsample(lab, 1, 3, 3); }) == ErrorCode::InsufficientClass);

    std::mt19937_64 g(2);
    std::uniform_int_distribution<int> cls(0, 9);
    std::vector<int> big(3000);
    for (auto& v : big) v = cls(g);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto idx = balanced_subsample(big, 20, seed, 10);
        CHECK(idx.size() == 200);
        CHECK(std::is_sorted(idx.begin(), idx.end()));
        CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == idx.size());
        std::vector<int> hist(10, 0);
        for (auto i : idx) ++hist[static_cast<std::size_t>(big[i])];
        CHECK(std::all_of(hist.begin(), hist.end(), [](int h) { return h == 20; }));
        CHECK(balanced_subsample(big, 20, seed, 10) == idx);
    }
    CHECK(balanced_subsample(big, 20, 1, 10) != balanced_subsample(big, 20, 2, 10));
}

TEST_CASE("one_hot") {
    const Mat E = one_hot({2}, 3);
    CHECK(E(0, 0) == 0);
    CHECK(E(0, 2) == 1);
    const std::vector<int> lab{0, 4, 1, 1, 3};
    const Mat H = one_hot(lab, 5);
    for (Eigen::Index i = 0; i < H.rows(); ++i) {
        CHECK(H.row(i).sum() == 1.0);
        Eigen::Index arg;
        H.row(i).maxCoeff(&arg);
        CHECK(arg == lab[static_cast<std::size_t>(i)]);
    }
    CHECK(code_of([] { one_hot({3}, 3); }) == ErrorCode::OutOfRange);
    CHECK(code_of([] { one_hot({-1}, 3); }) == ErrorCode::OutOfRange);
}

TEST_CASE("CSV: single row, column order, NaN rejection") {
    Table t;
    t.columns = {"z", "a", "m"};
    t.add_row({1.5, std::string("x,y"), std::string("say \"hi\"")});
    const Table r = parse_csv(format_csv(t));
    CHECK(r.columns == t.columns);
    REQUIRE(r.rows.size() == 1);
    CHECK(std::get<double>(r.rows[0][0]) == 1.5);
    CHECK(std::get<std::string>(r.rows[0][1]) == "x,y");
    CHECK(std::get<std::string>(r.rows[0][2]) == "say \"hi\"");
    CHECK(r.column_index("m") == 2);

    for (double bad : {std::nan(""), HUGE_VAL, -HUGE_VAL}) {
        Table b;
        b.columns = {"v"};
        b.add_row({bad});
        CHECK(code_of([&] { format_csv(b); }) == ErrorCode::DomainViolation);
    }
    CHECK(code_of([] { parse_csv("a,b\n1\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_csv("a\n\"open\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { read_csv(temp_path("missing.csv").string()); }) == ErrorCode::IoError);
}

TEST_CASE("CSV: write then read is the identity on 100 random tables") {
    std::mt19937_64 g(31);
    std::uniform_int_distribution<int> ncol(1, 6), nrow(0, 12), kind(0, 3), ch(32, 126);
    std::uniform_real_distribution<double> U(-1, 1);
    std::uniform_int_distribution<int> ex(-300, 300);
    for (int t = 0; t < 100; ++t) {
        Table tab;
        const int c = ncol(g);
        for (int j = 0; j < c; ++j) tab.columns.push_back("c" + std::to_string(j));
        const int r = nrow(g);
        for (int i = 0; i < r; ++i) {
            std::vector<Cell> row;
            for (int j = 0; j < c; ++j) {
                switch (kind(g)) {
                    case 0:
                        row.emplace_back(std::ldexp(U(g), ex(g) % 60));
                        break;
                    case 1:
                        row.emplace_back(U(g) * std::pow(10.0, ex(g)));
                        break;
                    case 2: {
                        std::string s;
                        const int len = nrow(g);
                        for (int k = 0; k < len; ++k) s.push_back(static_cast<char>(ch(g)));
                        s += "\n,\"";  // always needs quoting, never parses as a number
                        row.emplace_back(s);
                        break;
                    }
                    default:
                        row.emplace_back(static_cast<double>(i * 7 - j));
                }
            }
            tab.add_row(std::move(row));
        }
        const fs::path p = temp_path("rt.csv");
        write_csv(tab, p.string());
        const Table back = read_csv(p.string());
        REQUIRE(back.columns == tab.columns);
        REQUIRE(back.rows.size() == tab.rows.size());
        for (std::size_t i = 0; i < tab.rows.size(); ++i)
            for (std::size_t j = 0; j < tab.rows[i].size(); ++j) {
                const Cell& a = tab.rows[i][j];
                const Cell& b = back.rows[i][j];
                REQUIRE(a.index() == b.index());
                if (a.index() == 0)
                    CHECK(std::get<double>(a) == std::get<double>(b));
                else
                    CHECK(std::get<std::string>(a) == std::get<std::string>(b));
            }
    }
}

TEST_CASE("config parsing and typed access") {
    const Config c = Config::parse(
        "# comment\n"
        "d = 512\n"
        "  n=40   # trailing\n"
        "tol = 1e-9\n"
        "closed_form = false\n"
        "depths = 1, 2,3 4\n"
        "kinds = gaussian rademacher\n");
    CHECK(c.get_int("d", 0) == 512);
    CHECK(c.get_int("n", 0) == 40);
    CHECK(c.get_double("tol", 0) == 1e-9);
    CHECK(c.get_bool("closed_form", true) == false);
    CHECK(c.get_size_list("depths", {}) == std::vector<std::size_t>{1, 2, 3, 4});
    CHECK(c.get_string_list("kinds", {}) == std::vector<std::string>{"gaussian", "rademacher"});
    CHECK(c.get_int("missing", 7) == 7);
    CHECK(code_of([&] { c.get_bool("d", false); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { Config::parse("d = x\n").get_int("d", 0); }) == ErrorCode::InvalidConfig);
    try {
        Config::parse("a = 1\nnot a pair\n");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    Config lo = Config::parse("d = 1\nn = 2\n");
    Config hi = Config::parse("d = 9\n");
    hi.merge_defaults(lo);
    CHECK(hi.get_int("d", 0) == 9);
    CHECK(hi.get_int("n", 0) == 2);
    CHECK(Config::parse(hi.to_text()).values() == hi.values());
    CHECK(code_of([] { Config::load(temp_path("nope.cfg").string()); }) == ErrorCode::IoError);
}

TEST_CASE("bundled MNIST subset loads and is class-balanced enough") {
    const std::string d = data_dir();
    const MnistData m = load_mnist(d + "mnist5k-train-images-idx3-ubyte.gz", d + "mnist5k-train-labels-idx1-ubyte.gz",
                                   d + "mnist5k-test-images-idx3-ubyte.gz", d + "mnist5k-test-labels-idx1-ubyte.gz");
    CHECK(m.train.X.rows() == 4000);
    CHECK(m.test.X.rows() == 1000);
    CHECK(m.train.X.cols() == 784);
    CHECK(m.train.X.rowwise().squaredNorm().mean() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.test.input_scale == m.train.input_scale);
    CHECK(balanced_subsample(m.train.labels, 20, 1, 10).size() == 200);
    CHECK(balanced_subsample(m.test.labels, 20, 1, 10).size() == 200);
}
