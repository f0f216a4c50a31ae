#pragma once

#include "rfq/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace rfq {

// Rows i.i.d. N(0, I_d / d).
Mat gen_synthetic(std::size_t d, std::size_t n, std::uint64_t seed);

// ---- IDX ----

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

struct IdxHeader {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
};

struct IdxData {
    IdxHeader header;
    std::vector<std::uint8_t> payload;

    std::size_t count() const { return header.dims.empty() ? 0 : header.dims[0]; }
    // bytes per item: rows*cols for images, 1 for labels
    std::size_t item_size() const;
};

IdxData parse_idx(const std::vector<std::uint8_t>& bytes);
// Whole file; gzip-compressed files (any name) are inflated transparently.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
IdxData read_idx_file(const std::string& path);

// n x (rows*cols) raw pixel values 0..255
Mat idx_images(const IdxData& idx);
std::vector<int> idx_labels(const IdxData& idx);

struct NormalizedImages {
    Mat X;
    double scale = 1.0;  // X = (pixels / 255) * scale
};

// pixels/255, then one global factor so that the mean squared row norm is 1.
NormalizedImages normalize_mnist(const Mat& pixels);
Mat apply_mnist_scale(const Mat& pixels, double scale);

struct Dataset {
    Mat X;
    std::vector<int> labels;
    std::string source;
    double input_scale = 1.0;
};

// MNIST train/test pair from four IDX files (optionally .gz). Scale is fitted on the train split.
struct MnistData {
    Dataset train;
    Dataset test;
};
MnistData load_mnist(const std::string& train_images, const std::string& train_labels, const std::string& test_images,
                     const std::string& test_labels);

// Sorted indices, exactly k per class for classes 0..num_classes-1
// (num_classes < 0: 0..max label).
std::vector<std::size_t> balanced_subsample(const std::vector<int>& labels, std::size_t k_per_class,
                                            std::uint64_t seed, int num_classes = -1);

Mat one_hot(const std::vector<int>& labels, int num_classes);

// ---- CSV ----

using Cell = std::variant<double, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    std::size_t column_index(const std::string& name) const;
    void add_row(std::vector<Cell> row);
};

// Numbers are written with 17 significant digits; non-finite numbers are rejected.
// On read a field is a number iff it parses completely as a finite double.
std::string format_csv(const Table& t);
Table parse_csv(const std::string& text);
void write_csv(const Table& t, const std::string& path);
Table read_csv(const std::string& path);

// ---- config ----

// Flat key = value lines, '#' starts a comment.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    // lower-precedence values: only keys not already present
    void merge_defaults(const Config& other);

    std::string get_string(const std::string& key, const std::string& def = "") const;
    double get_double(const std::string& key, double def) const;
    long long get_int(const std::string& key, long long def) const;
    bool get_bool(const std::string& key, bool def) const;
    // comma or whitespace separated
    std::vector<std::size_t> get_size_list(const std::string& key, const std::vector<std::size_t>& def) const;
    std::vector<std::string> get_string_list(const std::string& key, const std::vector<std::string>& def) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace rfq
