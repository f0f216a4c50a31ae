#include "rfq/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

namespace rfq {

Mat gen_synthetic(std::size_t d, std::size_t n, std::uint64_t seed) {
    if (d == 0 || n == 0) throw Error(ErrorCode::ZeroDim, "gen_synthetic needs d, n >= 1");
    Mat X(n, d);
    std::mt19937_64 gen(split_seed(seed, 0xda7a));
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = nd(gen);
    return X;
}

// ---- IDX ----

namespace {

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

std::string truncated(std::size_t expected, std::size_t got) {
    return "expected " + std::to_string(expected) + " bytes, got " + std::to_string(got);
}

}  // namespace

std::size_t IdxData::item_size() const {
    std::size_t s = 1;
    for (std::size_t i = 1; i < header.dims.size(); ++i) s *= header.dims[i];
    return s;
}

IdxData parse_idx(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4) throw Error(ErrorCode::Truncated, truncated(4, bytes.size()));
    IdxData out;
    out.header.magic = be32(bytes.data());
    std::size_t ndims = 0;
    if (out.header.magic == kIdxImages)
        ndims = 3;
    else if (out.header.magic == kIdxLabels)
        ndims = 1;
    else {
        char buf[64];
        std::snprintf(buf, sizeof buf, "IDX magic 0x%08x", out.header.magic);
        throw Error(ErrorCode::BadMagic, buf);
    }
    const std::size_t header_len = 4 + 4 * ndims;
    if (bytes.size() < header_len) throw Error(ErrorCode::Truncated, truncated(header_len, bytes.size()));
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        const std::uint32_t d = be32(bytes.data() + 4 + 4 * i);
        out.header.dims.push_back(d);
        total *= d;
    }
    if (bytes.size() - header_len < total) throw Error(ErrorCode::Truncated, truncated(header_len + total, bytes.size()));
    out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_len),
                       bytes.begin() + static_cast<std::ptrdiff_t>(header_len + total));
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    for (;;) {
        const int got = gzread(f, buf, sizeof buf);
        if (got < 0) {
            int errnum = 0;
            std::string msg = gzerror(f, &errnum);
            gzclose(f);
            throw Error(ErrorCode::IoError, "read error in '" + path + "': " + msg);
        }
        if (got == 0) break;
        out.insert(out.end(), buf, buf + got);
    }
    gzclose(f);
    return out;
}

IdxData read_idx_file(const std::string& path) { return parse_idx(read_file_bytes(path)); }

Mat idx_images(const IdxData& idx) {
    if (idx.header.magic != kIdxImages) throw Error(ErrorCode::BadMagic, "not an IDX image file");
    const std::size_t n = idx.count(), m = idx.item_size();
    Mat X(n, m);
    for (std::size_t i = 0; i < n * m; ++i) X.data()[i] = idx.payload[i];
    return X;
}

std::vector<int> idx_labels(const IdxData& idx) {
    if (idx.header.magic != kIdxLabels) throw Error(ErrorCode::BadMagic, "not an IDX label file");
    return std::vector<int>(idx.payload.begin(), idx.payload.end());
}

NormalizedImages normalize_mnist(const Mat& pixels) {
    NormalizedImages out;
    const double ms = pixels.rows() > 0 ? (pixels / 255.0).rowwise().squaredNorm().mean() : 0.0;
    out.scale = ms > 0.0 ? 1.0 / std::sqrt(ms) : 1.0;
    out.X = apply_mnist_scale(pixels, out.scale);
    return out;
}

Mat apply_mnist_scale(const Mat& pixels, double scale) { return pixels * (scale / 255.0); }

MnistData load_mnist(const std::string& train_images, const std::string& train_labels, const std::string& test_images,
                     const std::string& test_labels) {
    MnistData d;
    const Mat tr = idx_images(read_idx_file(train_images));
    d.train.labels = idx_labels(read_idx_file(train_labels));
    const Mat te = idx_images(read_idx_file(test_images));
    d.test.labels = idx_labels(read_idx_file(test_labels));
    if (static_cast<std::size_t>(tr.rows()) != d.train.labels.size() ||
        static_cast<std::size_t>(te.rows()) != d.test.labels.size())
        throw Error(ErrorCode::DimMismatch, "image and label counts differ");
    if (tr.cols() != te.cols()) throw Error(ErrorCode::DimMismatch, "train and test image sizes differ");
    NormalizedImages nt = normalize_mnist(tr);
    d.train.X = std::move(nt.X);
    d.train.input_scale = nt.scale;
    d.train.source = "mnist:" + train_images;
    d.test.X = apply_mnist_scale(te, nt.scale);
    d.test.input_scale = nt.scale;
    d.test.source = "mnist:" + test_images;
    return d;
}

std::vector<std::size_t> balanced_subsample(const std::vector<int>& labels, std::size_t k, std::uint64_t seed,
                                            int num_classes) {
    int nc = num_classes;
    if (nc < 0) {
        nc = 0;
        for (int l : labels) nc = std::max(nc, l + 1);
    }
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(nc));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || l >= nc) throw Error(ErrorCode::OutOfRange, "label " + std::to_string(l) + " out of range");
        by_class[static_cast<std::size_t>(l)].push_back(i);
    }
    std::vector<std::size_t> out;
    out.reserve(k * static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        if (idx.size() < k)
            throw Error(ErrorCode::InsufficientClass, "class " + std::to_string(c) + ": have " +
                                                          std::to_string(idx.size()) + ", need " + std::to_string(k));
        std::mt19937_64 gen(split_seed(seed, 0xba1, static_cast<std::uint64_t>(c)));
        // partial Fisher-Yates
        for (std::size_t j = 0; j < k; ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
            std::swap(idx[j], idx[pick(gen)]);
            out.push_back(idx[j]);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Mat one_hot(const std::vector<int>& labels, int num_classes) {
    if (num_classes <= 0) throw Error(ErrorCode::ZeroDim, "num_classes must be positive");
    Mat Y = Mat::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw Error(ErrorCode::OutOfRange, "label " + std::to_string(labels[i]) + " not in [0, " +
                                                   std::to_string(num_classes) + ")");
        Y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return Y;
}

// ---- CSV ----

std::size_t Table::column_index(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw Error(ErrorCode::OutOfRange, "no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

void Table::add_row(std::vector<Cell> row) {
    if (row.size() != columns.size())
        throw Error(ErrorCode::ShapeMismatch, "row has " + std::to_string(row.size()) + " cells, table has " +
                                                  std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(row));
}

namespace {

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

std::string format_csv(const Table& t) {
    std::string out;
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
        if (j) out += ',';
        out += quote(t.columns[j]);
    }
    out += '\n';
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        if (row.size() != t.columns.size())
            throw Error(ErrorCode::ShapeMismatch, "row " + std::to_string(i) + " has wrong width");
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ',';
            if (const double* v = std::get_if<double>(&row[j])) {
                if (!std::isfinite(*v))
                    throw Error(ErrorCode::DomainViolation, "non-finite value in column '" + t.columns[j] + "', row " +
                                                                std::to_string(i));
                out += format_number(*v);
            } else {
                out += quote(std::get<std::string>(row[j]));
            }
        }
        out += '\n';
    }
    return out;
}

Table parse_csv(const std::string& text) {
    // records of raw fields; `quoted` marks fields that came in quotes (always strings)
    std::vector<std::vector<std::pair<std::string, bool>>> recs;
    std::vector<std::pair<std::string, bool>> rec;
    std::string field;
    bool quoted = false, in_quotes = false, any = false;
    std::size_t line = 1, rec_line = 1;
    auto end_field = [&] {
        rec.emplace_back(std::move(field), quoted);
        field.clear();
        quoted = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        if (c == '"') {
            if (!field.empty()) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": stray quote");
            in_quotes = quoted = any = true;
        } else if (c == ',') {
            end_field();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                end_field();
                recs.push_back(std::move(rec));
                rec.clear();
            }
            any = false;
            rec_line = ++line;
        } else {
            field += c;
            any = true;
        }
    }
    if (in_quotes) throw Error(ErrorCode::ParseError, "line " + std::to_string(rec_line) + ": unterminated quote");
    if (any || !field.empty()) {
        end_field();
        recs.push_back(std::move(rec));
    }
    Table t;
    if (recs.empty()) throw Error(ErrorCode::ParseError, "line 1: missing header");
    for (auto& [s, q] : recs[0]) t.columns.push_back(s);
    for (std::size_t r = 1; r < recs.size(); ++r) {
        if (recs[r].size() != t.columns.size())
            throw Error(ErrorCode::ParseError, "record " + std::to_string(r + 1) + ": expected " +
                                                   std::to_string(t.columns.size()) + " fields, got " +
                                                   std::to_string(recs[r].size()));
        std::vector<Cell> row;
        row.reserve(recs[r].size());
        for (auto& [s, q] : recs[r]) {
            double v;
            if (!q && parse_number(s, v))
                row.emplace_back(v);
            else
                row.emplace_back(s);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_csv(const Table& t, const std::string& path) {
    const std::string text = format_csv(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    f << text;
    if (!f) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

Table read_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str());
}

// ---- config ----

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

Config Config::parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::ParseError, "config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw Error(ErrorCode::ParseError, "config line " + std::to_string(lineno) + ": empty key");
        c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::IoError, "cannot read config '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void Config::merge_defaults(const Config& other) {
    for (const auto& [k, v] : other.values_) values_.emplace(k, v);
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
}

double Config::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    double v;
    if (!parse_number(it->second, v)) throw Error(ErrorCode::InvalidConfig, key + " = '" + it->second + "' is not a number");
    return v;
}

long long Config::get_int(const std::string& key, long long def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    char* end = nullptr;
    const long long v = std::strtoll(it->second.c_str(), &end, 10);
    if (it->second.empty() || *end != '\0')
        throw Error(ErrorCode::InvalidConfig, key + " = '" + it->second + "' is not an integer");
    return v;
}

bool Config::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    const std::string& s = it->second;
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw Error(ErrorCode::InvalidConfig, key + " = '" + s + "' is not a boolean");
}

std::vector<std::size_t> Config::get_size_list(const std::string& key, const std::vector<std::size_t>& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<std::size_t> out;
    for (const auto& tok : split_list(it->second)) {
        char* end = nullptr;
        const long long v = std::strtoll(tok.c_str(), &end, 10);
        if (*end != '\0' || v < 0)
            throw Error(ErrorCode::InvalidConfig, key + ": '" + tok + "' is not a nonnegative integer");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::vector<std::string> Config::get_string_list(const std::string& key, const std::vector<std::string>& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : split_list(it->second);
}

std::string Config::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

}  // namespace rfq
