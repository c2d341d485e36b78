// Persistence and interchange: dataset manifests (CSV / raw float32
// features), the binary model file, score CSVs, and the JSON/CSV report
// formats. Everything numeric round-trips exactly: doubles are written with
// 17 significant digits or as raw bytes.
#pragma once

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "oodscope/common.hpp"
#include "oodscope/eigen_analysis.hpp"
#include "oodscope/gaussian.hpp"
#include "oodscope/linalg.hpp"
#include "oodscope/metrics.hpp"
#include "oodscope/scoring.hpp"
#include "oodscope/simulation.hpp"

namespace oodscope {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr uint32_t kModelSchemaVersion = 1;
inline constexpr const char* kToolName = "ood-scope";

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Atomic write: temp file in the same directory, then rename over the target.
inline void atomic_write(const std::filesystem::path& path, const std::string& payload) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw InputError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string trimmed(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

inline bool try_parse_double(const std::string& cell, double& out) {
    const std::string t = trimmed(cell);
    if (t.empty()) return false;
    const char* begin = t.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end == begin + t.size();
}

inline double parse_double(const std::string& cell, const std::string& where) {
    double v = 0.0;
    if (!try_parse_double(cell, v))
        throw InputError("cannot parse '" + trimmed(cell) + "' as a number (" + where + ")");
    return v;
}

inline int64_t parse_int64(const std::string& cell, const std::string& where) {
    const std::string t = trimmed(cell);
    const char* begin = t.c_str();
    char* end = nullptr;
    const long long v = std::strtoll(begin, &end, 10);
    if (t.empty() || end != begin + t.size())
        throw InputError("cannot parse '" + t + "' as an integer (" + where + ")");
    return v;
}

inline void append_bytes(std::string& buf, const void* p, size_t n) {
    buf.append(static_cast<const char*>(p), n);
}
inline void append_u32(std::string& buf, uint32_t v) { append_bytes(buf, &v, 4); }
inline void append_u64(std::string& buf, uint64_t v) { append_bytes(buf, &v, 8); }
inline void append_i64(std::string& buf, int64_t v) { append_bytes(buf, &v, 8); }
inline void append_f64(std::string& buf, double v) { append_bytes(buf, &v, 8); }

// Bounds-checked cursor over a byte buffer, for the binary readers.
class ByteReader {
public:
    ByteReader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

    void read(void* out, size_t n) {
        if (pos_ + n > buf_.size()) throw InputError(what_ + " is truncated");
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }
    uint32_t u32() { uint32_t v; read(&v, 4); return v; }
    uint64_t u64() { uint64_t v; read(&v, 8); return v; }
    int64_t i64() { int64_t v; read(&v, 8); return v; }
    double f64() { double v; read(&v, 8); return v; }
    std::string bytes(size_t n) {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }
    [[nodiscard]] size_t pos() const { return pos_; }
    [[nodiscard]] size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::string& buf_;
    std::string what_;
    size_t pos_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset manifests and feature loading
// ---------------------------------------------------------------------------

/// Parsed manifest: where the features live, their declared shape, and the
/// optional label source. Paths are resolved relative to the manifest file.
struct DatasetManifest {
    std::filesystem::path features;
    std::string format;  // "csv" or "rawf32"
    int64_t n = 0;
    int64_t dim = 0;
    std::optional<std::filesystem::path> labels;
    std::optional<int> label_column;  // 0-based column inside the features CSV
};

inline DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw InputError("manifest must be a JSON object");

    static const std::vector<std::string> allowed = {"features", "format", "n",
                                                     "dim",      "labels", "label_column"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const auto& a : allowed) ok = ok || key == a;
        if (!ok) throw InputError("manifest has unknown key '" + key + "'");
    }
    for (const char* req : {"features", "format", "n", "dim"})
        if (!j.contains(req)) throw InputError(std::string("manifest is missing key '") + req + "'");

    DatasetManifest m;
    const std::filesystem::path base = manifest_path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base / path;
    };

    if (!j["features"].is_string()) throw InputError("manifest 'features' must be a path string");
    m.features = resolve(j["features"].get<std::string>());
    if (!j["format"].is_string()) throw InputError("manifest 'format' must be a string");
    m.format = j["format"].get<std::string>();
    if (m.format != "csv" && m.format != "rawf32")
        throw InputError("manifest format '" + m.format + "' not recognized (csv or rawf32)");
    if (!j["n"].is_number_integer() || j["n"].get<int64_t>() < 1)
        throw InputError("manifest 'n' must be a positive integer");
    if (!j["dim"].is_number_integer() || j["dim"].get<int64_t>() < 1)
        throw InputError("manifest 'dim' must be a positive integer");
    m.n = j["n"].get<int64_t>();
    m.dim = j["dim"].get<int64_t>();
    if (j.contains("labels")) {
        if (!j["labels"].is_string()) throw InputError("manifest 'labels' must be a path string");
        m.labels = resolve(j["labels"].get<std::string>());
    }
    if (j.contains("label_column")) {
        if (!j["label_column"].is_number_integer() || j["label_column"].get<int64_t>() < 0)
            throw InputError("manifest 'label_column' must be a non-negative integer");
        m.label_column = static_cast<int>(j["label_column"].get<int64_t>());
        if (!m.labels || *m.labels != m.features)
            throw InputError(
                "manifest 'label_column' requires 'labels' to point at the features file");
        if (m.format != "csv") throw InputError("manifest 'label_column' requires csv format");
    }
    if (m.labels && *m.labels == m.features && !m.label_column)
        throw InputError("labels inside the features file need an explicit 'label_column'");
    return m;
}

/// Features plus (when labels were declared) the dense-label remap table:
/// label_map[k] is the original value of class k, in first-appearance order.
struct LoadedFeatures {
    FeatureMatrix features;
    std::vector<int64_t> label_map;
};

namespace detail {

struct CsvContents {
    Eigen::MatrixXd values;
    std::vector<int64_t> column_labels;  // filled when a label column was cut out
};

inline CsvContents read_csv_features(const std::filesystem::path& path,
                                     std::optional<int> label_column) {
    const std::string text = read_file(path);
    std::vector<std::string> lines;
    for (auto& l : split_lines(text)) {
        if (!trimmed(l).empty()) lines.push_back(l);
    }
    if (lines.empty()) throw InputError(path.string() + " is empty");

    // Header heuristic: a first line with any non-numeric cell is a header.
    size_t first = 0;
    {
        bool numeric = true;
        double dummy;
        for (const auto& cell : split_csv(lines[0]))
            numeric = numeric && try_parse_double(cell, dummy);
        if (!numeric) first = 1;
    }
    if (first >= lines.size()) throw InputError(path.string() + " has a header but no data rows");

    const size_t total_cols = split_csv(lines[first]).size();
    if (label_column && (*label_column < 0 || static_cast<size_t>(*label_column) >= total_cols))
        throw InputError("label column " + std::to_string(*label_column) + " out of range for " +
                         std::to_string(total_cols) + " csv columns");
    const size_t feat_cols = label_column ? total_cols - 1 : total_cols;
    if (feat_cols == 0) throw InputError(path.string() + " has no feature columns");

    CsvContents out;
    const size_t rows = lines.size() - first;
    out.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(feat_cols));
    for (size_t r = 0; r < rows; ++r) {
        const auto cells = split_csv(lines[first + r]);
        if (cells.size() != total_cols)
            throw InputError(path.string() + " row " + std::to_string(r) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(total_cols));
        size_t c_out = 0;
        for (size_t c = 0; c < cells.size(); ++c) {
            const std::string where = path.string() + " row " + std::to_string(r) + ", column " +
                                      std::to_string(c);
            if (label_column && c == static_cast<size_t>(*label_column)) {
                out.column_labels.push_back(parse_int64(cells[c], where));
            } else {
                out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c_out++)) =
                    parse_double(cells[c], where);
            }
        }
    }
    return out;
}

inline Eigen::MatrixXd read_rawf32_features(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    ByteReader r(buf, path.string());
    const std::string magic = r.bytes(4);
    if (magic != "OODS")
        throw InputError(path.string() + " has bad magic '" + magic +
                         "': not a raw feature file (expected OODS)");
    const uint32_t n = r.u32();
    const uint32_t dim = r.u32();
    r.u32();  // reserved
    if (n == 0 || dim == 0) throw InputError(path.string() + " declares an empty matrix");
    const size_t payload = static_cast<size_t>(n) * dim * 4;
    if (r.remaining() != payload)
        throw InputError(path.string() + " payload is " + std::to_string(r.remaining()) +
                         " bytes, header implies " + std::to_string(payload));
    Eigen::MatrixXd out(n, dim);
    for (uint32_t i = 0; i < n; ++i) {
        for (uint32_t j = 0; j < dim; ++j) {
            float v;
            r.read(&v, 4);
            out(i, j) = static_cast<double>(v);
        }
    }
    return out;
}

inline std::vector<int64_t> read_label_lines(const std::filesystem::path& path) {
    std::vector<int64_t> out;
    size_t lineno = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++lineno;
        const std::string t = trimmed(line);
        if (t.empty()) continue;
        out.push_back(parse_int64(t, path.string() + " line " + std::to_string(lineno)));
    }
    return out;
}

// First-appearance-order remap of arbitrary integer labels onto 0..K-1.
inline std::pair<Eigen::VectorXi, std::vector<int64_t>> remap_labels(
    const std::vector<int64_t>& raw) {
    std::vector<int64_t> order;
    Eigen::VectorXi dense(static_cast<Eigen::Index>(raw.size()));
    for (size_t i = 0; i < raw.size(); ++i) {
        int id = -1;
        for (size_t k = 0; k < order.size(); ++k)
            if (order[k] == raw[i]) {
                id = static_cast<int>(k);
                break;
            }
        if (id < 0) {
            id = static_cast<int>(order.size());
            order.push_back(raw[i]);
        }
        dense[static_cast<Eigen::Index>(i)] = id;
    }
    return {std::move(dense), std::move(order)};
}

}  // namespace detail

inline LoadedFeatures load_features(const DatasetManifest& m) {
    Eigen::MatrixXd values;
    std::vector<int64_t> raw_labels;
    bool have_labels = false;

    if (m.format == "csv") {
        detail::CsvContents csv = detail::read_csv_features(m.features, m.label_column);
        values = std::move(csv.values);
        if (m.label_column) {
            raw_labels = std::move(csv.column_labels);
            have_labels = true;
        }
    } else {
        values = detail::read_rawf32_features(m.features);
    }

    if (values.rows() != m.n || values.cols() != m.dim)
        throw InputError(m.features.string() + " contains a " + std::to_string(values.rows()) +
                         "x" + std::to_string(values.cols()) + " matrix, manifest declares " +
                         std::to_string(m.n) + "x" + std::to_string(m.dim));

    if (m.labels && !m.label_column) {
        raw_labels = detail::read_label_lines(*m.labels);
        if (raw_labels.size() != static_cast<size_t>(m.n))
            throw InputError(m.labels->string() + " has " + std::to_string(raw_labels.size()) +
                             " labels, manifest declares n=" + std::to_string(m.n));
        have_labels = true;
    }

    if (!have_labels) return LoadedFeatures{FeatureMatrix::unlabeled(std::move(values)), {}};
    auto [dense, order] = detail::remap_labels(raw_labels);
    return LoadedFeatures{FeatureMatrix::with_labels(std::move(values), std::move(dense)),
                          std::move(order)};
}

inline LoadedFeatures load_features(const std::filesystem::path& manifest_path) {
    return load_features(read_manifest(manifest_path));
}

// Writers (used by tests and by anyone preparing datasets by hand).

inline void save_features_csv(const std::filesystem::path& path, const Eigen::MatrixXd& values) {
    std::string out;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            if (j) out += ',';
            out += format_double(values(i, j));
        }
        out += '\n';
    }
    detail::atomic_write(path, out);
}

inline void save_features_rawf32(const std::filesystem::path& path, const Eigen::MatrixXd& values) {
    std::string buf;
    buf.reserve(16 + static_cast<size_t>(values.size()) * 4);
    detail::append_bytes(buf, "OODS", 4);
    detail::append_u32(buf, static_cast<uint32_t>(values.rows()));
    detail::append_u32(buf, static_cast<uint32_t>(values.cols()));
    detail::append_u32(buf, 0);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            const float v = static_cast<float>(values(i, j));
            detail::append_bytes(buf, &v, 4);
        }
    }
    detail::atomic_write(path, buf);
}

inline void save_labels(const std::filesystem::path& path, const std::vector<int64_t>& labels) {
    std::string out;
    for (int64_t v : labels) out += std::to_string(v) + "\n";
    detail::atomic_write(path, out);
}

inline void write_manifest(const std::filesystem::path& path, const std::string& features_rel,
                           const std::string& format, int64_t n, int64_t dim,
                           std::optional<std::string> labels_rel = std::nullopt,
                           std::optional<int> label_column = std::nullopt) {
    nlohmann::ordered_json j;
    j["features"] = features_rel;
    j["format"] = format;
    j["n"] = n;
    j["dim"] = dim;
    if (labels_rel) j["labels"] = *labels_rel;
    if (label_column) j["label_column"] = *label_column;
    detail::atomic_write(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Model file (binary, versioned, checksummed)
// ---------------------------------------------------------------------------

/// A fitted suite plus its provenance. `label_map` maps dense class ids back
/// to the user's original label values; creation metadata survives round
/// trips so save(load(f)) == f byte for byte.
struct ModelData {
    GaussianSuite suite;
    std::vector<int64_t> label_map;
    int64_t created_unix = 0;
    std::string creator;
};

inline void save_model(const std::filesystem::path& path, const ModelData& model) {
    const GaussianSuite& s = model.suite;
    const Eigen::Index d = s.dim();
    const int k = s.class_count();

    std::string buf;
    detail::append_bytes(buf, "OODM", 4);
    detail::append_u32(buf, kModelSchemaVersion);
    detail::append_u64(buf, static_cast<uint64_t>(d));
    detail::append_u64(buf, static_cast<uint64_t>(k));
    detail::append_f64(buf, s.shared_factor.ridge);
    detail::append_f64(buf, s.background_factor.ridge);
    detail::append_u64(buf, s.fingerprint);
    detail::append_i64(buf, model.created_unix);
    detail::append_u32(buf, static_cast<uint32_t>(model.creator.size()));
    detail::append_bytes(buf, model.creator.data(), model.creator.size());
    detail::append_u32(buf, static_cast<uint32_t>(model.label_map.size()));
    for (int64_t v : model.label_map) detail::append_i64(buf, v);
    for (int c = 0; c < k; ++c) detail::append_i64(buf, s.class_counts[c]);
    for (int c = 0; c < k; ++c)
        for (Eigen::Index j = 0; j < d; ++j) detail::append_f64(buf, s.class_means(c, j));
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) detail::append_f64(buf, s.shared_cov.mat()(i, j));
    for (Eigen::Index j = 0; j < d; ++j) detail::append_f64(buf, s.background_mean[j]);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) detail::append_f64(buf, s.background_cov.mat()(i, j));

    Fnv1a h;
    h.update(buf.data(), buf.size());
    detail::append_u64(buf, h.digest());
    detail::atomic_write(path, buf);
}

inline ModelData load_model(const std::filesystem::path& path) {
    const std::string buf = detail::read_file(path);
    const std::string what = "model file " + path.string();
    if (buf.size() < 16 || buf.compare(0, 4, "OODM") != 0)
        throw InputError(what + " is not a model file (bad magic)");
    {
        Fnv1a h;
        h.update(buf.data(), buf.size() - 8);
        uint64_t stored;
        std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
        if (h.digest() != stored) throw InputError(what + " is corrupt: checksum mismatch");
    }
    detail::ByteReader r(buf, what);
    r.bytes(4);
    const uint32_t version = r.u32();
    if (version > kModelSchemaVersion)
        throw InputError(what + " has schema version " + std::to_string(version) +
                         ", newer than supported " + std::to_string(kModelSchemaVersion));
    const auto d = static_cast<Eigen::Index>(r.u64());
    const auto k = static_cast<Eigen::Index>(r.u64());
    if (d < 1 || k < 1) throw InputError(what + " declares an empty model");
    const double shared_ridge = r.f64();
    const double background_ridge = r.f64();
    const uint64_t fingerprint = r.u64();
    ModelData model{GaussianSuite{Eigen::MatrixXd(), Eigen::VectorXi(),
                                  SymMatrix(Eigen::MatrixXd::Identity(1, 1)), SpdFactorization{},
                                  Eigen::VectorXd(), SymMatrix(Eigen::MatrixXd::Identity(1, 1)),
                                  SpdFactorization{}, 0},
                    {}, 0, ""};
    model.created_unix = r.i64();
    model.creator = r.bytes(r.u32());
    const uint32_t map_len = r.u32();
    model.label_map.resize(map_len);
    for (uint32_t i = 0; i < map_len; ++i) model.label_map[i] = r.i64();

    Eigen::VectorXi counts(k);
    for (Eigen::Index c = 0; c < k; ++c) counts[c] = static_cast<int>(r.i64());
    Eigen::MatrixXd means(k, d);
    for (Eigen::Index c = 0; c < k; ++c)
        for (Eigen::Index j = 0; j < d; ++j) means(c, j) = r.f64();
    Eigen::MatrixXd shared(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) shared(i, j) = r.f64();
    Eigen::VectorXd bg_mean(d);
    for (Eigen::Index j = 0; j < d; ++j) bg_mean[j] = r.f64();
    Eigen::MatrixXd background(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) background(i, j) = r.f64();
    if (r.remaining() != 8) throw InputError(what + " has trailing bytes");

    SymMatrix shared_cov(std::move(shared));
    SymMatrix background_cov(std::move(background));
    SpdFactorization shared_factor =
        factorize_with_ridge(shared_cov, shared_ridge, "shared covariance");
    SpdFactorization background_factor =
        factorize_with_ridge(background_cov, background_ridge, "background covariance");
    model.suite = GaussianSuite{std::move(means),      std::move(counts),
                                std::move(shared_cov), std::move(shared_factor),
                                std::move(bg_mean),    std::move(background_cov),
                                std::move(background_factor), fingerprint};
    return model;
}

// ---------------------------------------------------------------------------
// Score CSV
// ---------------------------------------------------------------------------

inline void save_scores(const std::filesystem::path& path, const ScoreVector& scores) {
    std::string out;
    out += "# ood-scope scores 1\n";
    out += "# scorer=" + to_string(scores.scorer) + "\n";
    out += "# model=" + format_hex_u64(scores.model_fingerprint) + "\n";
    out += "# shared_ridge=" + format_double(scores.shared_ridge) + "\n";
    out += "# background_ridge=" + format_double(scores.background_ridge) + "\n";
    if (scores.pmd) out += "# pmd=" + scores.pmd->str() + "\n";
    out += "index,score\n";
    for (Eigen::Index i = 0; i < scores.scores.size(); ++i)
        out += std::to_string(i) + "," + format_double(scores.scores[i]) + "\n";
    detail::atomic_write(path, out);
}

inline ScoreVector load_scores(const std::filesystem::path& path) {
    const auto lines = detail::split_lines(detail::read_file(path));
    const std::string what = "score file " + path.string();
    if (lines.empty() || detail::trimmed(lines[0]) != "# ood-scope scores 1")
        throw InputError(what + " is not a score file (missing '# ood-scope scores 1' line)");

    // Metadata comments are optional so score files can be written by hand;
    // absent keys fall back to scorer=md and a zero fingerprint.
    ScoreVector sv;
    size_t row = 1;
    for (; row < lines.size(); ++row) {
        const std::string line = detail::trimmed(lines[row]);
        if (line.empty()) continue;
        if (line[0] != '#') break;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = detail::trimmed(line.substr(1, eq - 1));
        const std::string value = detail::trimmed(line.substr(eq + 1));
        if (key == "scorer") {
            sv.scorer = scorer_from_string(value);
        } else if (key == "model") {
            char* end = nullptr;
            sv.model_fingerprint = std::strtoull(value.c_str(), &end, 16);
            if (end != value.c_str() + value.size())
                throw InputError(what + ": bad model fingerprint '" + value + "'");
        } else if (key == "shared_ridge") {
            sv.shared_ridge = detail::parse_double(value, what + " shared_ridge");
        } else if (key == "background_ridge") {
            sv.background_ridge = detail::parse_double(value, what + " background_ridge");
        } else if (key == "pmd") {
            sv.pmd = parse_pmd_selector(value);
        } else {
            throw InputError(what + " has unknown header key '" + key + "'");
        }
    }
    if (row >= lines.size() || detail::trimmed(lines[row]) != "index,score")
        throw InputError(what + " is missing the 'index,score' column header");
    ++row;

    std::vector<double> values;
    for (; row < lines.size(); ++row) {
        const std::string line = detail::trimmed(lines[row]);
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 2)
            throw InputError(what + " row " + std::to_string(values.size()) + " is malformed");
        const int64_t idx =
            detail::parse_int64(cells[0], what + " row " + std::to_string(values.size()));
        if (idx != static_cast<int64_t>(values.size()))
            throw InputError(what + ": index " + std::to_string(idx) + " out of order (expected " +
                             std::to_string(values.size()) + ")");
        values.push_back(
            detail::parse_double(cells[1], what + " row " + std::to_string(values.size())));
    }
    if (values.empty()) throw InputError(what + " has no score rows");
    sv.scores = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    return sv;
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json histogram_json(const Histogram& h) {
    return nlohmann::ordered_json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

inline nlohmann::ordered_json eval_report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["auroc"] = r.auroc;
    j["n_ind"] = r.n_ind;
    j["n_ood"] = r.n_ood;
    j["scorer"] = to_string(r.scorer);
    j["model_fingerprint"] = format_hex_u64(r.model_fingerprint);
    j["ind_hist"] = histogram_json(r.ind_hist);
    j["ood_hist"] = histogram_json(r.ood_hist);
    return j;
}

inline nlohmann::ordered_json sim_config_json(const SimConfig& c) {
    nlohmann::ordered_json j;
    j["dim"] = c.dim;
    j["sigma"] = c.sigma;
    j["ind_means"] = c.ind_means;
    j["ood_means"] = c.ood_means;
    j["n_train_per_class"] = c.n_train_per_class;
    j["n_test_per_class"] = c.n_test_per_class;
    j["seed"] = c.seed;
    return j;
}

/// Parses a simulation config, filling defaults for absent keys.
inline SimConfig parse_sim_config(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("sim config must be a JSON object");
    static const std::vector<std::string> allowed = {
        "dim",       "sigma", "ind_means", "ood_means", "n_train_per_class",
        "n_test_per_class", "seed"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const auto& a : allowed) ok = ok || key == a;
        if (!ok) throw InputError("sim config has unknown key '" + key + "'");
    }
    SimConfig c;
    try {
        if (j.contains("dim")) c.dim = j["dim"].get<int>();
        if (j.contains("sigma")) c.sigma = j["sigma"].get<double>();
        if (j.contains("ind_means")) c.ind_means = j["ind_means"].get<std::vector<double>>();
        if (j.contains("ood_means")) c.ood_means = j["ood_means"].get<std::vector<double>>();
        if (j.contains("n_train_per_class"))
            c.n_train_per_class = j["n_train_per_class"].get<int>();
        if (j.contains("n_test_per_class")) c.n_test_per_class = j["n_test_per_class"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("sim config has a mistyped value: ") + e.what());
    }
    c.validate();
    return c;
}

inline SimConfig load_sim_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("sim config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_sim_config(j);
}

inline nlohmann::ordered_json study_report_json(const StudyReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["config"] = sim_config_json(r.config);
    j["rng_algorithm"] = r.rng_algorithm;
    j["model_fingerprint"] = format_hex_u64(r.model_fingerprint);
    j["shared_ridge"] = r.shared_ridge;
    j["background_ridge"] = r.background_ridge;
    j["auroc_md"] = r.auroc_md();
    j["auroc_rmd"] = r.auroc_rmd();
    j["md_eval"] = eval_report_json(r.md_eval);
    j["rmd_eval"] = eval_report_json(r.rmd_eval);
    if (r.eigen_report) j["suggested_split"] = r.eigen_report->suggested_split;
    return j;
}

// ---------------------------------------------------------------------------
// CSV reports (eigen-dimension diagnostics, sweep curves)
// ---------------------------------------------------------------------------

inline void save_eigen_csv(const std::filesystem::path& path, const EigenReport& report,
                           uint64_t model_fingerprint) {
    std::string out;
    out += "# ood-scope eigen 1\n";
    out += "# model=" + format_hex_u64(model_fingerprint) + "\n";
    out += "# suggested_split=" + std::to_string(report.suggested_split) + "\n";
    out +=
        "d,lambda,ind_md_mean,ind_md_q10,ind_md_q90,ood_md_mean,ood_md_q10,ood_md_q90,"
        "ind_rmd_mean,ind_rmd_q10,ind_rmd_q90,ood_rmd_mean,ood_rmd_q10,ood_rmd_q90\n";
    for (size_t d = 0; d < report.per_dim.size(); ++d) {
        const EigenDimStats& s = report.per_dim[d];
        out += std::to_string(d + 1);
        for (double v : {s.lambda, s.ind_md_mean, s.ind_md_q10, s.ind_md_q90, s.ood_md_mean,
                         s.ood_md_q10, s.ood_md_q90, s.ind_rmd_mean, s.ind_rmd_q10, s.ind_rmd_q90,
                         s.ood_rmd_mean, s.ood_rmd_q10, s.ood_rmd_q90})
            out += "," + format_double(v);
        out += '\n';
    }
    detail::atomic_write(path, out);
}

/// Sweep rows: d, AUROC for head(d), AUROC for tail(d). The tail column is
/// blank at d=D where the tail selector is empty.
inline void save_sweep_csv(const std::filesystem::path& path,
                           const std::vector<double>& head_auroc,
                           const std::vector<double>& tail_auroc, uint64_t model_fingerprint) {
    if (tail_auroc.size() + 1 != head_auroc.size())
        throw InputError("sweep: tail curve must have one fewer point than head");
    std::string out;
    out += "# ood-scope pmd-sweep 1\n";
    out += "# model=" + format_hex_u64(model_fingerprint) + "\n";
    out += "d,auroc_head,auroc_tail\n";
    for (size_t d = 0; d < head_auroc.size(); ++d) {
        out += std::to_string(d + 1) + "," + format_double(head_auroc[d]) + ",";
        if (d < tail_auroc.size()) out += format_double(tail_auroc[d]);
        out += '\n';
    }
    detail::atomic_write(path, out);
}

}  // namespace oodscope
