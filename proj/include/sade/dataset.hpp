#pragma once

// Dataset directory layout:
//   edges.tsv              "src<TAB>dst" per line, 0-indexed; undirected edges may appear once
//   features.csv           N lines of F comma-separated floats
//   labels.txt             N lines, one integer class each
//   splits/split_<k>.json  {"train": [...], "val": [...], "test": [...]}

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sade/graph.hpp"
#include "sade/matrix.hpp"

namespace sade {

namespace fs = std::filesystem;

template <typename T>
struct Dataset {
    Graph graph;
    Matrix<T> features;
    LabelVector labels;
    SplitSet splits;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::ifstream open_input(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DatasetError("missing file: " + p.string());
    return in;
}

inline bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::uint64_t parse_index(const std::string& tok, const fs::path& p, std::size_t lineno) {
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end == tok.c_str() || errno != 0 || v < 0) {
        throw DatasetError(p.string() + ":" + std::to_string(lineno) + ": bad index '" + tok + "'");
    }
    return static_cast<std::uint64_t>(v);
}

inline std::vector<Edge> read_edges(const fs::path& p) {
    auto in = open_input(p);
    std::vector<Edge> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line) || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string a, b;
        if (!(ss >> a >> b)) throw DatasetError(p.string() + ":" + std::to_string(lineno) + ": expected src<TAB>dst");
        const auto s = parse_index(a, p, lineno);
        const auto d = parse_index(b, p, lineno);
        if (s > UINT32_MAX || d > UINT32_MAX) throw DatasetError(p.string() + ": index out of range");
        pairs.push_back({static_cast<NodeId>(s), static_cast<NodeId>(d)});
    }
    return pairs;
}

template <typename T>
Matrix<T> read_features(const fs::path& p) {
    auto in = open_input(p);
    std::vector<T> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (blank(line)) continue;
        std::size_t c = 0;
        const char* s = line.c_str();
        while (true) {
            char* end = nullptr;
            const double v = std::strtod(s, &end);
            if (end == s) throw DatasetError(p.string() + ":" + std::to_string(rows + 1) + ": bad float");
            if (!std::isfinite(v)) throw DatasetError(p.string() + ": non-finite feature value");
            values.push_back(static_cast<T>(v));
            ++c;
            while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
            if (*end == ',') {
                s = end + 1;
                continue;
            }
            if (*end != '\0') throw DatasetError(p.string() + ":" + std::to_string(rows + 1) + ": trailing garbage");
            break;
        }
        if (rows == 0) cols = c;
        if (c != cols) throw DatasetError(p.string() + ":" + std::to_string(rows + 1) + ": ragged row");
        ++rows;
    }
    return Matrix<T>(rows, cols, std::move(values));
}

inline std::vector<std::uint32_t> read_labels(const fs::path& p) {
    auto in = open_input(p);
    std::vector<std::uint32_t> y;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        const auto v = parse_index(line, p, lineno);
        y.push_back(static_cast<std::uint32_t>(v));
    }
    return y;
}

inline Split read_split(const fs::path& p) {
    auto in = open_input(p);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(p.string() + ": " + e.what());
    }
    Split s;
    try {
        s.train = j.at("train").get<std::vector<std::size_t>>();
        s.val = j.at("val").get<std::vector<std::size_t>>();
        s.test = j.at("test").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(p.string() + ": " + e.what());
    }
    return s;
}

}  // namespace detail

inline nlohmann::json split_to_json(const Split& s) {
    return nlohmann::json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

/// Reads split files in numeric order of <k>. A missing splits/ directory
/// yields an empty set.
inline SplitSet load_splits(const fs::path& dir, std::size_t num_nodes) {
    SplitSet out;
    const auto sdir = dir / "splits";
    if (!fs::exists(sdir)) return out;
    static const std::regex name_re(R"(split_(\d+)\.json)");
    std::vector<std::pair<std::size_t, fs::path>> found;
    for (const auto& entry : fs::directory_iterator(sdir)) {
        std::smatch m;
        const auto name = entry.path().filename().string();
        if (std::regex_match(name, m, name_re)) found.emplace_back(std::stoull(m[1].str()), entry.path());
    }
    std::sort(found.begin(), found.end());
    for (const auto& [k, p] : found) {
        auto s = detail::read_split(p);
        try {
            validate_split(s, num_nodes);
        } catch (const std::exception& e) {
            throw DatasetError(p.string() + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Loads a dataset directory. Edges are symmetrized and deduplicated.
template <typename T>
Dataset<T> load_graph(const fs::path& dir) {
    auto pairs = detail::read_edges(dir / "edges.tsv");
    auto features = detail::read_features<T>(dir / "features.csv");
    auto raw_labels = detail::read_labels(dir / "labels.txt");
    if (features.rows() != raw_labels.size()) {
        throw DatasetError("row-count mismatch: features.csv has " + std::to_string(features.rows()) +
                           " rows, labels.txt has " + std::to_string(raw_labels.size()));
    }
    const std::size_t n = raw_labels.size();
    Dataset<T> ds;
    try {
        ds.graph = Graph(n, std::move(pairs), true);
    } catch (const std::out_of_range& e) {
        throw DatasetError(std::string("edges.tsv: ") + e.what());
    }
    ds.features = std::move(features);
    ds.labels = LabelVector::infer(std::move(raw_labels));
    ds.splits = load_splits(dir, n);
    return ds;
}

/// Writes a dataset directory; each undirected edge is listed once.
template <typename T>
void write_dataset(const fs::path& dir, const Dataset<T>& ds) {
    fs::create_directories(dir / "splits");
    {
        std::ofstream out(dir / "edges.tsv");
        for (const auto& e : ds.graph.edges()) {
            if (e.src <= e.dst || !ds.graph.has_edge(e.dst, e.src)) out << e.src << '\t' << e.dst << '\n';
        }
    }
    {
        std::ofstream out(dir / "features.csv");
        out.precision(17);
        for (std::size_t i = 0; i < ds.features.rows(); ++i) {
            auto r = ds.features.row(i);
            for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << r[c];
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "labels.txt");
        for (auto l : ds.labels.labels) out << l << '\n';
    }
    for (std::size_t k = 0; k < ds.splits.size(); ++k) {
        std::ofstream out(dir / "splits" / ("split_" + std::to_string(k) + ".json"));
        out << split_to_json(ds.splits[k]).dump() << '\n';
    }
}

struct SplitRatios {
    double train = 0.48;
    double val = 0.32;
    double test = 0.20;
};

/// Independent random partitions. Sizes are floor(ratio * n) for train and
/// val; the rounding residue goes to test.
inline SplitSet make_splits(std::size_t n, SplitRatios r, std::size_t num_splits, std::uint64_t seed) {
    if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
        throw std::invalid_argument("make_splits: ratios must be non-negative and sum to 1");
    }
    const auto n_train = static_cast<std::size_t>(std::floor(r.train * double(n) + 1e-9));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(r.val * double(n) + 1e-9)));
    std::mt19937_64 rng(seed);
    SplitSet out;
    std::vector<std::size_t> perm(n);
    for (std::size_t s = 0; s < num_splits; ++s) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        Split sp;
        sp.train.assign(perm.begin(), perm.begin() + std::ptrdiff_t(n_train));
        sp.val.assign(perm.begin() + std::ptrdiff_t(n_train), perm.begin() + std::ptrdiff_t(n_train + n_val));
        sp.test.assign(perm.begin() + std::ptrdiff_t(n_train + n_val), perm.end());
        out.push_back(std::move(sp));
    }
    return out;
}

}  // namespace sade
