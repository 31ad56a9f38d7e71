#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sade/autodiff.hpp"
#include "sade/matrix.hpp"

namespace sade {

/// Named trainable matrices with gradient buffers and Adam moment slots.
template <typename T>
class ParamStore {
public:
    struct Param {
        std::string name;
        Matrix<T> value;
        Matrix<T> grad;
        Matrix<T> m;  // first moment
        Matrix<T> v;  // second moment
    };

    Matrix<T>& add(const std::string& name, Matrix<T> init) {
        if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
        const auto r = init.rows(), c = init.cols();
        index_[name] = params_.size();
        params_.push_back(Param{name, std::move(init), Matrix<T>(r, c), Matrix<T>(r, c), Matrix<T>(r, c)});
        return params_.back().value;
    }

    [[nodiscard]] bool contains(const std::string& name) const { return index_.count(name) != 0; }
    [[nodiscard]] std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
        return it->second;
    }
    Param& at(const std::string& name) { return params_[index_of(name)]; }
    const Param& at(const std::string& name) const { return params_[index_of(name)]; }
    Param& at(std::size_t i) { return params_[i]; }

    std::vector<Param>& params() noexcept { return params_; }
    const std::vector<Param>& params() const noexcept { return params_; }
    [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }

    void zero_grad() {
        for (auto& p : params_) p.grad.fill(T(0));
    }

    [[nodiscard]] std::size_t num_scalars() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

private:
    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
};

/// Places parameters on a tape as gradient-requiring leaves (once per name)
/// and, after backward, adds the tape gradients into the store.
template <typename T>
class ParamBinder {
public:
    ParamBinder(ParamStore<T>& store, ad::Tape<T>& tape) : store_(store), tape_(tape) {}

    ad::Var operator()(const std::string& name) {
        const auto idx = store_.index_of(name);
        auto it = bound_.find(idx);
        if (it != bound_.end()) return it->second;
        auto v = tape_.leaf(store_.at(idx).value, true);
        bound_.emplace(idx, v);
        return v;
    }

    void collect() {
        for (const auto& [idx, var] : bound_) {
            auto& p = store_.at(idx);
            const auto g = tape_.grad(var);
            for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
        }
    }

    [[nodiscard]] bool is_bound(const std::string& name) const {
        return bound_.count(store_.index_of(name)) != 0;
    }

private:
    ParamStore<T>& store_;
    ad::Tape<T>& tape_;
    std::map<std::size_t, ad::Var> bound_;
};

// Checkpoint file: "SADECKP1", u32 count, then per blob
// u32 name length, name bytes, u64 rows, u64 cols, rows*cols float64 values.
// Native little-endian layout.

using NamedBlobs = std::vector<std::pair<std::string, Matrix<double>>>;

inline void write_checkpoint(const std::filesystem::path& path, const NamedBlobs& blobs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write("SADECKP1", 8);
    const auto count = static_cast<std::uint32_t>(blobs.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (const auto& [name, m] : blobs) {
        const auto len = static_cast<std::uint32_t>(name.size());
        const std::uint64_t rows = m.rows(), cols = m.cols();
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(name.data(), len);
        out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
        out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
        out.write(reinterpret_cast<const char*>(m.data().data()), std::streamsize(m.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

inline NamedBlobs read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SADECKP1", 8) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    NamedBlobs blobs;
    for (std::uint32_t i = 0; i < count && in; ++i) {
        std::uint32_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof len);
        std::string name(len, '\0');
        in.read(name.data(), len);
        std::uint64_t rows = 0, cols = 0;
        in.read(reinterpret_cast<char*>(&rows), sizeof rows);
        in.read(reinterpret_cast<char*>(&cols), sizeof cols);
        if (rows * cols > (std::uint64_t(1) << 34)) throw std::runtime_error("checkpoint blob too large");
        Matrix<double> m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data().data()), std::streamsize(m.size() * sizeof(double)));
        blobs.emplace_back(std::move(name), std::move(m));
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    return blobs;
}

template <typename T>
NamedBlobs to_blobs(const ParamStore<T>& store) {
    NamedBlobs out;
    for (const auto& p : store.params()) out.emplace_back(p.name, p.value.template cast<double>());
    return out;
}

}  // namespace sade
