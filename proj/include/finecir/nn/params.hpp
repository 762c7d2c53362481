#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecir/nn/tensor.hpp"

namespace finecir::nn {

/// Portable uniform/normal draws on top of mt19937_64. The standard
/// distributions are implementation-defined, which would make seeds
/// non-reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        // Box-Muller; one draw per call keeps the stream easy to reason about.
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    std::uint64_t next() { return gen_(); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 gen_;
};

struct Param {
    Var var;
    bool trainable = true;
    bool decay = true;
};

/// Named, ordered parameter collection. Names are dotted paths
/// ("composer.layer0.self.wq") and define the checkpoint layout.
class ParamStore {
public:
    Var add(const std::string& name, Mat init, bool decay = true) {
        if (params_.count(name)) throw std::logic_error("duplicate parameter " + name);
        Var v(std::move(init), true);
        params_.emplace(name, Param{v, true, decay});
        return v;
    }

    Var xavier(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-a, a);
        return add(name, std::move(m));
    }

    Var normal(const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng,
               bool decay = true) {
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
        return add(name, std::move(m), decay);
    }

    Var zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        return add(name, Mat::Zero(rows, cols), false);
    }
    Var ones(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        return add(name, Mat::Ones(rows, cols), false);
    }

    const Var& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no parameter " + name);
        return it->second.var;
    }
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    /// Marks every parameter whose name starts with `prefix`.
    void set_trainable(const std::string& prefix, bool trainable) {
        for (auto& [name, p] : params_)
            if (name.rfind(prefix, 0) == 0) p.trainable = trainable;
    }

    void zero_grad() {
        for (auto& [_, p] : params_) p.var.zero_grad();
    }

    std::map<std::string, Param>& entries() { return params_; }
    const std::map<std::string, Param>& entries() const { return params_; }
    std::size_t size() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.var.value().size());
        return n;
    }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [name, p] : params_) {
            const Mat& m = p.var.value();
            std::vector<double> data;
            data.reserve(static_cast<std::size_t>(m.size()));
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
            j[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
        }
        return j;
    }

    /// Overwrites values in place; the stored set of names and shapes must
    /// match exactly.
    void load_json(const nlohmann::json& j) {
        if (j.size() != params_.size())
            throw std::runtime_error("checkpoint has " + std::to_string(j.size()) + " parameters, model has " +
                                     std::to_string(params_.size()));
        for (auto& [name, p] : params_) {
            if (!j.contains(name)) throw std::runtime_error("checkpoint missing parameter " + name);
            const auto& e = j.at(name);
            const auto rows = e.at("rows").get<Eigen::Index>();
            const auto cols = e.at("cols").get<Eigen::Index>();
            Mat& m = p.var.mutable_value();
            if (rows != m.rows() || cols != m.cols())
                throw std::runtime_error("shape mismatch for parameter " + name);
            const auto& data = e.at("data");
            if (data.size() != static_cast<std::size_t>(rows * cols))
                throw std::runtime_error("data length mismatch for parameter " + name);
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
        }
    }

private:
    std::map<std::string, Param> params_;
};

}  // namespace finecir::nn
