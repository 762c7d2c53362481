#pragma once

// Central finite-difference checks against the autograd gradients of every
// trainable parameter in a store.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "finecir/nn/params.hpp"
#include "finecir/nn/tensor.hpp"

namespace finecir::testing {

struct GradReport {
    double max_rel = 0.0;
    double max_abs = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is zero from dividing by rounding noise.
inline double rel_error(double a, double n, double floor = 1e-6) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// `loss` must rebuild the graph from the store's current values on each
/// call. `stride` > 1 checks every stride-th entry of each parameter.
inline GradReport check_gradients(nn::ParamStore& store, const std::function<nn::Var()>& loss, double h = 1e-5,
                                  std::size_t stride = 1) {
    store.zero_grad();
    loss().backward();
    GradReport rep;
    for (auto& [name, p] : store.entries()) {
        if (!p.trainable) continue;
        const nn::Mat analytic = p.var.grad();
        nn::Mat& w = p.var.mutable_value();
        for (Eigen::Index i = 0; i < w.size(); i += static_cast<Eigen::Index>(stride)) {
            const double keep = w.data()[i];
            double up, down;
            {
                nn::NoGradGuard guard;
                w.data()[i] = keep + h;
                up = loss().item();
                w.data()[i] = keep - h;
                down = loss().item();
            }
            w.data()[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic.data()[i];
            const double r = rel_error(a, numeric);
            ++rep.checked;
            rep.max_abs = std::max(rep.max_abs, std::abs(a - numeric));
            if (r > rep.max_rel) {
                rep.max_rel = r;
                rep.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                            std::to_string(numeric);
            }
        }
    }
    store.zero_grad();
    return rep;
}

inline nn::Mat random_mat(nn::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    nn::Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

}  // namespace finecir::testing
