#pragma once

#include <cmath>
#include <map>
#include <string>

#include "finecir/nn/params.hpp"

namespace finecir::nn {

struct AdamWOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

/// Adam with decoupled weight decay. Decay is applied only to parameters
/// registered with `decay = true` (weights, not biases or norms).
class AdamW {
public:
    explicit AdamW(AdamWOptions opt = {}) : opt_(opt) {}

    void step(ParamStore& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        for (auto& [name, p] : params.entries()) {
            if (!p.trainable) continue;
            Mat& w = p.var.mutable_value();
            const Mat& g = p.var.grad();
            auto& st = state_[name];
            if (st.m.size() == 0) {
                st.m = Mat::Zero(w.rows(), w.cols());
                st.v = Mat::Zero(w.rows(), w.cols());
            }
            st.m = opt_.beta1 * st.m + (1.0 - opt_.beta1) * g;
            st.v = opt_.beta2 * st.v + (1.0 - opt_.beta2) * g.cwiseProduct(g);
            if (p.decay) w *= 1.0 - opt_.lr * opt_.weight_decay;
            w.array() -= opt_.lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + opt_.eps);
        }
    }

    long steps() const { return t_; }
    AdamWOptions& options() { return opt_; }

private:
    struct Moments {
        Mat m, v;
    };
    AdamWOptions opt_;
    long t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace finecir::nn
