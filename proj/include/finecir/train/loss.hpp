#pragma once

// In-batch contrastive losses over row-aligned (B, D) token matrices.
// Similarity is the dot product of unit rows (cosine).

#include <cmath>
#include <stdexcept>
#include <string>

#include "finecir/nn/tensor.hpp"

namespace finecir::train {

class LossError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class LossKind { bbc, kl };

inline std::string to_string(LossKind k) { return k == LossKind::bbc ? "bbc" : "kl"; }
inline LossKind parse_loss(const std::string& s) {
    if (s == "bbc") return LossKind::bbc;
    if (s == "kl") return LossKind::kl;
    throw LossError("unknown loss '" + s + "' (expected bbc or kl)");
}

namespace detail {

inline void check_pair(const nn::Var& composed, const nn::Var& targets) {
    if (composed.rows() != targets.rows() || composed.cols() != targets.cols())
        throw LossError("loss: composed (" + std::to_string(composed.rows()) + "x" + std::to_string(composed.cols()) +
                        ") and targets (" + std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) +
                        ") must have equal shapes");
    if (composed.rows() < 1) throw LossError("loss: empty batch");
}

inline nn::Var logits(const nn::Var& composed, const nn::Var& targets, double tau) {
    check_pair(composed, targets);
    if (!(tau > 0.0) || !std::isfinite(tau)) throw LossError("loss: temperature must be positive");
    return nn::scale(nn::matmul(composed, nn::transpose(targets)), 1.0 / tau);
}

/// `log_tau` is a (1,1) parameter; logits are s * exp(-log_tau).
inline nn::Var logits(const nn::Var& composed, const nn::Var& targets, const nn::Var& log_tau) {
    check_pair(composed, targets);
    if (log_tau.rows() != 1 || log_tau.cols() != 1) throw LossError("loss: log temperature must be 1x1");
    if (!std::isfinite(log_tau.item())) throw LossError("loss: temperature must be positive");
    return nn::mul_scalar(nn::matmul(composed, nn::transpose(targets)), nn::exp(nn::scale(log_tau, -1.0)));
}

inline nn::Var identity(Eigen::Index b) { return nn::constant(nn::Mat::Identity(b, b)); }

/// Mean over rows of -log_softmax at the diagonal.
inline nn::Var bbc_from_logits(const nn::Var& z) {
    const auto b = z.rows();
    return nn::scale(nn::sum_all(nn::mul(nn::log_softmax_rows(z), identity(b))), -1.0 / static_cast<double>(b));
}

/// Cross-entropy between one-hot diagonal targets and softmax(z), evaluated
/// as softmax then log.
inline nn::Var kl_from_logits(const nn::Var& z) {
    const auto b = z.rows();
    auto logp = nn::log(nn::softmax_rows(z));
    return nn::scale(nn::sum_all(nn::mul(identity(b), logp)), -1.0 / static_cast<double>(b));
}

}  // namespace detail

inline nn::Var bbc_loss(const nn::Var& composed, const nn::Var& targets, double tau) {
    return detail::bbc_from_logits(detail::logits(composed, targets, tau));
}
inline nn::Var bbc_loss(const nn::Var& composed, const nn::Var& targets, const nn::Var& log_tau) {
    return detail::bbc_from_logits(detail::logits(composed, targets, log_tau));
}
inline nn::Var kl_loss(const nn::Var& composed, const nn::Var& targets, double tau) {
    return detail::kl_from_logits(detail::logits(composed, targets, tau));
}
inline nn::Var kl_loss(const nn::Var& composed, const nn::Var& targets, const nn::Var& log_tau) {
    return detail::kl_from_logits(detail::logits(composed, targets, log_tau));
}

inline nn::Var batch_loss(LossKind kind, const nn::Var& composed, const nn::Var& targets, const nn::Var& log_tau) {
    return kind == LossKind::bbc ? bbc_loss(composed, targets, log_tau) : kl_loss(composed, targets, log_tau);
}

/// Value-only convenience for plain matrices.
inline double bbc_loss_value(const nn::Mat& composed, const nn::Mat& targets, double tau) {
    nn::NoGradGuard guard;
    return bbc_loss(nn::constant(composed), nn::constant(targets), tau).item();
}
inline double kl_loss_value(const nn::Mat& composed, const nn::Mat& targets, double tau) {
    nn::NoGradGuard guard;
    return kl_loss(nn::constant(composed), nn::constant(targets), tau).item();
}

}  // namespace finecir::train
