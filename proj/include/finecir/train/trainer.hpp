#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecir/model/config.hpp"
#include "finecir/model/finecir_model.hpp"
#include "finecir/nn/adamw.hpp"
#include "finecir/train/loss.hpp"

namespace finecir::train {

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 0.05;
    double tau = 0.07;
    bool learn_tau = false;
    long steps = 200;
    std::string loss = "bbc";
    std::uint64_t seed = 0;
    long val_every = 0;  // 0: no periodic validation

    /// Hyperparameters of the full-scale reference run.
    static TrainConfig full_scale() {
        TrainConfig c;
        c.batch_size = 128;
        c.lr = 2e-5;
        return c;
    }

    void validate() const {
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (!(tau > 0.0)) throw ConfigError("train.tau must be positive");
        if (lr < 0.0) throw ConfigError("train.lr must be nonnegative");
        if (steps < 0) throw ConfigError("train.steps must be nonnegative");
        parse_loss(loss);
    }

    nlohmann::ordered_json to_json() const {
        return {{"batch_size", batch_size}, {"lr", lr},     {"weight_decay", weight_decay}, {"tau", tau},
                {"learn_tau", learn_tau},   {"steps", steps}, {"loss", loss},             {"seed", seed},
                {"val_every", val_every}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        reject_unknown_keys(j,
                            {"batch_size", "lr", "weight_decay", "tau", "learn_tau", "steps", "loss", "seed",
                             "val_every"},
                            "train");
        TrainConfig c;
        read_key(j, "batch_size", c.batch_size);
        read_key(j, "lr", c.lr);
        read_key(j, "weight_decay", c.weight_decay);
        read_key(j, "tau", c.tau);
        read_key(j, "learn_tau", c.learn_tau);
        read_key(j, "steps", c.steps);
        read_key(j, "loss", c.loss);
        read_key(j, "seed", c.seed);
        read_key(j, "val_every", c.val_every);
        c.validate();
        return c;
    }
};

struct TrainingExample {
    ImageInput reference;
    std::string text;
    ImageInput target;
};

/// Owns optimizer state and the (optionally learnable) temperature.
class Trainer {
public:
    Trainer(FineCirModel& model, TrainConfig cfg)
        : model_(model),
          cfg_(std::move(cfg)),
          kind_(parse_loss(cfg_.loss)),
          opt_({cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay}),
          tau_opt_({cfg_.lr, 0.9, 0.999, 1e-8, 0.0}) {
        cfg_.validate();
        log_tau_ = loss_params_.add("loss.log_tau", nn::Mat::Constant(1, 1, std::log(cfg_.tau)), false);
        loss_params_.set_trainable("loss.", cfg_.learn_tau);
    }

    const TrainConfig& config() const { return cfg_; }
    double temperature() const { return std::exp(log_tau_.item()); }
    long steps_taken() const { return opt_.steps(); }

    /// Loss of a batch without updating anything.
    double evaluate(const std::vector<const TrainingExample*>& batch) const {
        nn::NoGradGuard guard;
        return forward(batch).item();
    }

    /// One optimizer step; returns the loss before the update.
    double step(const std::vector<const TrainingExample*>& batch) {
        model_.params().zero_grad();
        loss_params_.zero_grad();
        auto loss = forward(batch);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            std::ostringstream msg;
            msg << "non-finite loss " << value << " at step " << opt_.steps() + 1 << " (batch " << batch.size()
                << ", tau " << temperature() << ")";
            throw NonFiniteLoss(msg.str());
        }
        loss.backward();
        opt_.step(model_.params());
        if (cfg_.learn_tau) tau_opt_.step(loss_params_);
        return value;
    }

private:
    nn::Var forward(const std::vector<const TrainingExample*>& batch) const {
        if (batch.empty()) throw LossError("empty batch");
        std::vector<nn::Var> q, t;
        for (const auto* ex : batch) {
            q.push_back(model_.compose_query(ex->reference, ex->text));
            t.push_back(model_.encode_target(ex->target));
        }
        return batch_loss(kind_, nn::concat_rows(q), nn::concat_rows(t), log_tau_);
    }

    FineCirModel& model_;
    TrainConfig cfg_;
    LossKind kind_;
    nn::AdamW opt_;
    nn::AdamW tau_opt_;
    nn::ParamStore loss_params_;
    nn::Var log_tau_;
};

/// Milliseconds since some origin; injectable so logs can be made byte-stable.
using Clock = std::function<double()>;

inline Clock steady_clock_ms() {
    const auto t0 = std::chrono::steady_clock::now();
    return [t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
}
inline Clock zero_clock() {
    return [] { return 0.0; };
}

struct TrainSummary {
    long steps = 0;
    double first_loss = 0.0;
    double last_loss = 0.0;
    double temperature = 0.0;
    std::vector<double> losses;
};

using Validator = std::function<nlohmann::ordered_json(long step)>;

/// Epoch-shuffled minibatches (seeded); a trailing partial batch is dropped
/// unless the whole set is smaller than one batch. Writes one JSON line per
/// step and one per validation to `metrics`.
inline TrainSummary run_training(FineCirModel& model, const std::vector<TrainingExample>& examples,
                                 const TrainConfig& cfg, std::ostream* metrics = nullptr,
                                 const Validator& validate = nullptr, Clock clock = zero_clock()) {
    cfg.validate();
    TrainSummary summary;
    Trainer trainer(model, cfg);
    summary.temperature = trainer.temperature();
    if (metrics) {
        nlohmann::ordered_json head{{"event", "start"},
                                    {"signature", model.signature()},
                                    {"train", cfg.to_json()},
                                    {"examples", examples.size()}};
        *metrics << head.dump() << '\n';
    }
    if (cfg.steps == 0) return summary;
    if (examples.empty()) throw std::invalid_argument("run_training: no training examples");

    nn::Rng rng(cfg.seed);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), examples.size());
    std::size_t cursor = order.size();
    for (long s = 1; s <= cfg.steps; ++s) {
        if (cursor + b > order.size()) {
            rng.shuffle(order);
            cursor = 0;
        }
        std::vector<const TrainingExample*> batch;
        for (std::size_t i = 0; i < b; ++i) batch.push_back(&examples[order[cursor + i]]);
        cursor += b;
        const double t0 = clock();
        const double loss = trainer.step(batch);
        const double wall = clock() - t0;
        if (s == 1) summary.first_loss = loss;
        summary.last_loss = loss;
        summary.losses.push_back(loss);
        if (metrics) {
            nlohmann::ordered_json rec{{"step", s},
                                       {"loss", loss},
                                       {"lr", cfg.lr},
                                       {"tau", trainer.temperature()},
                                       {"wall_ms", wall}};
            *metrics << rec.dump() << '\n';
        }
        if (validate && cfg.val_every > 0 && s % cfg.val_every == 0) {
            auto v = validate(s);
            if (metrics) *metrics << nlohmann::ordered_json{{"step", s}, {"val", v}}.dump() << '\n';
        }
    }
    if (metrics) metrics->flush();
    summary.steps = cfg.steps;
    summary.temperature = trainer.temperature();
    return summary;
}

}  // namespace finecir::train
