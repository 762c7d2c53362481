#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "finecir/model/checkpoint.hpp"
#include "finecir/synth/shapes.hpp"
#include "finecir/train/trainer.hpp"
#include "support/properties.hpp"

using namespace finecir;
using namespace finecir::testing;

namespace {

ModelConfig small_model(std::uint64_t seed = 3) {
    ModelConfig c;
    c.feature_dim = synth::feature_dim();
    c.seed = seed;
    return c;
}

struct SmallTask {
    synth::World world = synth::make_world(120, 4);
    DatasetManifest manifest;
    std::vector<train::TrainingExample> train;

    SmallTask() {
        synth::SynthOptions o;
        o.train = 400;
        o.test = 40;
        o.seed = 4;
        manifest = synth::make_manifest(world, o);
        train = synth::examples(manifest, world.store, Split::train);
    }
};

train::TrainConfig quick(long steps) {
    train::TrainConfig c;
    c.steps = steps;
    c.batch_size = 16;
    c.seed = 2;
    return c;
}

double max_param_diff(const nn::ParamStore& a, const nn::ParamStore& b) {
    double d = 0.0;
    for (const auto& [name, p] : a.entries())
        d = std::max(d, (p.var.value() - b.at(name).value()).cwiseAbs().maxCoeff());
    return d;
}

}  // namespace

// ------------------------------------------------------------------- losses

TEST(BbcLoss, MatchesBruteForceOnRandomInstances) {
    const auto s = loss_sweep(100, 1);
    EXPECT_EQ(s.instances, 100);
    EXPECT_LT(s.max_dev, 1e-6);
    EXPECT_EQ(s.b1, 0.0);
    EXPECT_LT(s.uniform_dev, 1e-9);
}

TEST(BbcLoss, TwoByTwoIdentityClosedForm) {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_NEAR(train::bbc_loss_value(id, id, 1.0), std::log1p(std::exp(-1.0)), 1e-12);
    EXPECT_NEAR(train::bbc_loss_value(id, id, 1.0), 0.313262, 1e-6);
}

TEST(BbcLoss, UniformBatchOfFourIsLnFour) {
    const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(4, 3, 1.0 / std::sqrt(3.0));
    EXPECT_NEAR(train::bbc_loss_value(same, same, 0.07), 1.3862943611198906, 1e-9);
}

TEST(BbcLoss, InvariantUnderConsistentRowPermutation) {
    nn::Rng rng(8);
    for (int n = 0; n < 20; ++n) {
        const long b = 2 + static_cast<long>(rng.below(7));
        const auto c = unit_rows(rng, b, 5), t = unit_rows(rng, b, 5);
        std::vector<long> perm(static_cast<std::size_t>(b));
        std::iota(perm.begin(), perm.end(), 0L);
        rng.shuffle(perm);
        Eigen::MatrixXd pc(b, 5), pt(b, 5);
        for (long i = 0; i < b; ++i) {
            pc.row(i) = c.row(perm[static_cast<std::size_t>(i)]);
            pt.row(i) = t.row(perm[static_cast<std::size_t>(i)]);
        }
        EXPECT_NEAR(train::bbc_loss_value(c, t, 0.1), train::bbc_loss_value(pc, pt, 0.1), 1e-6);
        EXPECT_GE(train::bbc_loss_value(c, t, 0.1), 0.0);
    }
}

TEST(BbcLoss, SmallerTemperatureLowersLossWhenDiagonalDominates) {
    nn::Rng rng(12);
    for (int n = 0; n < 10; ++n) {
        // Targets are slightly perturbed copies, so each diagonal wins its row.
        const auto c = unit_rows(rng, 5, 8);
        Eigen::MatrixXd t = c + 0.05 * unit_rows(rng, 5, 8);
        for (long i = 0; i < 5; ++i) t.row(i).normalize();
        double prev = std::numeric_limits<double>::infinity();
        for (double tau : {1.0, 0.5, 0.2, 0.1, 0.05}) {
            const double l = train::bbc_loss_value(c, t, tau);
            EXPECT_LT(l, prev) << "tau " << tau;
            prev = l;
        }
    }
}

TEST(BbcLoss, RejectsBadInputs) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_THROW(train::bbc_loss_value(a, a, 0.0), train::LossError);
    EXPECT_THROW(train::bbc_loss_value(a, a, -1.0), train::LossError);
    EXPECT_THROW(train::bbc_loss_value(a, Eigen::MatrixXd::Identity(3, 3), 1.0), train::LossError);
    EXPECT_THROW(train::bbc_loss_value(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2), 1.0), train::LossError);
    EXPECT_THROW(train::parse_loss("mse"), train::LossError);
}

TEST(KlLoss, MatchesBruteForce) {
    const auto s = loss_sweep(100, 2);
    EXPECT_LT(s.kl_max_dev, 1e-6);
    nn::Rng rng(3);
    const auto c = unit_rows(rng, 3, 4), t = unit_rows(rng, 3, 4);
    EXPECT_NEAR(train::kl_loss_value(c, t, 0.3), brute_bbc(c, t, 0.3), 1e-9);
    const auto one = unit_rows(rng, 1, 4);
    EXPECT_NEAR(train::kl_loss_value(one, one, 0.07), 0.0, 1e-15);
    const Eigen::MatrixXd same = one.replicate(4, 1);
    EXPECT_NEAR(train::kl_loss_value(same, same, 0.07), std::log(4.0), 1e-9);
}

TEST(Losses, GradientsWithRespectToRowsAndTemperature) {
    nn::Rng rng(4);
    for (auto kind : {train::LossKind::bbc, train::LossKind::kl}) {
        nn::ParamStore store;
        auto c = store.add("c", unit_rows(rng, 4, 6));
        auto t = store.add("t", unit_rows(rng, 4, 6));
        auto log_tau = store.add("log_tau", nn::Mat::Constant(1, 1, std::log(0.3)));
        const auto rep = check_gradients(store, [&] { return train::batch_loss(kind, c, t, log_tau); });
        EXPECT_LT(rep.max_rel, 1e-3) << train::to_string(kind) << ": " << rep.worst;
    }
}

// ------------------------------------------------------------------ trainer

TEST(Trainer, ZeroLearningRateLeavesParametersAndReturnsLoss) {
    SmallTask task;
    FineCirModel model(small_model()), ref(small_model());
    auto cfg = quick(1);
    cfg.lr = 0.0;
    train::Trainer tr(model, cfg);
    std::vector<const train::TrainingExample*> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(&task.train[static_cast<std::size_t>(i)]);
    const double before = tr.evaluate(batch);
    EXPECT_EQ(tr.step(batch), before);
    EXPECT_EQ(max_param_diff(model.params(), ref.params()), 0.0);
}

TEST(Trainer, IdenticalStepsGiveIdenticalParameters) {
    SmallTask task;
    FineCirModel a(small_model()), b(small_model());
    train::Trainer ta(a, quick(1)), tb(b, quick(1));
    std::vector<const train::TrainingExample*> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(&task.train[static_cast<std::size_t>(i)]);
    for (int s = 0; s < 2; ++s) EXPECT_EQ(ta.step(batch), tb.step(batch));
    EXPECT_EQ(max_param_diff(a.params(), b.params()), 0.0);
    EXPECT_EQ(ta.steps_taken(), 2);
}

TEST(Trainer, NonFiniteLossAbortsWithDiagnostics) {
    SmallTask task;
    FineCirModel model(small_model());
    auto cfg = quick(1);
    cfg.tau = 1e-310;
    train::Trainer tr(model, cfg);
    std::vector<const train::TrainingExample*> batch{&task.train[0], &task.train[1]};
    try {
        tr.step(batch);
        FAIL() << "expected NonFiniteLoss";
    } catch (const train::NonFiniteLoss& e) {
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
    }
}

TEST(Training, LossTrendsDownOverTwoHundredSteps) {
    SmallTask task;
    FineCirModel model(small_model());
    const auto s = train::run_training(model, task.train, quick(200));
    ASSERT_EQ(s.losses.size(), 200u);
    auto mean = [&](std::size_t from, std::size_t n) {
        return std::accumulate(s.losses.begin() + static_cast<long>(from),
                               s.losses.begin() + static_cast<long>(from + n), 0.0) /
               static_cast<double>(n);
    };
    EXPECT_LT(s.last_loss, s.first_loss);
    EXPECT_LT(mean(180, 20), mean(0, 20));
    EXPECT_LT(mean(100, 100), mean(0, 100));
}

TEST(Training, MetricsLogIsByteIdenticalAcrossReruns) {
    SmallTask task;
    auto run = [&] {
        FineCirModel model(small_model());
        std::ostringstream log;
        auto cfg = quick(15);
        cfg.val_every = 5;
        train::run_training(model, task.train, cfg, &log,
                            [&](long step) { return nlohmann::ordered_json{{"probe", step * 2}}; });
        return log.str();
    };
    const auto a = run();
    EXPECT_EQ(a, run());
    std::istringstream in(a);
    std::string line;
    int records = 0, vals = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        ++records;
        if (j.contains("val")) ++vals;
        if (j.contains("wall_ms")) {
            EXPECT_EQ(j["wall_ms"].get<double>(), 0.0);
        }
    }
    EXPECT_EQ(records, 1 + 15 + 3);
    EXPECT_EQ(vals, 3);
}

TEST(Training, LearnedTemperatureMovesOnlyWhenEnabled) {
    SmallTask task;
    FineCirModel a(small_model()), b(small_model());
    auto fixed = quick(20);
    auto learned = quick(20);
    learned.learn_tau = true;
    learned.lr = 1e-2;
    EXPECT_EQ(train::run_training(a, task.train, fixed).temperature, 0.07);
    EXPECT_NE(train::run_training(b, task.train, learned).temperature, 0.07);
}

TEST(Training, ZeroStepsKeepsInitialization) {
    SmallTask task;
    FineCirModel model(small_model()), ref(small_model());
    std::ostringstream log;
    const auto s = train::run_training(model, task.train, quick(0), &log);
    EXPECT_EQ(s.steps, 0);
    EXPECT_EQ(max_param_diff(model.params(), ref.params()), 0.0);
    EXPECT_EQ(nlohmann::json::parse(log.str())["event"], "start");
}

TEST(Training, SignatureRecordsReducedQuerySequence) {
    auto cfg = small_model();
    FineCirModel full(cfg);
    cfg.ablations.no_sg = true;
    FineCirModel no_sg(cfg);
    EXPECT_EQ(full.signature()["query_sequence_length"], cfg.queries + cfg.max_entities + cfg.seq_len);
    EXPECT_EQ(no_sg.signature()["query_sequence_length"], cfg.queries + cfg.seq_len);
    EXPECT_EQ(no_sg.signature()["entity_segment"], false);
    EXPECT_EQ(no_sg.aggregator(), nullptr);
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(train::TrainConfig::from_json({{"batch", 4}}), ConfigError);
    EXPECT_THROW(train::TrainConfig::from_json({{"batch_size", 0}}), ConfigError);
    EXPECT_THROW(train::TrainConfig::from_json({{"tau", 0.0}}), ConfigError);
    EXPECT_THROW(train::TrainConfig::from_json({{"loss", "mse"}}), std::invalid_argument);
    const auto c = train::TrainConfig::from_json({{"batch_size", 4}, {"loss", "kl"}});
    EXPECT_EQ(c.batch_size, 4);
    EXPECT_EQ(train::TrainConfig::from_json(c.to_json()).to_json(), c.to_json());
}

// -------------------------------------------------------------- checkpoints

class CheckpointRoundTrip : public ::testing::TestWithParam<std::string> {};

TEST_P(CheckpointRoundTrip, ReproducesForwardOutputsExactly) {
    SmallTask task;
    auto cfg = small_model(9);
    const auto variant = GetParam();
    if (variant == "no_sg") cfg.ablations.no_sg = true;
    if (variant == "no_qformer") cfg.ablations.no_qformer = true;
    if (variant == "no_sc_agg") cfg.ablations.no_sc_agg = true;
    FineCirModel model(cfg);
    train::run_training(model, task.train, quick(5));

    const auto path = (std::filesystem::temp_directory_path() / ("finecir_ck_" + variant + ".json")).string();
    save_checkpoint(path, model, 0.07, 5);
    const auto ck = load_checkpoint(path);
    std::filesystem::remove(path);
    EXPECT_EQ(ck.step, 5);
    EXPECT_EQ(ck.model->signature(), model.signature());

    double worst = 0.0;
    nn::NoGradGuard guard;
    for (std::size_t i = 0; i < 10; ++i) {
        const auto& ex = task.train[i];
        worst = std::max(worst, (model.compose_query(ex.reference, ex.text).value() -
                                 ck.model->compose_query(ex.reference, ex.text).value())
                                    .cwiseAbs()
                                    .maxCoeff());
        worst = std::max(worst, (model.encode_target(ex.target).value() - ck.model->encode_target(ex.target).value())
                                    .cwiseAbs()
                                    .maxCoeff());
    }
    EXPECT_EQ(worst, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Variants, CheckpointRoundTrip, ::testing::Values("full", "no_sg", "no_qformer", "no_sc_agg"));

TEST(Checkpoint, RejectsForeignAndMismatchedFiles) {
    FineCirModel model(small_model());
    auto j = nlohmann::json(checkpoint_json(model, 0.07, 0));
    auto bad = j;
    bad["format"] = "other";
    EXPECT_THROW(checkpoint_from_json(bad), CheckpointError);
    bad = j;
    bad["version"] = 99;
    EXPECT_THROW(checkpoint_from_json(bad), CheckpointError);
    bad = j;
    bad["params"].erase(bad["params"].begin());
    EXPECT_THROW(checkpoint_from_json(bad), CheckpointError);
    EXPECT_THROW(load_checkpoint("/nonexistent/ck.json"), CheckpointError);
}
