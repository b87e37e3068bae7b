#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "densedyn/gradcheck.hpp"
#include "densedyn/model.hpp"
#include "oracles.hpp"

using namespace densedyn;

namespace {

DscConfig tiny_config() {
  DscConfig cfg;
  cfg.image_size = 8;
  cfg.pool_out = 4;
  cfg.fc_width = 16;
  return cfg;
}

DenseDataset constant_dataset(std::size_t side, std::size_t copies) {
  DenseDataset ds;
  for (int k = 0; k < 5; ++k) ds.class_names.push_back("c" + std::to_string(k));
  for (int k = 0; k < 5; ++k)
    for (std::size_t n = 0; n < copies; ++n) {
      ImageExemplar e;
      e.gray = Tensor({side, side});
      e.gray.fill(0.1 + 0.2 * k);
      e.label = k;
      ds.exemplars.push_back(std::move(e));
    }
  assign_splits(ds, SplitOptions{0.1, 4}, 1);
  return ds;
}

struct Recorder : TraceSink {
  std::vector<EpochTrace> traces;
  void record(const EpochTrace& t) override { traces.push_back(t); }
};

}  // namespace

TEST(Model, DefaultParameterCountMatchesTable) {
  Prng prng(7);
  const DscNetwork net = build_network(DscConfig{}, prng);
  EXPECT_EQ(net.parameter_count(), 2284969u);
  for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(net.conv_weight(l).value.size() + net.conv_bias(l).value.size(), 84u);
  EXPECT_EQ(net.fc_weight(0).value.size() + net.fc_bias(0).value.size(), 1229824u);
  EXPECT_EQ(net.fc_weight(1).value.size() + net.fc_bias(1).value.size(), 1049600u);
  EXPECT_EQ(net.fc_weight(2).value.size() + net.fc_bias(2).value.size(), 5125u);
}

TEST(Model, MinimalConfigHandCount) {
  DscConfig cfg;
  cfg.fc_width = 1;
  cfg.num_classes = 1;
  cfg.conv_channels = 1;
  cfg.pool_out = 1;
  Prng prng(1);
  EXPECT_EQ(build_network(cfg, prng).parameter_count(), 56u);
}

TEST(Model, ForwardShapesMatchTable) {
  const std::vector<std::pair<std::string, Shape>> table = {
      {"Conv2d-1", {1, 3, 128, 128}},  {"ReLU-2", {1, 3, 128, 128}},  {"Conv2d-3", {1, 3, 128, 128}},
      {"ReLU-4", {1, 3, 128, 128}},    {"Conv2d-5", {1, 3, 128, 128}}, {"ReLU-6", {1, 3, 128, 128}},
      {"Conv2d-7", {1, 3, 128, 128}},  {"ReLU-8", {1, 3, 128, 128}},  {"Conv2d-9", {1, 3, 128, 128}},
      {"ReLU-10", {1, 3, 128, 128}},   {"AdaptiveAvgPool2d-11", {1, 3, 20, 20}},
      {"Linear-12", {1, 1024}},        {"ReLU-13", {1, 1024}},        {"Dropout-14", {1, 1024}},
      {"Linear-15", {1, 1024}},        {"ReLU-16", {1, 1024}},        {"Dropout-17", {1, 1024}},
      {"Linear-18", {1, 5}}};
  Prng prng(7);
  const DscNetwork net = build_network(DscConfig{}, prng);
  Prng data(3);
  const Tensor input = oracle::random_tensor({1, 3, 128, 128}, data, 0.0, 1.0);
  std::vector<LayerSummary> seen;
  const Tensor out = net.forward_reference(input, Mode::kEval, nullptr,
                                           [&](const LayerSummary& s, const Tensor&) { seen.push_back(s); });
  ASSERT_EQ(seen.size(), table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(seen[i].name, table[i].first);
    EXPECT_EQ(seen[i].output_shape, table[i].second) << table[i].first;
  }
  const auto summary = net.summary(1);
  ASSERT_EQ(summary.size(), table.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(summary[i].name, seen[i].name);
    EXPECT_EQ(summary[i].output_shape, seen[i].output_shape);
    EXPECT_EQ(summary[i].params, seen[i].params);
    total += summary[i].params;
  }
  EXPECT_EQ(total, 2284969u);

  ActivationSnapshot snap;
  const Tensor fast = net.forward(input, Mode::kEval, nullptr, &snap);
  EXPECT_LE(oracle::max_abs_diff(fast, out), 1e-10);
  EXPECT_EQ(snap.hidden.shape(), (Shape{1, 1024}));
  EXPECT_EQ(snap.logits.shape(), (Shape{1, 5}));
  ASSERT_EQ(snap.conv.size(), 5u);
  for (const auto& c : snap.conv) EXPECT_EQ(c.shape(), (Shape{1, 3, 32, 32}));
}

TEST(Model, RejectsWrongInputShape) {
  Prng prng(7);
  const DscNetwork net = build_network(tiny_config(), prng);
  EXPECT_THROW(net.forward(Tensor({1, 3, 9, 8}), Mode::kEval, nullptr), ShapeError);
  EXPECT_THROW(net.forward(Tensor({1, 1, 8, 8}), Mode::kEval, nullptr), ShapeError);
}

TEST(Model, RejectsInvalidConfig) {
  DscConfig cfg;
  cfg.pool_out = 200;
  Prng prng(1);
  EXPECT_THROW(build_network(cfg, prng), std::invalid_argument);
  cfg = DscConfig{};
  cfg.dropout_p = 1.0;
  EXPECT_THROW(build_network(cfg, prng), std::invalid_argument);
}

TEST(Model, ZeroNetworkGivesUniformSoftmax) {
  Prng prng(7);
  DscNetwork net = build_network(tiny_config(), prng);
  for (Parameter* p : net.parameters()) p->value.fill(0.0);
  const Tensor input({2, 3, 8, 8});
  const Tensor logits = net.forward(input, Mode::kEval, nullptr);
  for (double v : logits.data()) EXPECT_EQ(v, logits[0]);
  const std::vector<int> labels{0, 3};
  Prng drop(1);
  EXPECT_NEAR(net.loss_and_grad(input, labels, drop), std::log(5.0), 1e-15);
}

TEST(Model, EvalForwardIsDeterministic) {
  Prng prng(7);
  const DscNetwork net = build_network(tiny_config(), prng);
  Prng data(9);
  const Tensor input = oracle::random_tensor({4, 3, 8, 8}, data, 0.0, 1.0);
  EXPECT_EQ(net.forward(input, Mode::kEval, nullptr), net.forward(input, Mode::kEval, nullptr));
}

TEST(Model, FullNetworkGradcheck) {
  Prng prng(7);
  DscNetwork net = build_network(tiny_config(), prng);
  Prng data(5);
  const Tensor input = oracle::random_tensor({3, 3, 8, 8}, data, 0.0, 1.0);
  const std::vector<int> labels{0, 2, 4};
  const auto params = net.parameters();
  // Zero biases put dead-input pixels exactly on the ReLU kink.
  for (Parameter* p : params)
    if (p->value.rank() == 1)
      for (double& v : p->value.data()) v = data.uniform(0.05, 0.15);
  const GradcheckReport report = gradcheck(params, [&](bool) {
    Prng drop(11);
    return net.loss_and_grad(input, labels, drop);
  });
  EXPECT_LE(report.max_relative_error, 1e-4) << report.worst_parameter << "[" << report.worst_index << "] " << report.analytic << " vs " << report.numeric;
  EXPECT_EQ(report.checked, net.parameter_count());
}

TEST(Evaluation, AccuracyIsTraceOverSumAndRecallIdentity) {
  Prng prng(4);
  std::vector<int> truth, pred;
  for (int i = 0; i < 300; ++i) {
    truth.push_back(static_cast<int>(prng.below(5)));
    pred.push_back(static_cast<int>(prng.below(5)));
  }
  const Evaluation ev = evaluation_from_predictions(truth, pred, 5);
  std::size_t diag = 0, total = 0;
  double weighted = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    const std::size_t row = std::accumulate(ev.confusion[k].begin(), ev.confusion[k].end(), std::size_t{0});
    diag += ev.confusion[k][k];
    total += row;
    EXPECT_DOUBLE_EQ(ev.per_class_recall[k], static_cast<double>(ev.confusion[k][k]) / static_cast<double>(row));
    weighted += ev.per_class_recall[k] * static_cast<double>(row) / 300.0;
  }
  EXPECT_EQ(total, 300u);
  EXPECT_DOUBLE_EQ(ev.accuracy, static_cast<double>(diag) / 300.0);
  EXPECT_NEAR(weighted, ev.accuracy, 1e-15);
}

TEST(Evaluation, HandCountedTwoClassToy) {
  const std::vector<int> truth{0, 0, 0, 1, 1}, pred{0, 1, 0, 1, 0};
  const Evaluation ev = evaluation_from_predictions(truth, pred, 2);
  EXPECT_EQ(ev.confusion, (std::vector<std::vector<std::size_t>>{{2, 1}, {1, 1}}));
  EXPECT_DOUBLE_EQ(ev.accuracy, 0.6);
  EXPECT_DOUBLE_EQ(ev.per_class_recall[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(ev.per_class_recall[1], 0.5);
}

TEST(Evaluation, AllCorrectIsDiagonal) {
  const std::vector<int> truth{0, 1, 2, 2};
  const Evaluation ev = evaluation_from_predictions(truth, truth, 3);
  EXPECT_EQ(ev.accuracy, 1.0);
  EXPECT_EQ(ev.confusion[2][2], 2u);
  EXPECT_EQ(ev.confusion[0][1] + ev.confusion[1][0], 0u);
}

TEST(Evaluation, UntrainedNetworkIsNearChance) {
  SynthSpec spec;
  spec.image_size = 32;
  spec.exemplars_per_class = 100;
  const DenseDataset ds = synth_generate(spec, 7);
  DscConfig cfg;
  cfg.image_size = 32;
  cfg.epochs = 0;
  Prng prng(7);
  DscNetwork net = build_network(cfg, prng);
  EXPECT_TRUE(train(net, ds, cfg, nullptr).curve.empty());
  const Evaluation ev = evaluate(net, ds);
  const double sigma = std::sqrt(0.2 * 0.8 / 500.0);
  EXPECT_LE(std::abs(ev.accuracy - 0.2), 3 * sigma) << "accuracy " << ev.accuracy;
  EXPECT_EQ(ev.count, 500u);
}

TEST(Train, ConstantImagesReachFullAccuracy) {
  const DenseDataset ds = constant_dataset(16, 100);
  DscConfig cfg;
  cfg.image_size = 16;
  cfg.pool_out = 8;
  cfg.fc_width = 256;
  cfg.epochs = 20;
  Prng prng(cfg.seed);
  DscNetwork net = build_network(cfg, prng);
  Recorder rec;
  const TrainResult r = train(net, ds, cfg, &rec);
  ASSERT_EQ(r.curve.size(), 20u);
  EXPECT_EQ(r.curve.back().accuracy, 1.0);
  ASSERT_EQ(rec.traces.size(), 20u);
  for (std::size_t e = 0; e < 20; ++e) {
    EXPECT_EQ(rec.traces[e].epoch, static_cast<int>(e));
    EXPECT_EQ(rec.traces[e].accuracy, r.curve[e].accuracy);
    EXPECT_EQ(rec.traces[e].hidden_probe.shape(), (Shape{20, 256}));
    EXPECT_EQ(rec.traces[e].conv_probe.size(), 5u);
    EXPECT_EQ(rec.traces[e].logits_probe.shape(), (Shape{20, 5}));
    EXPECT_EQ(rec.traces[e].conv_weights.shape(), (Shape{5, 84}));
  }
}

TEST(Train, SeedDeterminism) {
  SynthSpec spec;
  spec.image_size = 16;
  spec.exemplars_per_class = 30;
  spec.jitter_px = 1;
  const DenseDataset ds = synth_generate(spec, 3);
  DscConfig cfg;
  cfg.image_size = 16;
  cfg.pool_out = 8;
  cfg.fc_width = 32;
  cfg.epochs = 3;
  auto run = [&] {
    Prng prng(cfg.seed);
    DscNetwork net = build_network(cfg, prng);
    Recorder rec;
    const TrainResult r = train(net, ds, cfg, &rec);
    return std::pair{r, rec.traces};
  };
  const auto [a, ta] = run();
  const auto [b, tb] = run();
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t e = 0; e < a.curve.size(); ++e) {
    EXPECT_EQ(a.curve[e].train_loss, b.curve[e].train_loss);
    EXPECT_EQ(a.curve[e].accuracy, b.curve[e].accuracy);
    EXPECT_EQ(ta[e].hidden_probe, tb[e].hidden_probe);
    EXPECT_EQ(ta[e].conv_weights, tb[e].conv_weights);
  }
}

TEST(Train, RejectsEmptyAndMismatchedDatasets) {
  DscConfig cfg = tiny_config();
  cfg.epochs = 1;
  Prng prng(1);
  DscNetwork net = build_network(cfg, prng);
  DenseDataset empty;
  empty.class_names = {"a", "b", "c", "d", "e"};
  EXPECT_THROW(train(net, empty, cfg, nullptr), std::invalid_argument);
  DenseDataset wrong = constant_dataset(16, 2);
  EXPECT_THROW(train(net, wrong, cfg, nullptr), std::invalid_argument);
}
