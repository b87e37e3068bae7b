#include "densedyn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "densedyn/layers.hpp"
#include "densedyn/parallel.hpp"

namespace densedyn {

void DscConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("DscConfig: " + msg); };
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (image_size < 1) fail("image_size must be >= 1");
  if (conv_layers < 1) fail("conv_layers must be >= 1");
  if (conv_channels < 1) fail("conv_channels must be >= 1");
  if (pool_out < 1) fail("pool_out must be >= 1");
  if (pool_out > image_size) {
    fail("pool_out " + std::to_string(pool_out) + " exceeds image_size " + std::to_string(image_size) +
         "; the pooled flatten width would not be a whole pooling of the input");
  }
  if (fc_width < 1) fail("fc_width must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p must lie in [0, 1)");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) fail("learning_rate must be > 0");
}

namespace {

void he_normal(Tensor& t, std::size_t fan_in, Prng& prng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& x : t.data()) x = prng.normal() * stddev;
}

void relu_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_inplace(Tensor& t) { relu_inplace(t.data().data(), t.size()); }

}  // namespace

DscNetwork::DscNetwork(const DscConfig& config, Prng& prng) : config_(config) {
  config_.validate();
  const std::size_t c = config_.conv_channels;
  for (std::size_t l = 0; l < config_.conv_layers; ++l) {
    Parameter w("conv" + std::to_string(l + 1) + ".weight", Tensor({c, c, 3, 3}));
    he_normal(w.value, c * 9, prng);
    params_.push_back(std::move(w));
    params_.emplace_back("conv" + std::to_string(l + 1) + ".bias", Tensor({c}));
  }
  const std::size_t dims[4] = {config_.flatten_width(), config_.fc_width, config_.fc_width, config_.num_classes};
  for (std::size_t k = 0; k < 3; ++k) {
    Parameter w("fc" + std::to_string(k + 1) + ".weight", Tensor({dims[k + 1], dims[k]}));
    he_normal(w.value, dims[k], prng);
    params_.push_back(std::move(w));
    params_.emplace_back("fc" + std::to_string(k + 1) + ".bias", Tensor({dims[k + 1]}));
  }
}

DscNetwork build_network(const DscConfig& config, Prng& prng) {
  config.validate();
  DscNetwork net(config, prng);
  std::size_t expected = 0;
  for (const auto& layer : net.summary()) expected += layer.params;
  if (net.parameter_count() != expected) throw std::logic_error("build_network: parameter count mismatch");
  return net;
}

std::vector<Parameter*> DscNetwork::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> DscNetwork::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t DscNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void DscNetwork::require_input(const Tensor& batch) const {
  const std::size_t s = config_.image_size;
  if (batch.rank() != 4 || batch.dim(1) != config_.conv_channels || batch.dim(2) != s || batch.dim(3) != s) {
    throw ShapeError("DscNetwork: expected input [N, " + std::to_string(config_.conv_channels) + ", " +
                     std::to_string(s) + ", " + std::to_string(s) + "], got " + shape_to_string(batch.shape()));
  }
}

Tensor DscNetwork::forward(const Tensor& batch, Mode mode, Prng* prng, ActivationSnapshot* snapshot) const {
  require_input(batch);
  if (mode == Mode::kTrain && prng == nullptr && config_.dropout_p > 0.0) {
    throw std::invalid_argument("DscNetwork::forward: train mode needs a PRNG for dropout");
  }
  const std::size_t n = batch.dim(0), c = config_.conv_channels, s = config_.image_size;
  const std::size_t plane = c * s * s;
  const std::size_t p = config_.pool_out, side = config_.probe_side();

  Tensor pooled({n, config_.flatten_width()});
  if (snapshot != nullptr) {
    snapshot->conv.assign(config_.conv_layers, Tensor({n, c, side, side}));
  }
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> a(batch.data().begin() + i * plane, batch.data().begin() + (i + 1) * plane);
    std::vector<double> b(plane);
    for (std::size_t l = 0; l < config_.conv_layers; ++l) {
      kernels::conv3x3_forward(a.data(), c, s, s, conv_weight(l).value.data().data(),
                               conv_bias(l).value.data().data(), c, b.data());
      relu_inplace(b.data(), plane);
      if (snapshot != nullptr) {
        kernels::adaptive_avg_pool(b.data(), c, s, s, side, side,
                                   snapshot->conv[l].data().data() + i * c * side * side);
      }
      std::swap(a, b);
    }
    kernels::adaptive_avg_pool(a.data(), c, s, s, p, p, pooled.data().data() + i * config_.flatten_width());
  });

  const bool train = mode == Mode::kTrain;
  Tensor h1 = linear(pooled, fc_weight(0).value, fc_bias(0).value);
  relu_inplace(h1);
  if (train) h1 = dropout(h1, config_.dropout_p, *prng, true).output;
  Tensor h2 = linear(h1, fc_weight(1).value, fc_bias(1).value);
  relu_inplace(h2);
  if (snapshot != nullptr) snapshot->hidden = h2;
  if (train) h2 = dropout(h2, config_.dropout_p, *prng, true).output;
  Tensor logits = linear(h2, fc_weight(2).value, fc_bias(2).value);
  if (snapshot != nullptr) snapshot->logits = logits;
  return logits;
}

double DscNetwork::loss_and_grad(const Tensor& batch, std::span<const int> labels, Prng& prng) {
  require_input(batch);
  const std::size_t n = batch.dim(0), c = config_.conv_channels, s = config_.image_size;
  const std::size_t plane = c * s * s;
  const std::size_t layers = config_.conv_layers;
  const std::size_t p = config_.pool_out, flat = config_.flatten_width();
  if (labels.size() != n) throw ShapeError("loss_and_grad: label count does not match batch");

  // Slot 0 holds the input, slot l the post-ReLU output of conv layer l.
  std::vector<double> acts(n * (layers + 1) * plane);
  Tensor pooled({n, flat});
  parallel_for(n, [&](std::size_t i) {
    double* base = acts.data() + i * (layers + 1) * plane;
    std::copy(batch.data().begin() + i * plane, batch.data().begin() + (i + 1) * plane, base);
    for (std::size_t l = 0; l < layers; ++l) {
      double* out = base + (l + 1) * plane;
      kernels::conv3x3_forward(base + l * plane, c, s, s, conv_weight(l).value.data().data(),
                               conv_bias(l).value.data().data(), c, out);
      relu_inplace(out, plane);
    }
    kernels::adaptive_avg_pool(base + layers * plane, c, s, s, p, p, pooled.data().data() + i * flat);
  });

  Tensor h1 = linear(pooled, fc_weight(0).value, fc_bias(0).value);
  relu_inplace(h1);
  DropoutResult d1 = dropout(h1, config_.dropout_p, prng, true);
  Tensor h2 = linear(d1.output, fc_weight(1).value, fc_bias(1).value);
  relu_inplace(h2);
  DropoutResult d2 = dropout(h2, config_.dropout_p, prng, true);
  Tensor logits = linear(d2.output, fc_weight(2).value, fc_bias(2).value);
  LossResult loss = softmax_cross_entropy(logits, labels);

  LinearGrads g3 = linear_backward(d2.output, fc_weight(2).value, loss.grad);
  fc_weight(2).grad = std::move(g3.weight);
  fc_bias(2).grad = std::move(g3.bias);
  Tensor g_h2 = relu_backward(h2, dropout_backward(g3.input, d2.mask));
  LinearGrads g2 = linear_backward(d1.output, fc_weight(1).value, g_h2);
  fc_weight(1).grad = std::move(g2.weight);
  fc_bias(1).grad = std::move(g2.bias);
  Tensor g_h1 = relu_backward(h1, dropout_backward(g2.input, d1.mask));
  LinearGrads g1 = linear_backward(pooled, fc_weight(0).value, g_h1);
  fc_weight(0).grad = std::move(g1.weight);
  fc_bias(0).grad = std::move(g1.bias);

  const std::size_t wsize = c * c * 9;
  std::vector<double> sample_gw(n * layers * wsize);
  std::vector<double> sample_gb(n * layers * c);
  parallel_for(n, [&](std::size_t i) {
    const double* base = acts.data() + i * (layers + 1) * plane;
    std::vector<double> g(plane, 0.0), gin(plane);
    kernels::adaptive_avg_pool_backward(g1.input.data().data() + i * flat, c, s, s, p, p, g.data());
    for (std::size_t l = layers; l-- > 0;) {
      const double* out = base + (l + 1) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        if (!(out[k] > 0.0)) g[k] = 0.0;
      }
      const bool need_input = l > 0;
      if (need_input) std::fill(gin.begin(), gin.end(), 0.0);
      kernels::conv3x3_backward(base + l * plane, c, s, s, conv_weight(l).value.data().data(), g.data(), c,
                                need_input ? gin.data() : nullptr, sample_gw.data() + (i * layers + l) * wsize,
                                sample_gb.data() + (i * layers + l) * c);
      std::swap(g, gin);
    }
  });
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor& gw = conv_weight(l).grad;
    Tensor& gb = conv_bias(l).grad;
    gw.fill(0.0);
    gb.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* sw = sample_gw.data() + (i * layers + l) * wsize;
      const double* sb = sample_gb.data() + (i * layers + l) * c;
      for (std::size_t k = 0; k < wsize; ++k) gw[k] += sw[k];
      for (std::size_t k = 0; k < c; ++k) gb[k] += sb[k];
    }
  }
  return loss.loss;
}

Tensor DscNetwork::forward_reference(
    const Tensor& batch, Mode mode, Prng* prng,
    const std::function<void(const LayerSummary&, const Tensor&)>& observer) const {
  require_input(batch);
  const bool train = mode == Mode::kTrain;
  if (train && prng == nullptr && config_.dropout_p > 0.0) {
    throw std::invalid_argument("forward_reference: train mode needs a PRNG for dropout");
  }
  int counter = 0;
  auto report = [&](const std::string& kind, const Tensor& t, std::size_t params) {
    ++counter;
    if (observer) observer({kind + "-" + std::to_string(counter), t.shape(), params}, t);
  };

  Tensor x = batch;
  for (std::size_t l = 0; l < config_.conv_layers; ++l) {
    x = conv2d(x, conv_weight(l).value, conv_bias(l).value);
    report("Conv2d", x, conv_weight(l).value.size() + conv_bias(l).value.size());
    x = relu(x);
    report("ReLU", x, 0);
  }
  x = adaptive_avg_pool(x, config_.pool_out, config_.pool_out);
  report("AdaptiveAvgPool2d", x, 0);
  x = std::move(x).reshaped({batch.dim(0), config_.flatten_width()});
  for (std::size_t k = 0; k < 3; ++k) {
    x = linear(x, fc_weight(k).value, fc_bias(k).value);
    report("Linear", x, fc_weight(k).value.size() + fc_bias(k).value.size());
    if (k == 2) break;
    x = relu(x);
    report("ReLU", x, 0);
    Prng unused(0);
    x = dropout(x, config_.dropout_p, train ? *prng : unused, train).output;
    report("Dropout", x, 0);
  }
  return x;
}

std::vector<LayerSummary> DscNetwork::summary(std::size_t batch) const {
  std::vector<LayerSummary> rows;
  const std::size_t c = config_.conv_channels, s = config_.image_size;
  int counter = 0;
  auto add = [&](const std::string& kind, Shape shape, std::size_t params) {
    rows.push_back({kind + "-" + std::to_string(++counter), std::move(shape), params});
  };
  for (std::size_t l = 0; l < config_.conv_layers; ++l) {
    add("Conv2d", {batch, c, s, s}, c * c * 9 + c);
    add("ReLU", {batch, c, s, s}, 0);
  }
  add("AdaptiveAvgPool2d", {batch, c, config_.pool_out, config_.pool_out}, 0);
  const std::size_t dims[4] = {config_.flatten_width(), config_.fc_width, config_.fc_width, config_.num_classes};
  for (std::size_t k = 0; k < 3; ++k) {
    add("Linear", {batch, dims[k + 1]}, dims[k] * dims[k + 1] + dims[k + 1]);
    if (k == 2) break;
    add("ReLU", {batch, dims[k + 1]}, 0);
    add("Dropout", {batch, dims[k + 1]}, 0);
  }
  return rows;
}

Tensor DscNetwork::conv_weight_matrix() const {
  const std::size_t c = config_.conv_channels;
  const std::size_t row = c * c * 9 + c;
  Tensor out({config_.conv_layers, row});
  for (std::size_t l = 0; l < config_.conv_layers; ++l) {
    const auto w = conv_weight(l).value.data();
    const auto b = conv_bias(l).value.data();
    std::copy(w.begin(), w.end(), out.data().begin() + l * row);
    std::copy(b.begin(), b.end(), out.data().begin() + l * row + w.size());
  }
  return out;
}

Tensor make_batch(const DenseDataset& dataset, std::span<const std::size_t> indices, std::size_t channels) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no exemplars selected");
  const std::size_t s = dataset.image_size();
  const std::size_t plane = s * s;
  Tensor batch({indices.size(), channels, s, s});
  double* out = batch.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = dataset.exemplars.at(indices[i]).gray.data();
    for (std::size_t ch = 0; ch < channels; ++ch) {
      std::copy(src.begin(), src.end(), out + (i * channels + ch) * plane);
    }
  }
  return batch;
}

Evaluation evaluation_from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                       std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("evaluation: size mismatch");
  if (truth.empty()) throw std::invalid_argument("evaluation: empty dataset");
  Evaluation ev;
  ev.count = truth.size();
  ev.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ev.confusion.at(static_cast<std::size_t>(truth[i])).at(static_cast<std::size_t>(predicted[i]))++;
  }
  std::size_t correct = 0;
  ev.per_class_recall.assign(num_classes, 0.0);
  for (std::size_t k = 0; k < num_classes; ++k) {
    correct += ev.confusion[k][k];
    std::size_t row = 0;
    for (auto v : ev.confusion[k]) row += v;
    ev.per_class_recall[k] = row ? static_cast<double>(ev.confusion[k][k]) / static_cast<double>(row) : 0.0;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.count);
  return ev;
}

namespace {

constexpr std::size_t kEvalBatch = 64;

int argmax_row(const double* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return static_cast<int>(best);
}

}  // namespace

Evaluation evaluate(const DscNetwork& net, const DenseDataset& dataset, std::span<const std::size_t> indices) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(dataset.exemplars.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  if (indices.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t k = net.config().num_classes;
  std::vector<int> truth, predicted;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const auto chunk = indices.subspan(start, std::min(kEvalBatch, indices.size() - start));
    Tensor logits = net.forward(make_batch(dataset, chunk, net.config().conv_channels), Mode::kEval, nullptr);
    std::vector<int> labels;
    for (auto idx : chunk) labels.push_back(dataset.exemplars[idx].label);
    loss_sum += softmax_cross_entropy(logits, labels).loss * static_cast<double>(chunk.size());
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      truth.push_back(labels[i]);
      predicted.push_back(argmax_row(logits.data().data() + i * k, k));
    }
  }
  Evaluation ev = evaluation_from_predictions(truth, predicted, k);
  ev.loss = loss_sum / static_cast<double>(indices.size());
  return ev;
}

namespace {

void probe_snapshot(const DscNetwork& net, const DenseDataset& dataset, std::span<const std::size_t> probe,
                    EpochTrace& trace) {
  const auto& cfg = net.config();
  const std::size_t pcount = probe.size();
  const std::size_t c = cfg.conv_channels, side = cfg.probe_side();
  trace.hidden_probe = Tensor({pcount, cfg.fc_width});
  trace.logits_probe = Tensor({pcount, cfg.num_classes});
  trace.conv_probe.assign(cfg.conv_layers, Tensor({pcount, c, side, side}));
  trace.probe_labels.clear();
  for (auto idx : probe) trace.probe_labels.push_back(dataset.exemplars[idx].label);

  for (std::size_t start = 0; start < pcount; start += kEvalBatch) {
    const auto chunk = probe.subspan(start, std::min(kEvalBatch, pcount - start));
    ActivationSnapshot snap;
    net.forward(make_batch(dataset, chunk, c), Mode::kEval, nullptr, &snap);
    auto copy_rows = [&](const Tensor& src, Tensor& dst) {
      const std::size_t row = src.size() / chunk.size();
      std::copy(src.data().begin(), src.data().end(), dst.data().begin() + start * row);
    };
    copy_rows(snap.hidden, trace.hidden_probe);
    copy_rows(snap.logits, trace.logits_probe);
    for (std::size_t l = 0; l < cfg.conv_layers; ++l) copy_rows(snap.conv[l], trace.conv_probe[l]);
  }
  round_to_float(trace.hidden_probe);
  round_to_float(trace.logits_probe);
  for (auto& t : trace.conv_probe) round_to_float(t);
}

}  // namespace

TrainResult train(DscNetwork& net, const DenseDataset& dataset, const DscConfig& config, TraceSink* sink,
                  const ProgressCallback& progress) {
  config.validate();
  if (dataset.exemplars.empty()) throw std::invalid_argument("train: empty dataset");
  if (dataset.num_classes() != config.num_classes) {
    throw std::invalid_argument("train: dataset has " + std::to_string(dataset.num_classes()) +
                                " classes but the network expects " + std::to_string(config.num_classes));
  }
  if (dataset.image_size() != config.image_size) {
    throw std::invalid_argument("train: dataset images are " + std::to_string(dataset.image_size()) +
                                " px but the network expects " + std::to_string(config.image_size));
  }
  std::vector<std::size_t> order = dataset.indices(Split::kTrain);
  if (order.empty()) throw std::invalid_argument("train: no training exemplars");
  const std::vector<std::size_t> train_idx = order;
  const std::vector<std::size_t> heldout_idx = dataset.indices(Split::kHeldout);
  const std::vector<std::size_t> probe_idx = dataset.probe_indices();

  Optimizer optimizer(config.optimizer);
  const Prng root(config.seed);
  Prng shuffle_rng = root.derive(1);
  Prng dropout_rng = root.derive(2);
  auto params = net.parameters();

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::span<const std::size_t> chunk(order.data() + start,
                                               std::min(config.batch_size, order.size() - start));
      std::vector<int> labels;
      for (auto idx : chunk) labels.push_back(dataset.exemplars[idx].label);
      const double loss =
          net.loss_and_grad(make_batch(dataset, chunk, config.conv_channels), labels, dropout_rng);
      optimizer.step(params);
      loss_sum += loss * static_cast<double>(chunk.size());
    }

    EpochTrace trace;
    trace.epoch = static_cast<int>(epoch);
    trace.train_loss = loss_sum / static_cast<double>(order.size());
    const Evaluation ev = evaluate(net, dataset, train_idx);
    trace.accuracy = ev.accuracy;
    trace.per_class_recall = ev.per_class_recall;
    if (!heldout_idx.empty()) {
      const Evaluation hv = evaluate(net, dataset, heldout_idx);
      trace.heldout_accuracy = hv.accuracy;
      trace.heldout_loss = hv.loss;
    }
    EpochStats stats{trace.epoch, trace.train_loss, trace.accuracy, trace.heldout_accuracy, trace.per_class_recall};
    result.curve.push_back(stats);
    if (sink != nullptr) {
      if (!probe_idx.empty()) probe_snapshot(net, dataset, probe_idx, trace);
      trace.conv_weights = net.conv_weight_matrix();
      round_to_float(trace.conv_weights);
      sink->record(trace);
    }
    if (progress) progress(stats);
  }
  return result;
}

}  // namespace densedyn
