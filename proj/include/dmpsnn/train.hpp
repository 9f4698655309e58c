#pragma once

// Mini-batch BPTT training with Adam and cosine learning-rate decay.
// Per-sample gradients are computed in parallel and reduced in sample order,
// so results do not depend on the thread count.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dmpsnn/bptt.hpp"
#include "dmpsnn/errors.hpp"
#include "dmpsnn/spiking_layers.hpp"

namespace dmpsnn {

struct Example {
  std::string id;
  InputSequence input;
  std::size_t label = 0;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool cosine = true;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer{};
  SurrogateSpec surrogate{};
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool freeze_memory_readout = false;  // keep W_m fixed (ablation)
  bool record_time = false;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  double wall_time = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> predictions;
};

/// Static-chunk parallel map; fn(i) for i in [0, n).
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t argmax(const Vec& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

inline EvalResult evaluate(const Network& net, const std::vector<Example>& data, std::size_t threads = 1) {
  EvalResult r;
  if (data.empty()) return r;
  std::vector<double> losses(data.size());
  r.predictions.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const Vec logits = network_forward(net, data[i].input).logits;
    losses[i] = cross_entropy(logits, data[i].label);
    r.predictions[i] = argmax(logits);
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    r.loss += losses[i];
    correct += r.predictions[i] == data[i].label ? 1 : 0;
  }
  r.loss /= static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

class Adam {
 public:
  Adam(const Network& net, OptimizerConfig cfg) : cfg_(cfg), m_(Gradients::zeros_like(net)), v_(m_) {}

  void step(Network& net, const Gradients& g, double lr, bool freeze_wm) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](double* w, const double* grad, double* m, double* v, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      auto& p = net.layers[l];
      const auto& G = g.layers[l];
      auto& M = m_.layers[l];
      auto& V = v_.layers[l];
      update(p.W_f.data(), G.W_f.data(), M.W_f.data(), V.W_f.data(), p.W_f.size());
      if (p.d() > 0) {
        if (!freeze_wm) update(p.W_m.data(), G.W_m.data(), M.W_m.data(), V.W_m.data(), p.W_m.size());
        update(p.W_x.data(), G.W_x.data(), M.W_x.data(), V.W_x.data(), p.W_x.size());
        update(&p.b, &G.b, &M.b, &V.b, 1);
      }
      if (p.spec.variant == Variant::recurrent)
        update(p.W_r.data(), G.W_r.data(), M.W_r.data(), V.W_r.data(), p.W_r.size());
    }
  }

 private:
  OptimizerConfig cfg_;
  Gradients m_, v_;
  std::uint64_t t_ = 0;
};

inline double gradient_norm(const Gradients& g) {
  double s = 0.0;
  for (const auto& L : g.layers)
    s += L.W_f.squaredNorm() + L.W_m.squaredNorm() + L.W_x.squaredNorm() + L.b * L.b + L.W_r.squaredNorm();
  return std::sqrt(s);
}

// Fisher-Yates with a fixed draw rule, independent of the standard library's
// distribution implementations.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

using MetricsSink = std::function<void(const EpochMetrics&)>;

/// Trains `net` in place. Emits one train and (if given) one test metrics row
/// per epoch. Throws NumericError on a non-finite loss or gradient.
inline std::vector<EpochMetrics> train(Network& net, const std::vector<Example>& train_set,
                                       const std::vector<Example>* test_set, const TrainConfig& cfg,
                                       const MetricsSink& sink = {}) {
  if (train_set.empty()) throw ConfigError("train: dataset is empty");
  if (cfg.batch_size == 0) throw ConfigError("train: batch size must be positive");
  cfg.surrogate.validate();
  net.validate();
  const ReadoutMode mode = net.config.readout;

  Adam adam(net, cfg.optimizer);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batches_per_epoch = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = std::max<std::size_t>(1, batches_per_epoch * cfg.epochs);
  std::size_t step = 0;
  std::vector<EpochMetrics> history;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return cfg.record_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t bn = std::min(cfg.batch_size, order.size() - b0);
      std::vector<GradientTape> tapes(bn);
      parallel_for(bn, cfg.threads, [&](std::size_t i) {
        const Example& ex = train_set[order[b0 + i]];
        tapes[i] = forward_backward(net, ex.input, ex.label, mode, cfg.surrogate);
      });
      Gradients g = std::move(tapes[0].grads);
      for (std::size_t i = 1; i < bn; ++i) g += tapes[i].grads;
      g.scale(1.0 / static_cast<double>(bn));
      for (std::size_t i = 0; i < bn; ++i) {
        if (!std::isfinite(tapes[i].loss))
          throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                             train_set[order[b0 + i]].id);
        loss_sum += tapes[i].loss;
        correct += argmax(tapes[i].logits) == train_set[order[b0 + i]].label ? 1 : 0;
      }
      if (!g.all_finite())
        throw NumericError("training diverged: non-finite gradient at epoch " + std::to_string(epoch));
      if (cfg.optimizer.grad_clip > 0.0) {
        const double n = gradient_norm(g);
        if (n > cfg.optimizer.grad_clip) g.scale(cfg.optimizer.grad_clip / n);
      }
      double lr = cfg.optimizer.lr;
      if (cfg.optimizer.cosine)
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
      adam.step(net, g, lr, cfg.freeze_memory_readout);
      ++step;
    }
    EpochMetrics m{epoch, "train", loss_sum / static_cast<double>(order.size()),
                   static_cast<double>(correct) / static_cast<double>(order.size()), elapsed()};
    history.push_back(m);
    if (sink) sink(m);
    if (test_set && !test_set->empty()) {
      const EvalResult ev = evaluate(net, *test_set, cfg.threads);
      EpochMetrics mt{epoch, "test", ev.loss, ev.accuracy, elapsed()};
      history.push_back(mt);
      if (sink) sink(mt);
    }
  }
  return history;
}

}  // namespace dmpsnn
