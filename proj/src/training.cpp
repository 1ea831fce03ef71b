#include "synlm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "synlm/error.hpp"

namespace synlm {

Adam::Adam(double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(Model& model) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (auto& [name, p] : model.params()) {
    auto& [m, v] = moments_[name];
    if (m.size() == 0) {
      m = ad::Mat::Zero(p.value.rows(), p.value.cols());
      v = ad::Mat::Zero(p.value.rows(), p.value.cols());
    }
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon_);
  }
}

double clip_gradients(Model& model, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, p] : model.params()) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, p] : model.params()) p.grad *= s;
  }
  return norm;
}

std::vector<EncodedSequence> make_chunks(const std::vector<ActionSeq>& sentences, const Model& model, int max_len) {
  const ModelScheme& scheme = model.scheme();
  std::vector<EncodedSequence> out;
  std::vector<ActionSeq> current;
  int length = 1;  // <bos>
  auto flush = [&] {
    if (current.empty()) return;
    out.push_back(encode(document_stream(current, scheme), scheme, model.outputs()));
    current.clear();
    length = 1;
  };
  for (const auto& s : sentences) {
    const int cost = s.size() + (scheme.internal() ? s.nonterminal_count() : 0) + 1;
    if (1 + cost > max_len) {
      throw ConfigError("sentence of " + std::to_string(cost) + " positions does not fit max_seq_len");
    }
    if (length + cost > max_len) flush();
    current.push_back(s);
    length += cost;
  }
  flush();
  return out;
}

namespace {

void check_finite(const Model& model, int step) {
  for (const auto& [name, p] : model.params()) {
    if (!p.grad.allFinite()) {
      throw RuntimeFailure("non-finite gradient in " + name + " at step " + std::to_string(step));
    }
  }
}

}  // namespace

TrainResult train(Model& model, const std::vector<EncodedSequence>& data, const TrainOptions& opts) {
  if (data.empty()) throw ConfigError("no training data");
  TrainResult result;
  Adam adam(opts.learning_rate, opts.beta1, opts.beta2, opts.epsilon);
  std::mt19937_64 rng(opts.seed);
  const bool full = opts.batch_size <= 0 || opts.batch_size >= static_cast<int>(data.size());
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = order.size();

  for (int step = 0; step < opts.steps; ++step) {
    std::vector<EncodedSequence> picked;
    const std::vector<EncodedSequence>* batch = &data;
    if (!full) {
      for (int i = 0; i < opts.batch_size; ++i) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        picked.push_back(data[order[cursor++]]);
      }
      batch = &picked;
    }
    model.zero_grad();
    ad::Tape tape;
    ad::Var loss = model.loss(tape, *batch);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw RuntimeFailure("loss became " + std::to_string(value) + " at step " + std::to_string(step));
    }
    result.losses.push_back(value);
    if (opts.on_step) opts.on_step(step, value);
    if (full && opts.target_loss > 0 && value < opts.target_loss) {
      result.reached_target = true;
      break;
    }
    tape.backward(loss);
    check_finite(model, step);
    clip_gradients(model, opts.clip_norm);
    adam.step(model);
    result.steps = step + 1;
    if (!full && opts.target_loss > 0 && (step + 1) % 50 == 0 && model.loss_value(data) < opts.target_loss) {
      result.reached_target = true;
      break;
    }
  }
  result.final_loss = model.loss_value(data);
  if (opts.target_loss > 0) result.reached_target = result.final_loss < opts.target_loss;
  return result;
}

}  // namespace synlm
