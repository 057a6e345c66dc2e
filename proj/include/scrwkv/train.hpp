#pragma once

#include <functional>
#include <iosfwd>

#include "scrwkv/network.hpp"
#include "scrwkv/synth.hpp"

namespace scrwkv {

struct LossConfig {
  double alpha = 0.25;  // BCE weight
  double beta = 0.75;   // Dice weight
  double epsilon = 1e-6;

  // Rescales (alpha, beta) to sum to one.
  LossConfig normalized() const;
};

inline constexpr double kProbClamp = 1e-7;

/// alpha * BCE + beta * Dice on probabilities prob and binary target, both
/// [B,...]. BCE is the mean over all elements of clamped probabilities
/// (clamp to [1e-7, 1 - 1e-7]); Dice is 1 - (2 sum pt + eps) / (sum p + sum t + eps)
/// per sample, averaged over the batch.
template <typename Scalar>
Var<Scalar> hybrid_loss(const Var<Scalar>& prob, const Tensor<Scalar>& target, const LossConfig& cfg);

struct OptimConfig {
  double lr = 5e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double power = 0.9;
  Index max_steps = 300;
  std::uint64_t seed = 42;
};

// lr0 * (1 - t/T)^power, zero for t >= T.
double poly_lr(Index step, const OptimConfig& cfg);

/// Decoupled weight decay Adam:
///   p -= lr * wd * p; m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2;
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
template <typename Scalar>
class AdamW {
 public:
  explicit AdamW(OptimConfig cfg) : cfg_(cfg) {}

  void step(std::vector<Var<Scalar>>& params, const Gradients<Scalar>& grads, double lr);
  Index steps_taken() const noexcept { return t_; }

 private:
  OptimConfig cfg_;
  Index t_ = 0;
  std::vector<Tensor<Scalar>> m_, v_;
};

// Hard Dice of (prob >= 0.5) against a binary target, pooled over all pixels.
template <typename Scalar>
double hard_dice(const Tensor<Scalar>& prob, const Tensor<Scalar>& target);

struct TrainLogRow {
  Index step = 0;
  double lr = 0;
  double loss = 0;
  double dice = 0;  // hard Dice on the current batch before the update
};

struct TrainOptions {
  LossConfig loss;
  OptimConfig optim;
  Index batch_size = 8;
  // Called after every step; return false to stop early.
  std::function<bool(const TrainLogRow&)> on_step;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double final_loss = 0;  // loss on the full set after the last update
  double final_dice = 0;  // hard Dice on the full set after the last update
};

// Pack samples into image [B,3,H,W] and target [B,1,H,W] tensors.
void stack_batch(const std::vector<CrackSample>& samples, Tensor<float>& images,
                 Tensor<float>& targets);

/// Runs optim.max_steps AdamW steps with the poly schedule over `data`,
/// cycling through it in order with batches of batch_size.
TrainResult train(Model<float>& model, const std::vector<CrackSample>& data, const TrainOptions& opt);

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows);

}  // namespace scrwkv
