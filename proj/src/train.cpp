#include "scrwkv/train.hpp"

#include <ostream>

#include "scrwkv/functional.hpp"

namespace scrwkv {

LossConfig LossConfig::normalized() const {
  if (alpha < 0 || beta < 0 || alpha + beta <= 0)
    throw ShapeError("LossConfig: weights must be non-negative with a positive sum");
  LossConfig out = *this;
  out.alpha = alpha / (alpha + beta);
  out.beta = beta / (alpha + beta);
  return out;
}

template <typename Scalar>
Var<Scalar> hybrid_loss(const Var<Scalar>& prob, const Tensor<Scalar>& target,
                        const LossConfig& cfg) {
  const Tensor<Scalar>& p = prob.value();
  if (p.shape() != target.shape())
    throw ShapeError("hybrid_loss: prediction " + shape_str(p.shape()) + " vs target " +
                     shape_str(target.shape()));
  if (p.rank() < 1) throw ShapeError("hybrid_loss: prediction needs a batch axis");
  const LossConfig w = cfg.normalized();
  const Index batch = p.dim(0), per = p.size() / batch;
  const double lo = kProbClamp, hi = 1 - kProbClamp, eps = cfg.epsilon;

  double bce = 0;
  std::vector<double> inter(static_cast<std::size_t>(batch), 0.0), total(inter);
  for (Index b = 0; b < batch; ++b)
    for (Index j = b * per; j < (b + 1) * per; ++j) {
      const double pj = p[j], tj = target[j], pc = std::clamp(pj, lo, hi);
      bce -= tj * std::log(pc) + (1 - tj) * std::log(1 - pc);
      inter[b] += pj * tj;
      total[b] += pj + tj;
    }
  bce /= static_cast<double>(p.size());
  double dice = 0;
  for (Index b = 0; b < batch; ++b) dice += 1 - (2 * inter[b] + eps) / (total[b] + eps);
  dice /= static_cast<double>(batch);

  Tensor<Scalar> value = Tensor<Scalar>::scalar(static_cast<Scalar>(w.alpha * bce + w.beta * dice));
  return record<Scalar>(
      std::move(value), {prob},
      [=, target = target](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
        const Tensor<Scalar>& p = self.input(0);
        const double scale = g[0];
        const double bce_scale = w.alpha / static_cast<double>(p.size());
        const double dice_scale = w.beta / static_cast<double>(batch);
        for (Index b = 0; b < batch; ++b) {
          const double s = total[b] + eps, num = 2 * inter[b] + eps;
          for (Index j = b * per; j < (b + 1) * per; ++j) {
            const double pj = p[j], tj = target[j];
            double d = -dice_scale * (2 * tj * s - num) / (s * s);
            if (pj > lo && pj < hi) d -= bce_scale * (tj / pj - (1 - tj) / (1 - pj));
            (*grads[0])[j] += static_cast<Scalar>(scale * d);
          }
        }
      });
}

double poly_lr(Index step, const OptimConfig& cfg) {
  if (cfg.max_steps <= 0 || step >= cfg.max_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(std::max<Index>(step, 0)) /
                                static_cast<double>(cfg.max_steps);
  return cfg.lr * std::pow(frac, cfg.power);
}

template <typename Scalar>
void AdamW<Scalar>::step(std::vector<Var<Scalar>>& params, const Gradients<Scalar>& grads,
                         double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  if (m_.size() != params.size()) throw ShapeError("AdamW: parameter list changed between steps");
  ++t_;
  const double c1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].mutable_value().array();
    const Tensor<Scalar> g = grads[params[i]];
    auto& m = m_[i].array();
    auto& v = v_[i].array();
    value *= static_cast<Scalar>(1 - lr * cfg_.weight_decay);
    m = static_cast<Scalar>(cfg_.beta1) * m + static_cast<Scalar>(1 - cfg_.beta1) * g.array();
    v = static_cast<Scalar>(cfg_.beta2) * v + static_cast<Scalar>(1 - cfg_.beta2) * g.array().square();
    value -= static_cast<Scalar>(lr) * (m / static_cast<Scalar>(c1)) /
             ((v / static_cast<Scalar>(c2)).sqrt() + static_cast<Scalar>(cfg_.eps));
  }
}

template <typename Scalar>
double hard_dice(const Tensor<Scalar>& prob, const Tensor<Scalar>& target) {
  prob.require_same_shape(target, "hard_dice");
  double inter = 0, total = 0;
  for (Index i = 0; i < prob.size(); ++i) {
    const double pb = prob[i] >= Scalar(0.5) ? 1.0 : 0.0, tb = target[i] > Scalar(0.5) ? 1.0 : 0.0;
    inter += pb * tb;
    total += pb + tb;
  }
  return total == 0 ? 1.0 : 2 * inter / total;
}

void stack_batch(const std::vector<CrackSample>& samples, Tensor<float>& images,
                 Tensor<float>& targets) {
  if (samples.empty()) throw ShapeError("stack_batch: no samples");
  const Index h = samples[0].mask.dim(0), w = samples[0].mask.dim(1);
  const Index b = static_cast<Index>(samples.size());
  images = Tensor<float>({b, 3, h, w});
  targets = Tensor<float>({b, 1, h, w});
  for (Index i = 0; i < b; ++i) {
    const CrackSample& s = samples[static_cast<std::size_t>(i)];
    if (s.mask.shape() != Shape{h, w} || s.image.shape() != Shape{3, h, w})
      throw ShapeError("stack_batch: sample " + std::to_string(i) + " has a different size");
    images.array().segment(i * 3 * h * w, 3 * h * w) = s.image.array();
    targets.array().segment(i * h * w, h * w) = s.mask.array();
  }
}

namespace {

struct Evaluation {
  double loss, dice;
};

Evaluation evaluate(const Model<float>& model, const Tensor<float>& images,
                    const Tensor<float>& targets, const LossConfig& loss_cfg) {
  NoGradGuard guard;
  const Var<float> prob = sigmoid(model.forward(Var<float>(images)));
  return {hybrid_loss(prob, targets, loss_cfg).value().item(), hard_dice(prob.value(), targets)};
}

}  // namespace

TrainResult train(Model<float>& model, const std::vector<CrackSample>& data,
                  const TrainOptions& opt) {
  if (data.empty()) throw ShapeError("train: empty dataset");
  if (opt.batch_size < 1) throw ShapeError("train: batch size must be >= 1");
  const std::size_t n = data.size(), bs = static_cast<std::size_t>(opt.batch_size);
  AdamW<float> optimizer(opt.optim);
  TrainResult result;
  std::vector<CrackSample> batch;
  Tensor<float> images, targets;
  for (Index step = 0; step < opt.optim.max_steps; ++step) {
    batch.clear();
    for (std::size_t i = 0; i < bs; ++i) batch.push_back(data[(static_cast<std::size_t>(step) * bs + i) % n]);
    stack_batch(batch, images, targets);
    const Var<float> prob = sigmoid(model.forward(Var<float>(images)));
    const Var<float> loss = hybrid_loss(prob, targets, opt.loss);
    const TrainLogRow row{step, poly_lr(step, opt.optim), loss.value().item(),
                          hard_dice(prob.value(), targets)};
    const Gradients<float> grads = backward(loss);
    optimizer.step(model.params().vars(), grads, row.lr);
    result.log.push_back(row);
    if (opt.on_step && !opt.on_step(row)) break;
  }
  stack_batch(data, images, targets);
  const Evaluation final_eval = evaluate(model, images, targets, opt.loss);
  result.final_loss = final_eval.loss;
  result.final_dice = final_eval.dice;
  return result;
}

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << "step,lr,loss,dice\n";
  for (const auto& r : rows) os << r.step << ',' << r.lr << ',' << r.loss << ',' << r.dice << '\n';
}

template Var<float> hybrid_loss(const Var<float>&, const Tensor<float>&, const LossConfig&);
template Var<double> hybrid_loss(const Var<double>&, const Tensor<double>&, const LossConfig&);
template class AdamW<float>;
template class AdamW<double>;
template double hard_dice(const Tensor<float>&, const Tensor<float>&);
template double hard_dice(const Tensor<double>&, const Tensor<double>&);

}  // namespace scrwkv
