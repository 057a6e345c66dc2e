#include "scrwkv/dywkv.hpp"

#include <limits>
#include <ostream>
#include <sstream>

#include "scrwkv/functional.hpp"

namespace scrwkv {
namespace {

struct WkvDims {
  Index tokens, channels;
  bool per_token;
};

template <typename Scalar>
WkvDims check_sequence(const Tensor<Scalar>& key, const Tensor<Scalar>& value,
                       const Tensor<Scalar>& decay, const Tensor<Scalar>& bonus) {
  if (key.rank() != 2) throw ShapeError("dywkv: key must be [T,C], got " + shape_str(key.shape()));
  if (value.shape() != key.shape())
    throw ShapeError("dywkv: value " + shape_str(value.shape()) + " vs key " +
                     shape_str(key.shape()));
  const Index t = key.dim(0), c = key.dim(1);
  if (bonus.shape() != Shape{c})
    throw ShapeError("dywkv: bonus must be [" + std::to_string(c) + "]");
  if (decay.shape() == Shape{c}) return {t, c, false};
  if (decay.shape() == Shape{t, c}) return {t, c, true};
  throw ShapeError("dywkv: decay must be [C] or [T,C], got " + shape_str(decay.shape()));
}

// Stabilized pair weights for one sequence. fill(t, row) writes, for every
// source token i, a value proportional to e^{E(t,i)} (self term at i = t),
// all scaled by the same row factor so that no entry exceeds 1.
template <typename Scalar>
class PairWeights {
 public:
  PairWeights(const Scalar* key, const Scalar* decay, const Scalar* bonus, WkvDims dims)
      : key_(key), decay_(decay), bonus_(bonus), t_(dims.tokens), c_(dims.channels),
        per_token_(dims.per_token) {
    if (per_token_) return;
    // Per-channel decay factorizes e^{E(t,i)} = e^{k_i} * e^{-(|t-i|-1) w / T}.
    kmax_.assign(static_cast<std::size_t>(c_), -std::numeric_limits<Scalar>::infinity());
    for (Index i = 0; i < t_; ++i)
      for (Index ch = 0; ch < c_; ++ch) kmax_[ch] = std::max(kmax_[ch], key_[i * c_ + ch]);
    exp_key_.resize(static_cast<std::size_t>(t_ * c_));
    for (Index i = 0; i < t_; ++i)
      for (Index ch = 0; ch < c_; ++ch)
        exp_key_[i * c_ + ch] = std::exp(key_[i * c_ + ch] - kmax_[ch]);
    decay_pow_.resize(static_cast<std::size_t>(t_ * c_));
    for (Index j = 0; j < t_; ++j)
      for (Index ch = 0; ch < c_; ++ch)
        decay_pow_[j * c_ + ch] =
            std::exp(-static_cast<Scalar>(j) / static_cast<Scalar>(t_) * decay_[ch]);
    row_scale_.resize(static_cast<std::size_t>(c_));
  }

  void fill(Index t, Scalar* row) {
    if (per_token_) {
      fill_per_token(t, row);
      return;
    }
    const Scalar* kt = key_ + t * c_;
    for (Index ch = 0; ch < c_; ++ch) {
      const Scalar m = std::max(kmax_[ch], bonus_[ch] + kt[ch]);
      row_scale_[ch] = std::exp(kmax_[ch] - m);
      row[t * c_ + ch] = std::exp(bonus_[ch] + kt[ch] - m);
    }
    for (Index i = 0; i < t_; ++i) {
      if (i == t) continue;
      const Scalar* ek = exp_key_.data() + i * c_;
      const Scalar* dp = decay_pow_.data() + (std::abs(t - i) - 1) * c_;
      Scalar* r = row + i * c_;
      for (Index ch = 0; ch < c_; ++ch) r[ch] = ek[ch] * dp[ch] * row_scale_[ch];
    }
  }

  // Outputs for tokens [t0, t1) with per-channel decay. Each source row is
  // read once per tile instead of once per output token.
  void tile(Index t0, Index t1, const Scalar* value, Scalar* out) const {
    const Index n = t1 - t0;
    std::vector<Scalar> num(static_cast<std::size_t>(n * c_), 0), den(num.size(), 0);
    for (Index i = 0; i < t_; ++i) {
      const Scalar* ek = exp_key_.data() + i * c_;
      const Scalar* v = value + i * c_;
      for (Index t = t0; t < t1; ++t) {
        if (t == i) continue;
        const Scalar* dp = decay_pow_.data() + (std::abs(t - i) - 1) * c_;
        Scalar* nt = num.data() + (t - t0) * c_;
        Scalar* dt = den.data() + (t - t0) * c_;
        for (Index ch = 0; ch < c_; ++ch) {
          const Scalar w = ek[ch] * dp[ch];
          nt[ch] += w * v[ch];
          dt[ch] += w;
        }
      }
    }
    for (Index t = t0; t < t1; ++t)
      for (Index ch = 0; ch < c_; ++ch) {
        const Scalar k = key_[t * c_ + ch];
        const Scalar m = std::max(kmax_[ch], bonus_[ch] + k);
        const Scalar scale = std::exp(kmax_[ch] - m), self = std::exp(bonus_[ch] + k - m);
        const Index j = (t - t0) * c_ + ch;
        out[t * c_ + ch] =
            (scale * num[j] + self * value[t * c_ + ch]) / (scale * den[j] + self);
      }
  }

  // Log-decay distance factor (|t-i| - 1) / T for i != t.
  Scalar distance(Index t, Index i) const {
    return static_cast<Scalar>(std::abs(t - i) - 1) / static_cast<Scalar>(t_);
  }

 private:
  void fill_per_token(Index t, Scalar* row) const {
    const Scalar* wt = decay_ + t * c_;
    const Scalar* kt = key_ + t * c_;
    for (Index ch = 0; ch < c_; ++ch) row[t * c_ + ch] = bonus_[ch] + kt[ch];
    for (Index i = 0; i < t_; ++i) {
      if (i == t) continue;
      const Scalar d = distance(t, i);
      for (Index ch = 0; ch < c_; ++ch) row[i * c_ + ch] = key_[i * c_ + ch] - d * wt[ch];
    }
    for (Index ch = 0; ch < c_; ++ch) {
      Scalar m = row[ch];
      for (Index i = 1; i < t_; ++i) m = std::max(m, row[i * c_ + ch]);
      for (Index i = 0; i < t_; ++i) row[i * c_ + ch] = std::exp(row[i * c_ + ch] - m);
    }
  }

  const Scalar* key_;
  const Scalar* decay_;
  const Scalar* bonus_;
  Index t_, c_;
  bool per_token_;
  std::vector<Scalar> kmax_, exp_key_, decay_pow_, row_scale_;
};

template <typename Scalar>
void naive_forward(const Scalar* key, const Scalar* value, const Scalar* decay,
                   const Scalar* bonus, WkvDims dims, Scalar* out) {
  const Index t_n = dims.tokens, c = dims.channels;
  PairWeights<Scalar> weights(key, decay, bonus, dims);
  if (!dims.per_token) {
    constexpr Index kTile = 16;
    for (Index t0 = 0; t0 < t_n; t0 += kTile) weights.tile(t0, std::min(t_n, t0 + kTile), value, out);
    return;
  }
  std::vector<Scalar> row(static_cast<std::size_t>(t_n * c));
  std::vector<Scalar> num(static_cast<std::size_t>(c)), den(static_cast<std::size_t>(c));
  for (Index t = 0; t < t_n; ++t) {
    weights.fill(t, row.data());
    std::fill(num.begin(), num.end(), Scalar(0));
    std::fill(den.begin(), den.end(), Scalar(0));
    for (Index i = 0; i < t_n; ++i) {
      const Scalar* r = row.data() + i * c;
      const Scalar* v = value + i * c;
      for (Index ch = 0; ch < c; ++ch) {
        num[ch] += r[ch] * v[ch];
        den[ch] += r[ch];
      }
    }
    for (Index ch = 0; ch < c; ++ch) out[t * c + ch] = num[ch] / den[ch];
  }
}

template <typename Scalar>
void scan_forward(const Scalar* key, const Scalar* value, const Scalar* decay,
                  const Scalar* bonus, WkvDims dims, Scalar* out) {
  const Index t_n = dims.tokens, c = dims.channels;
  const auto cs = static_cast<std::size_t>(c);
  std::vector<Scalar> step(cs);
  for (Index ch = 0; ch < c; ++ch) step[ch] = decay[ch] / static_cast<Scalar>(t_n);

  // Accumulator (num, den) scaled by e^{-exponent}.
  struct Accumulators {
    std::vector<Scalar> num, den, exponent;
    explicit Accumulators(std::size_t n)
        : num(n, 0), den(n, 0), exponent(n, -std::numeric_limits<Scalar>::infinity()) {}
  };
  auto absorb = [&](Accumulators& acc, Index t) {
    for (Index ch = 0; ch < c; ++ch) {
      const Scalar decayed = acc.exponent[ch] - step[ch];
      const Scalar k = key[t * c + ch];
      const Scalar q = std::max(decayed, k);
      const Scalar keep = std::exp(decayed - q);
      const Scalar fresh = std::exp(k - q);
      acc.num[ch] = keep * acc.num[ch] + fresh * value[t * c + ch];
      acc.den[ch] = keep * acc.den[ch] + fresh;
      acc.exponent[ch] = q;
    }
  };

  // Backward direction first; its per-token states (covering i > t) are kept.
  std::vector<Scalar> back_num(static_cast<std::size_t>(t_n * c));
  std::vector<Scalar> back_den(back_num.size()), back_exp(back_num.size());
  Accumulators back(cs);
  for (Index t = t_n - 1; t >= 0; --t) {
    std::copy(back.num.begin(), back.num.end(), back_num.begin() + t * c);
    std::copy(back.den.begin(), back.den.end(), back_den.begin() + t * c);
    std::copy(back.exponent.begin(), back.exponent.end(), back_exp.begin() + t * c);
    absorb(back, t);
  }

  Accumulators fwd(cs);
  for (Index t = 0; t < t_n; ++t) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index j = t * c + ch;
      const Scalar self = bonus[ch] + key[j];
      const Scalar q = std::max({fwd.exponent[ch], back_exp[j], self});
      const Scalar ef = std::exp(fwd.exponent[ch] - q);
      const Scalar eb = std::exp(back_exp[j] - q);
      const Scalar es = std::exp(self - q);
      const Scalar num = ef * fwd.num[ch] + eb * back_num[j] + es * value[j];
      const Scalar den = ef * fwd.den[ch] + eb * back_den[j] + es;
      out[j] = num / den;
    }
    absorb(fwd, t);
  }
}

// Closed-form gradients over all pairs for one sequence.
template <typename Scalar>
void naive_backward(const Scalar* key, const Scalar* value, const Scalar* decay,
                    const Scalar* bonus, const Scalar* out, const Scalar* grad, WkvDims dims,
                    Scalar* gkey, Scalar* gvalue, Scalar* gdecay, Scalar* gbonus) {
  const Index t_n = dims.tokens, c = dims.channels;
  PairWeights<Scalar> weights(key, decay, bonus, dims);
  std::vector<Scalar> row(static_cast<std::size_t>(t_n * c));
  std::vector<Scalar> coef(static_cast<std::size_t>(c));
  for (Index t = 0; t < t_n; ++t) {
    weights.fill(t, row.data());
    for (Index ch = 0; ch < c; ++ch) {
      Scalar den = 0;
      for (Index i = 0; i < t_n; ++i) den += row[i * c + ch];
      coef[ch] = grad[t * c + ch] / den;
    }
    const Scalar* yt = out + t * c;
    Scalar* gw = gdecay ? gdecay + (dims.per_token ? t * c : 0) : nullptr;
    for (Index i = 0; i < t_n; ++i) {
      const Scalar* r = row.data() + i * c;
      const Scalar* vi = value + i * c;
      const Scalar dist = i == t ? Scalar(0) : weights.distance(t, i);
      for (Index ch = 0; ch < c; ++ch) {
        const Scalar a = r[ch] * coef[ch];
        const Scalar contrib = a * (vi[ch] - yt[ch]);
        if (gvalue) gvalue[i * c + ch] += a;
        if (gkey) gkey[i * c + ch] += contrib;
        if (i == t) {
          if (gbonus) gbonus[ch] += contrib;
        } else if (gw) {
          gw[ch] -= contrib * dist;
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> dywkv_naive(const Tensor<Scalar>& key, const Tensor<Scalar>& value,
                           const Tensor<Scalar>& decay, const Tensor<Scalar>& bonus) {
  const WkvDims dims = check_sequence(key, value, decay, bonus);
  Tensor<Scalar> out(key.shape());
  naive_forward(key.data(), value.data(), decay.data(), bonus.data(), dims, out.data());
  return out;
}

template <typename Scalar>
Tensor<Scalar> dywkv_scan(const Tensor<Scalar>& key, const Tensor<Scalar>& value,
                          const Tensor<Scalar>& decay, const Tensor<Scalar>& bonus) {
  const WkvDims dims = check_sequence(key, value, decay, bonus);
  if (dims.per_token)
    throw ShapeError("dywkv_scan: per-token decay is not scan-compatible; use dywkv_naive");
  Tensor<Scalar> out(key.shape());
  scan_forward(key.data(), value.data(), decay.data(), bonus.data(), dims, out.data());
  return out;
}

template <typename Scalar>
Var<Scalar> dywkv(const Var<Scalar>& key, const Var<Scalar>& value, const Var<Scalar>& decay,
                  const Var<Scalar>& bonus, WkvAlgorithm algorithm) {
  const Tensor<Scalar>& k = key.value();
  if (k.rank() != 3) throw ShapeError("dywkv: key must be [B,T,C], got " + shape_str(k.shape()));
  if (value.shape() != k.shape())
    throw ShapeError("dywkv: value " + shape_str(value.shape()) + " vs key " + shape_str(k.shape()));
  const Index batch = k.dim(0), t_n = k.dim(1), c = k.dim(2);
  if (bonus.shape() != Shape{c}) throw ShapeError("dywkv: bonus must be [" + std::to_string(c) + "]");
  bool per_token = false;
  if (decay.shape() == Shape{batch, t_n, c})
    per_token = true;
  else if (decay.shape() != Shape{batch, c})
    throw ShapeError("dywkv: decay must be [B,C] or [B,T,C], got " + shape_str(decay.shape()));
  const WkvDims dims{t_n, c, per_token};
  const Index decay_stride = per_token ? t_n * c : c;

  Tensor<Scalar> out(k.shape());
  for (Index b = 0; b < batch; ++b) {
    const Index off = b * t_n * c;
    const Scalar* w = decay.value().data() + b * decay_stride;
    if (per_token || algorithm == WkvAlgorithm::naive)
      naive_forward(k.data() + off, value.value().data() + off, w, bonus.value().data(), dims,
                    out.data() + off);
    else
      scan_forward(k.data() + off, value.value().data() + off, w, bonus.value().data(), dims,
                   out.data() + off);
  }

  return record<Scalar>(
      std::move(out), {key, value, decay, bonus},
      [=](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
        for (Index b = 0; b < batch; ++b) {
          const Index off = b * t_n * c;
          auto slot = [&](std::size_t i, Index offset) {
            return grads[i] ? grads[i]->data() + offset : nullptr;
          };
          naive_backward(self.input(0).data() + off, self.input(1).data() + off,
                         self.input(2).data() + b * decay_stride, self.input(3).data(),
                         self.value.data() + off, g.data() + off, dims, slot(0, off),
                         slot(1, off), slot(2, b * decay_stride), slot(3, 0));
        }
      });
}

template <typename Scalar>
Var<Scalar> dscd(const Var<Scalar>& x, const DecayParams<Scalar>& params, DecayMode mode) {
  if (x.value().rank() != 3) throw ShapeError("dscd: x must be [B,T,C]");
  const Var<Scalar> base = softplus(params.base_raw);
  const Var<Scalar> pooled = mode == DecayMode::instance ? mean_axis(x, 1) : x;
  const Var<Scalar> gate = sigmoid(linear(pooled, params.proj_weight, params.proj_bias));
  return mul(broadcast_leading(base, pooled.shape()), exp(neg(gate)));
}

std::vector<WkvBenchRow> bench_wkv(const WkvBenchOptions& options) {
  using Clock = std::chrono::steady_clock;
  std::vector<WkvBenchRow> naive_rows, scan_rows;
  Rng rng(options.seed);
  const Index c = options.channels;
  for (Index t : options.tokens) {
    const auto key = uniform<double>({t, c}, rng);
    const auto value = uniform<double>({t, c}, rng);
    const auto decay = uniform<double>({c}, rng, 0.1, 2.0);
    const auto bonus = uniform<double>({c}, rng, -1.0, 1.0);

    Tensor<double> scan_out;
    double scan_total = 0;
    int scan_reps = 0;
    while (scan_total < options.min_scan_ns || scan_reps < 3) {
      const auto start = Clock::now();
      scan_out = dywkv_scan(key, value, decay, bonus);
      scan_total += std::chrono::duration<double, std::nano>(Clock::now() - start).count();
      ++scan_reps;
    }
    scan_rows.push_back({"scan", t, c, scan_total / scan_reps, 0});

    if (!options.include_naive) continue;
    Tensor<double> naive_out;
    double naive_total = 0;
    for (int r = 0; r < std::max(1, options.naive_repetitions); ++r) {
      const auto start = Clock::now();
      naive_out = dywkv_naive(key, value, decay, bonus);
      naive_total += std::chrono::duration<double, std::nano>(Clock::now() - start).count();
    }
    // Outputs are averages of O(1) values; compare on an absolute scale near zero.
    const double err = max_rel_diff(scan_out, naive_out, 1.0);
    if (err > 1e-10) {
      std::ostringstream msg;
      msg << "bench_wkv: scan and naive differ by " << err << " at T=" << t;
      throw std::runtime_error(msg.str());
    }
    naive_rows.push_back({"naive", t, c, naive_total / std::max(1, options.naive_repetitions), 0});
  }
  std::vector<WkvBenchRow> rows;
  for (auto* group : {&scan_rows, &naive_rows})
    for (std::size_t i = 0; i < group->size(); ++i) {
      auto& row = (*group)[i];
      if (i > 0) row.ratio = row.mean_ns / (*group)[i - 1].mean_ns;
      rows.push_back(row);
    }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<WkvBenchRow>& rows) {
  os << "variant,T,C,mean_ns,ratio\n";
  for (const auto& r : rows)
    os << r.variant << ',' << r.tokens << ',' << r.channels << ',' << r.mean_ns << ',' << r.ratio
       << '\n';
}

template Tensor<float> dywkv_naive(const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&, const Tensor<float>&);
template Tensor<double> dywkv_naive(const Tensor<double>&, const Tensor<double>&,
                                    const Tensor<double>&, const Tensor<double>&);
template Tensor<float> dywkv_scan(const Tensor<float>&, const Tensor<float>&,
                                  const Tensor<float>&, const Tensor<float>&);
template Tensor<double> dywkv_scan(const Tensor<double>&, const Tensor<double>&,
                                   const Tensor<double>&, const Tensor<double>&);
template Var<float> dywkv(const Var<float>&, const Var<float>&, const Var<float>&,
                          const Var<float>&, WkvAlgorithm);
template Var<double> dywkv(const Var<double>&, const Var<double>&, const Var<double>&,
                           const Var<double>&, WkvAlgorithm);
template Var<float> dscd(const Var<float>&, const DecayParams<float>&, DecayMode);
template Var<double> dscd(const Var<double>&, const DecayParams<double>&, DecayMode);

}  // namespace scrwkv
