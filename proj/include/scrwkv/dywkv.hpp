#pragma once

#include <chrono>
#include <iosfwd>

#include "scrwkv/autodiff.hpp"

namespace scrwkv {

// instance: one decay vector per sample (token-mean pooled), scan-compatible.
// per_token: decay conditioned on each aggregating token, quadratic only.
enum class DecayMode { instance, per_token };

enum class WkvAlgorithm { scan, naive };

/// Bidirectional decayed key-value aggregation over one sequence.
///
/// For token t and channel c:
///   out[t] = (sum_{i!=t} e^{E(t,i)} v[i] + e^{u + k[t]} v[t])
///          / (sum_{i!=t} e^{E(t,i)}      + e^{u + k[t]})
///   E(t,i) = k[i] - (|t-i| - 1) / T * w
/// `key` and `value` are [T,C]; `decay` is [C] (one decay per channel) or
/// [T,C] (decay of the aggregating token t); `bonus` is [C].
///
/// The naive form evaluates every pair. Exponents are shifted by the largest
/// exponent that can occur in row t, so keys of magnitude 50+ stay finite.
template <typename Scalar>
Tensor<Scalar> dywkv_naive(const Tensor<Scalar>& key, const Tensor<Scalar>& value,
                           const Tensor<Scalar>& decay, const Tensor<Scalar>& bonus);

/// Same result in O(T*C) for per-channel decay: a forward and a backward
/// running accumulation of (sum e^k v, sum e^k), each stored relative to a
/// running maximum exponent, merged with the bonus term at t.
/// Throws ShapeError for [T,C] decay.
template <typename Scalar>
Tensor<Scalar> dywkv_scan(const Tensor<Scalar>& key, const Tensor<Scalar>& value,
                          const Tensor<Scalar>& decay, const Tensor<Scalar>& bonus);

/// Batched, differentiable form: key/value [B,T,C], decay [B,C] or [B,T,C],
/// bonus [C]. Per-channel decay uses `algorithm`; per-token decay is always
/// naive. Gradients use the closed-form quotient rule over all pairs.
template <typename Scalar>
Var<Scalar> dywkv(const Var<Scalar>& key, const Var<Scalar>& value, const Var<Scalar>& decay,
                  const Var<Scalar>& bonus, WkvAlgorithm algorithm = WkvAlgorithm::scan);

/// Learnable decay state. `base_raw` is exposed through softplus so the
/// effective base decay is strictly positive.
template <typename Scalar>
struct DecayParams {
  Var<Scalar> base_raw;     // [C]
  Var<Scalar> proj_weight;  // [C,C]
  Var<Scalar> proj_bias;    // [C]
  Var<Scalar> bonus;        // [C]
};

/// Content-conditioned decay: w_base * exp(-sigmoid(proj(x_agg))). In
/// instance mode x_agg is the token mean of x [B,T,C] and the result is
/// [B,C]; in per-token mode the result is [B,T,C]. The ratio to w_base lies
/// in (1/e, 1).
template <typename Scalar>
Var<Scalar> dscd(const Var<Scalar>& x, const DecayParams<Scalar>& params, DecayMode mode);

struct WkvBenchRow {
  std::string variant;
  Index tokens = 0;
  Index channels = 0;
  double mean_ns = 0;
  double ratio = 0;  // mean_ns / mean_ns at the previous size (0 for the first)
};

struct WkvBenchOptions {
  std::vector<Index> tokens{4096, 8192, 16384, 32768};
  Index channels = 32;
  // Timing repetitions; the scan is repeated until at least min_scan_ns.
  int naive_repetitions = 1;
  double min_scan_ns = 5e8;
  bool include_naive = true;
  std::uint64_t seed = 42;
};

/// Times both variants at 64-bit on random inputs. Before timing each size,
/// checks that scan and naive agree within 1e-10 relative error and throws
/// std::runtime_error otherwise.
std::vector<WkvBenchRow> bench_wkv(const WkvBenchOptions& options);

void write_bench_csv(std::ostream& os, const std::vector<WkvBenchRow>& rows);

}  // namespace scrwkv
