#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "termreward/error.hpp"

namespace termreward::grpo {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class StdKind { kPopulation, kSample };

/// Group-relative advantages: (r_i - mean(r)) / std(r).
///
/// Groups whose standard deviation falls below `degenerate_std` carry no
/// learning signal and map to all zeros.
template <typename Derived>
Vector<typename Derived::Scalar> normalize_advantages(const Eigen::MatrixBase<Derived>& rewards,
                                                      StdKind kind = StdKind::kPopulation,
                                                      typename Derived::Scalar degenerate_std = 1e-12) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index g = rewards.size();
  if (g < 2) throw InvalidArgument("normalize_advantages: a group needs at least 2 rewards");
  if (!rewards.allFinite()) throw InvalidArgument("normalize_advantages: non-finite reward");

  const Vector<Scalar> r = rewards.derived().reshaped();
  const Scalar mean = r.mean();
  const Vector<Scalar> centered = r.array() - mean;
  const Scalar denom = kind == StdKind::kPopulation ? Scalar(g) : Scalar(g - 1);
  const Scalar std = std::sqrt(centered.squaredNorm() / denom);
  if (!(std >= degenerate_std)) return Vector<Scalar>::Zero(g);
  return centered / std;
}

/// k3 estimator x - log x - 1 with x = p_ref / p_theta. Non-negative, zero
/// iff the probabilities agree.
template <typename Scalar>
Scalar kl_approx(Scalar p_theta, Scalar p_ref) {
  if (!(p_theta > Scalar(0)) || !(p_ref > Scalar(0)))
    throw InvalidArgument("kl_approx: probabilities must be > 0");
  if (p_theta == p_ref) return Scalar(0);
  const Scalar x = p_ref / p_theta;
  return x - std::log(x) - Scalar(1);
}

/// Same estimator from log-probabilities, avoiding underflow on long
/// sequences.
template <typename Scalar>
Scalar kl_approx_log(Scalar logp_theta, Scalar logp_ref) {
  if (!std::isfinite(logp_theta) || !std::isfinite(logp_ref))
    throw InvalidArgument("kl_approx_log: log-probabilities must be finite");
  const Scalar log_x = logp_ref - logp_theta;
  if (log_x == Scalar(0)) return Scalar(0);
  return std::exp(log_x) - log_x - Scalar(1);
}

enum class ProbabilityDomain { kLinear, kLog };

/// Per-rollout policy probabilities for one group, at whatever granularity
/// the caller works in (sequence or token).
template <typename Scalar>
struct PolicyEvalBatch {
  Vector<Scalar> p_theta;
  Vector<Scalar> p_old;
  Vector<Scalar> p_ref;
  Vector<Scalar> advantages;
  Scalar clip_epsilon = Scalar(0.2);
  Scalar kl_coefficient = Scalar(0);
  ProbabilityDomain domain = ProbabilityDomain::kLinear;

  void validate() const {
    const Eigen::Index g = advantages.size();
    if (g < 1) throw InvalidArgument("PolicyEvalBatch: empty batch");
    if (p_theta.size() != g || p_old.size() != g || p_ref.size() != g)
      throw InvalidArgument("PolicyEvalBatch: probability and advantage lengths differ");
    if (!(clip_epsilon > Scalar(0) && clip_epsilon < Scalar(1)))
      throw InvalidArgument("PolicyEvalBatch: clip_epsilon must lie in (0, 1)");
    if (!(kl_coefficient >= Scalar(0)) || !std::isfinite(kl_coefficient))
      throw InvalidArgument("PolicyEvalBatch: kl_coefficient must be finite and >= 0");
    if (!advantages.allFinite()) throw InvalidArgument("PolicyEvalBatch: non-finite advantage");
    for (const Vector<Scalar>* v : {&p_theta, &p_old, &p_ref}) {
      if (!v->allFinite()) throw InvalidArgument("PolicyEvalBatch: non-finite probability");
      if (domain == ProbabilityDomain::kLinear &&
          ((v->array() <= Scalar(0)).any() || (v->array() > Scalar(1)).any()))
        throw InvalidArgument("PolicyEvalBatch: probabilities must lie in (0, 1]");
      if (domain == ProbabilityDomain::kLog && (v->array() > Scalar(0)).any())
        throw InvalidArgument("PolicyEvalBatch: log-probabilities must be <= 0");
    }
  }

  /// Importance ratios p_theta / p_old.
  Vector<Scalar> ratios() const {
    if (domain == ProbabilityDomain::kLog) return (p_theta - p_old).array().exp();
    return p_theta.array() / p_old.array();
  }
};

/// min(rho * A, clip(rho, 1 - eps, 1 + eps) * A) per rollout.
template <typename Scalar>
Vector<Scalar> clipped_surrogate(const PolicyEvalBatch<Scalar>& batch) {
  batch.validate();
  const Vector<Scalar> rho = batch.ratios();
  const auto clipped = rho.array().max(Scalar(1) - batch.clip_epsilon).min(Scalar(1) + batch.clip_epsilon);
  return (rho.array() * batch.advantages.array()).min(clipped * batch.advantages.array());
}

/// Mean clipped surrogate minus kl_coefficient times the mean KL estimate.
template <typename Scalar>
Scalar grpo_objective(const PolicyEvalBatch<Scalar>& batch) {
  const Vector<Scalar> surrogate = clipped_surrogate(batch);
  Scalar objective = surrogate.mean();
  if (batch.kl_coefficient > Scalar(0)) {
    Scalar kl = Scalar(0);
    for (Eigen::Index i = 0; i < surrogate.size(); ++i)
      kl += batch.domain == ProbabilityDomain::kLog ? kl_approx_log(batch.p_theta[i], batch.p_ref[i])
                                                    : kl_approx(batch.p_theta[i], batch.p_ref[i]);
    objective -= batch.kl_coefficient * kl / Scalar(surrogate.size());
  }
  return objective;
}

}  // namespace termreward::grpo
