#pragma once

#include "sage/camera.hpp"
#include "sage/keyframe.hpp"
#include "sage/match_set.hpp"
#include "sage/robust.hpp"
#include "sage/se3.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace sage {

enum class FactorKind { FM, SMG, RP, GC, RPS, CD, SC, PS };

enum class VarKind { Pose, Scale, Code };  // Scale variables live in log-space

struct SlotVar {
  int slot;
  VarKind kind;
};

// Optimizer state over keyframe slots. Poses are world <- keyframe.
struct State {
  std::vector<Pose> pose;
  std::vector<double> log_scale;
  std::vector<VecX> code;

  static State sized(int slots) {
    State s;
    s.pose.resize(slots);
    s.log_scale.assign(slots, 0.0);
    s.code.resize(slots);
    return s;
  }
};

// Gradient and Gauss-Newton blocks for one factor, ordered as variables().
// hess holds upper blocks only (i <= j).
struct FactorLinearization {
  double value = 0.0;
  std::vector<VecX> grad;
  std::vector<std::vector<MatX>> hess;
  std::vector<uint8_t> active;  // caller may deactivate fixed variables

  void reset(const std::vector<int>& dims);
};

class Factor {
public:
  virtual ~Factor() = default;
  virtual FactorKind kind() const = 0;
  virtual const std::vector<SlotVar>& variables() const = 0;
  // Objective value; recomputes the factor support unless frozen.
  virtual double evaluate(const State& state) const = 0;
  // Value plus gradient / Gauss-Newton blocks at the state.
  virtual double linearize(const State& state, FactorLinearization& lin) const = 0;
  // Number of residual terms contributing at this state (pair factors).
  virtual int support_size(const State&) const { return 1; }
  // Pin the support set computed at `state` for subsequent evaluations;
  // finite-difference probes use this to differentiate a fixed objective.
  virtual void freeze_support(const State&) {}
  virtual void unfreeze_support() {}
};

// ---------------------------------------------------------------------------
// Dense pair factors

struct FmParams {
  double weight = 1.0;
  std::vector<double> level_weights = {10.0, 9.0, 8.0, 7.0};  // high to low resolution
};

// Feature-metric alignment over the Gaussian pyramids of the pair.
class FmFactor : public Factor {
public:
  FmFactor(int src_slot, int tgt_slot, const Keyframe* src, const Keyframe* tgt,
           const Camera& cam, FmParams params);

  FactorKind kind() const override { return FactorKind::FM; }
  const std::vector<SlotVar>& variables() const override { return vars_; }
  double evaluate(const State& state) const override;
  double linearize(const State& state, FactorLinearization& lin) const override;
  int support_size(const State& state) const override;
  void freeze_support(const State& state) override;
  void unfreeze_support() override { frozen_.reset(); }

private:
  template <bool kWithJacobians>
  double eval_impl(const State& state, FactorLinearization* lin) const;

  int src_slot_, tgt_slot_;
  const Keyframe* src_;
  const Keyframe* tgt_;
  Camera cam_;
  FmParams params_;
  std::vector<SlotVar> vars_;
  mutable std::optional<std::vector<std::vector<std::pair<int, int>>>> frozen_;
};

struct GcParams {
  double weight = 0.1;
  double sigma = 0.03;
};

// Geometric consistency: warped source depth vs sampled target depth under a
// Cauchy kernel. Supports both a sparse match list and dense evaluation over
// every masked source pixel (matches empty).
class GcFactor : public Factor {
public:
  GcFactor(int src_slot, int tgt_slot, const Keyframe* src, const Keyframe* tgt,
           const Camera& cam, MatchSet matches, GcParams params);

  FactorKind kind() const override { return FactorKind::GC; }
  const std::vector<SlotVar>& variables() const override { return vars_; }
  double evaluate(const State& state) const override;
  double linearize(const State& state, FactorLinearization& lin) const override;
  int support_size(const State& state) const override;
  void freeze_support(const State& state) override;
  void unfreeze_support() override { frozen_.reset(); }
  double delta() const { return delta_; }

private:
  template <bool kWithJacobians>
  double eval_impl(const State& state, FactorLinearization* lin) const;

  int src_slot_, tgt_slot_;
  const Keyframe* src_;
  const Keyframe* tgt_;
  Camera cam_;
  GcParams params_;
  double delta_;                 // sigma * mean source average depth
  std::vector<Vec2> src_points_; // match sources or all masked pixels
  std::vector<SlotVar> vars_;
  mutable std::optional<std::vector<int>> frozen_;
};

// ---------------------------------------------------------------------------
// Sparse match factors

struct RpParams {
  double weight = 0.1;
  double sigma = 0.03;
};

// Reprojection of matched source points into the target image (Fair kernel,
// bound sigma * W^2).
class RpFactor : public Factor {
public:
  RpFactor(int src_slot, int tgt_slot, const Keyframe* src, const Camera& cam, MatchSet matches,
           RpParams params);

  FactorKind kind() const override { return FactorKind::RP; }
  const std::vector<SlotVar>& variables() const override { return vars_; }
  double evaluate(const State& state) const override;
  double linearize(const State& state, FactorLinearization& lin) const override;
  int support_size(const State& state) const override;
  void freeze_support(const State& state) override;
  void unfreeze_support() override { frozen_.reset(); }

private:
  template <bool kWithJacobians>
  double eval_impl(const State& state, FactorLinearization* lin) const;

  int src_slot_, tgt_slot_;
  const Keyframe* src_;
  Camera cam_;
  MatchSet matches_;
  RpParams params_;
  double bound_;
  std::vector<SlotVar> vars_;
  mutable std::optional<std::vector<int>> frozen_;
};

struct SmgParams {
  double weight = 0.1;
  double sigma = 0.1;
};

// Sparse matched geometry: 3D distance between matched points lifted with the
// current depths (Fair kernel, bound sigma * mean source average depth).
class SmgFactor : public Factor {
public:
  SmgFactor(int src_slot, int tgt_slot, const Keyframe* src, const Keyframe* tgt,
            const Camera& cam, MatchSet matches, SmgParams params);

  FactorKind kind() const override { return FactorKind::SMG; }
  const std::vector<SlotVar>& variables() const override { return vars_; }
  double evaluate(const State& state) const override;
  double linearize(const State& state, FactorLinearization& lin) const override;
  int support_size(const State&) const override { return matches_.size(); }
  double delta() const { return delta_; }

private:
  template <bool kWithJacobians>
  double eval_impl(const State& state, FactorLinearization* lin) const;

  int src_slot_, tgt_slot_;
  const Keyframe* src_;
  const Keyframe* tgt_;
  Camera cam_;
  MatchSet matches_;
  SmgParams params_;
  double delta_;
  std::vector<SlotVar> vars_;
};

// ---------------------------------------------------------------------------
// Prior / graph factors

struct RpsParams {
  double weight = 1.0;
  double rot_weight = 5.0;    // omega_rot
  double scale_weight = 0.5;  // omega_scl
  Pose target_rel;            // T^tgt_src target
  double target_src_scale = 1.0;
  double target_tgt_scale = 1.0;
};

// Relative pose-scale factor: scale-normalized translation, rotation log and
// log scale ratio against targets. Invariant to jointly scaling both depth
// scales and all translations.
class RpsFactor : public Factor {
public:
  RpsFactor(int src_slot, int tgt_slot, RpsParams params);

  FactorKind kind() const override { return FactorKind::RPS; }
  const std::vector<SlotVar>& variables() const override { return vars_; }
  double evaluate(const State& state) const override;
  double linearize(const State& state, FactorLinearization& lin) const override;

private:
  template <bool kWithJacobians>
  double eval_impl(const State& state, FactorLinearization* lin) const;

  int src_slot_, tgt_slot_;
  RpsParams params_;
  std::vector<SlotVar> vars_;
};

struct CdParams {
  double weight = 1e-4;
  VecX target;  // zero when empty
};

class CdFactor : public Factor {
public:
  CdFactor(int slot, int code_dim, CdParams params);

  FactorKind kind() const override { return FactorKind::CD; }
  const std::vector<SlotVar>& variables() const override { return vars_; }
  double evaluate(const State& state) const override;
  double linearize(const State& state, FactorLinearization& lin) const override;

private:
  int slot_;
  CdParams params_;
  std::vector<SlotVar> vars_;
};

struct ScParams {
  double weight = 1.0;
  double target_scale = 1.0;
};

class ScFactor : public Factor {
public:
  ScFactor(int slot, ScParams params);

  FactorKind kind() const override { return FactorKind::SC; }
  const std::vector<SlotVar>& variables() const override { return vars_; }
  double evaluate(const State& state) const override;
  double linearize(const State& state, FactorLinearization& lin) const override;

private:
  int slot_;
  ScParams params_;
  double log_target_;
  std::vector<SlotVar> vars_;
};

struct PsParams {
  double weight = 1.0;
  double rot_weight = 1.0;  // omega_r
  Pose target;
};

class PsFactor : public Factor {
public:
  PsFactor(int slot, PsParams params);

  FactorKind kind() const override { return FactorKind::PS; }
  const std::vector<SlotVar>& variables() const override { return vars_; }
  double evaluate(const State& state) const override;
  double linearize(const State& state, FactorLinearization& lin) const override;

private:
  int slot_;
  PsParams params_;
  std::vector<SlotVar> vars_;
};

}  // namespace sage
