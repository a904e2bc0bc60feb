#pragma once

#include "sage/factors.hpp"
#include "sage/match_set.hpp"

#include <memory>
#include <vector>

namespace sage {

struct LMConfig {
  double damp_init = 1e-4;
  double damp_min = 1e-6;
  double damp_max = 1e-2;
  double up_mult = 100.0;
  double down_mult = 10.0;
  int max_iters = 40;
  double grad_tol = 1e-4;
  double step_ratio_tol = 1e-2;
  // Error-ratio relinearization gate: the Jacobian is recomputed only when
  // the error decrease since the last linearization exceeds this fraction of
  // the current error.
  double jacobian_recompute_ratio = 1e-2;
  // Per-variable relinearization gating. When enabled, a factor is
  // relinearized only when one of its variables moved beyond the threshold of
  // its kind since the factor's last linearization; `no_relin_stop`
  // consecutive iterations without any relinearization terminate the solve.
  bool per_variable_relin = false;
  double relin_pose = 1e-3;
  double relin_scale = 1e-3;
  double relin_code = 1e-2;
  int no_relin_stop = 0;
};

enum class LMStatus {
  MaxIterations,
  GradientConverged,
  StepConverged,
  Stalled,
  NoRelinearization,
};

const char* to_string(LMStatus status);

struct LMIterRecord {
  double error = 0.0;
  double lambda = 0.0;
  bool relinearized = false;
};

struct LMResult {
  double initial_error = 0.0;
  double final_error = 0.0;
  int iterations = 0;       // accepted steps
  LMStatus status = LMStatus::MaxIterations;
  std::vector<LMIterRecord> trace;
};

// Variable blocks over keyframe slots plus the factors that bind them.
struct Problem {
  std::vector<uint8_t> pose_free;
  std::vector<uint8_t> scale_free;
  std::vector<uint8_t> code_free;
  std::vector<int> code_dims;
  std::vector<std::unique_ptr<Factor>> factors;

  int slots() const { return static_cast<int>(pose_free.size()); }

  void resize(int n) {
    pose_free.assign(n, 0);
    scale_free.assign(n, 0);
    code_free.assign(n, 0);
    code_dims.assign(n, 0);
  }

  Factor* add(std::unique_ptr<Factor> f) {
    factors.push_back(std::move(f));
    return factors.back().get();
  }

  double total_error(const State& state) const;
};

// Damped Gauss-Newton over the problem's free variables. Accepted steps
// strictly decrease the total error; damping moves by the configured
// multipliers inside [damp_min, damp_max].
LMResult lm_minimize(const Problem& problem, State& state, const LMConfig& cfg);

// ---------------------------------------------------------------------------
// Pair-wise problems

struct TrackingOptions {
  LMConfig lm;
  FmParams fm;
  RpParams rp;
  bool use_fm = true;
  bool use_rp = true;
};

struct TrackingResult {
  bool lost = false;
  Pose relative;  // T^frame_ref
  LMResult lm;
};

// Frame-to-keyframe alignment over the relative pose (FM + RP).
TrackingResult optimize_tracking(const Keyframe& ref, const Keyframe& frame, const Camera& cam,
                                 const Pose& init_rel, const MatchSet& matches,
                                 const TrackingOptions& opts);

struct PairGeometricOptions {
  LMConfig lm;
  FmParams fm;
  SmgParams smg;
  bool use_fm = true;
};

struct PairGeometricResult {
  bool failed = false;
  Pose relative;       // T^tgt_src
  double src_scale = 1.0;  // source depth scale consistent with the target
  LMResult lm;
};

// Pose + source-scale alignment of a keyframe pair (FM + SMG), used by the
// loop verification.
PairGeometricResult optimize_pair_geometric(const Keyframe& src, const Keyframe& tgt,
                                            const Camera& cam, const Pose& init_rel,
                                            double init_src_scale, const MatchSet& matches,
                                            const PairGeometricOptions& opts);

// ---------------------------------------------------------------------------
// Pose-scale graph

struct GlobalLink {
  int src_index = -1;  // query keyframe (index into the keyframe vector)
  int tgt_index = -1;  // matched keyframe
  Pose target_rel;     // verified T^tgt_src
  double target_src_scale = 1.0;
  double target_tgt_scale = 1.0;
};

struct PoseScaleOptions {
  LMConfig lm;
  double rps_weight = 1.0;         // existing connections
  double rps_global_weight = 5.0;  // the new global link
  double sc_weight = 10.0;
  double rps_rot_weight = 5.0;
  double rps_scale_weight = 0.5;
};

struct PoseScaleResult {
  LMResult lm;
  std::vector<Pose> poses;
  std::vector<double> scales;
};

// Lightweight loop-closure optimization over all poses and depth scales.
// Edges index into `keyframes`; the first keyframe's pose is held fixed as
// the rigid gauge while the global link's SC factor pins the scale gauge.
// Throws when the graph (edges + link) is disconnected.
PoseScaleResult optimize_pose_scale_graph(const std::vector<const Keyframe*>& keyframes,
                                          const std::vector<std::pair<int, int>>& edges,
                                          const GlobalLink& link, const PoseScaleOptions& opts);

}  // namespace sage
