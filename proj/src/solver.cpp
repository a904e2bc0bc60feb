#include "sage/solver.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace sage {

const char* to_string(LMStatus status) {
  switch (status) {
    case LMStatus::MaxIterations: return "max_iterations";
    case LMStatus::GradientConverged: return "gradient_converged";
    case LMStatus::StepConverged: return "step_converged";
    case LMStatus::Stalled: return "stalled";
    case LMStatus::NoRelinearization: return "no_relinearization";
  }
  return "unknown";
}

double Problem::total_error(const State& state) const {
  double total = 0.0;
  for (const auto& f : factors) total += f->evaluate(state);
  return total;
}

namespace {

struct VarIndex {
  std::vector<int> pose_offset;   // -1 when fixed
  std::vector<int> scale_offset;
  std::vector<int> code_offset;
  int total = 0;
};

VarIndex build_index(const Problem& p) {
  VarIndex idx;
  const int n = p.slots();
  idx.pose_offset.assign(n, -1);
  idx.scale_offset.assign(n, -1);
  idx.code_offset.assign(n, -1);
  int off = 0;
  for (int s = 0; s < n; ++s) {
    if (p.pose_free[s]) {
      idx.pose_offset[s] = off;
      off += 6;
    }
    if (p.scale_free[s]) {
      idx.scale_offset[s] = off;
      off += 1;
    }
    if (p.code_free[s]) {
      idx.code_offset[s] = off;
      off += p.code_dims[s];
    }
  }
  idx.total = off;
  return idx;
}

int var_offset(const VarIndex& idx, const SlotVar& v) {
  switch (v.kind) {
    case VarKind::Pose: return idx.pose_offset[v.slot];
    case VarKind::Scale: return idx.scale_offset[v.slot];
    case VarKind::Code: return idx.code_offset[v.slot];
  }
  return -1;
}

void apply_step(const Problem& p, const VarIndex& idx, const VecX& delta, State& state) {
  for (int s = 0; s < p.slots(); ++s) {
    if (idx.pose_offset[s] >= 0)
      state.pose[s] = state.pose[s].retract(delta.segment<6>(idx.pose_offset[s]));
    if (idx.scale_offset[s] >= 0) state.log_scale[s] += delta(idx.scale_offset[s]);
    if (idx.code_offset[s] >= 0)
      state.code[s] += delta.segment(idx.code_offset[s], p.code_dims[s]);
  }
}

// Relative step magnitude against the current local parameter values,
// mirroring the max-parameter-increment-ratio termination criterion.
double max_step_ratio(const Problem& p, const VarIndex& idx, const VecX& delta,
                      const State& state) {
  double worst = 0.0;
  auto update = [&](double d, double magnitude) {
    const double ratio = std::abs(d) / (std::abs(magnitude) + 1e-8);
    if (ratio > worst) worst = ratio;
  };
  for (int s = 0; s < p.slots(); ++s) {
    if (idx.pose_offset[s] >= 0) {
      Vec6 local;
      local << state.pose[s].translation(), so3_log(state.pose[s].rotation());
      for (int i = 0; i < 6; ++i) update(delta(idx.pose_offset[s] + i), local(i));
    }
    if (idx.scale_offset[s] >= 0) update(delta(idx.scale_offset[s]), state.log_scale[s]);
    if (idx.code_offset[s] >= 0)
      for (int i = 0; i < p.code_dims[s]; ++i)
        update(delta(idx.code_offset[s] + i), state.code[s](i));
  }
  return worst;
}

// Snapshot of the variables a factor was linearized at.
struct LinPoint {
  std::vector<Pose> pose;
  std::vector<double> scale;
  std::vector<VecX> code;

  void capture(const Factor& f, const State& state) {
    const auto& vars = f.variables();
    pose.clear();
    scale.clear();
    code.clear();
    for (const SlotVar& v : vars) {
      switch (v.kind) {
        case VarKind::Pose: pose.push_back(state.pose[v.slot]); break;
        case VarKind::Scale: scale.push_back(state.log_scale[v.slot]); break;
        case VarKind::Code: code.push_back(state.code[v.slot]); break;
      }
    }
  }

  bool moved_beyond(const Factor& f, const State& state, const LMConfig& cfg) const {
    const auto& vars = f.variables();
    size_t ip = 0, is = 0, ic = 0;
    for (const SlotVar& v : vars) {
      switch (v.kind) {
        case VarKind::Pose: {
          const Vec6 d = pose[ip++].local_delta(state.pose[v.slot]);
          if (d.cwiseAbs().maxCoeff() > cfg.relin_pose) return true;
          break;
        }
        case VarKind::Scale:
          if (std::abs(state.log_scale[v.slot] - scale[is++]) > cfg.relin_scale) return true;
          break;
        case VarKind::Code: {
          const VecX& cur = state.code[v.slot];
          if ((cur - code[ic++]).cwiseAbs().maxCoeff() > cfg.relin_code) return true;
          break;
        }
      }
    }
    return false;
  }
};

}  // namespace

LMResult lm_minimize(const Problem& problem, State& state, const LMConfig& cfg) {
  const VarIndex idx = build_index(problem);
  LMResult result;
  if (idx.total == 0) throw std::invalid_argument("lm_minimize: no free variables");

  const size_t nf = problem.factors.size();
  std::vector<FactorLinearization> lins(nf);
  std::vector<LinPoint> lin_points(nf);

  // Flag fixed variables so factors can skip their Jacobian columns.
  for (size_t fi = 0; fi < nf; ++fi) {
    const auto& vars = problem.factors[fi]->variables();
    lins[fi].active.assign(vars.size(), 1);
    for (size_t vi = 0; vi < vars.size(); ++vi)
      if (var_offset(idx, vars[vi]) < 0) lins[fi].active[vi] = 0;
  }

  auto relinearize = [&](size_t fi) {
    problem.factors[fi]->linearize(state, lins[fi]);
    lin_points[fi].capture(*problem.factors[fi], state);
  };

  for (size_t fi = 0; fi < nf; ++fi) relinearize(fi);
  // Cached linearization values go stale after steps; track the true error.
  double current_error = problem.total_error(state);
  result.initial_error = current_error;
  double error_at_lin = current_error;

  MatX hessian(idx.total, idx.total);
  VecX gradient(idx.total);
  double lambda = cfg.damp_init;
  int no_relin_streak = 0;
  bool first_iteration = true;

  auto clamp_damp = [&](double v) { return std::min(std::max(v, cfg.damp_min), cfg.damp_max); };

  while (true) {
    // Relinearization decision.
    int relin_count = 0;
    if (first_iteration) {
      relin_count = static_cast<int>(nf);  // done above
    } else if (cfg.per_variable_relin) {
      for (size_t fi = 0; fi < nf; ++fi) {
        if (lin_points[fi].moved_beyond(*problem.factors[fi], state, cfg)) {
          relinearize(fi);
          ++relin_count;
        }
      }
    } else {
      if (error_at_lin - current_error > cfg.jacobian_recompute_ratio * current_error) {
        for (size_t fi = 0; fi < nf; ++fi) relinearize(fi);
        relin_count = static_cast<int>(nf);
        error_at_lin = current_error;
      }
    }
    first_iteration = false;

    if (cfg.per_variable_relin && cfg.no_relin_stop > 0) {
      no_relin_streak = (relin_count == 0) ? no_relin_streak + 1 : 0;
      if (no_relin_streak >= cfg.no_relin_stop) {
        result.status = LMStatus::NoRelinearization;
        break;
      }
    }

    // Assemble the normal equations from the cached linearizations.
    hessian.setZero();
    gradient.setZero();
    for (size_t fi = 0; fi < nf; ++fi) {
      const auto& vars = problem.factors[fi]->variables();
      const auto& lin = lins[fi];
      for (size_t i = 0; i < vars.size(); ++i) {
        const int oi = var_offset(idx, vars[i]);
        if (oi < 0) continue;
        const int di = static_cast<int>(lin.grad[i].size());
        gradient.segment(oi, di) += lin.grad[i];
        for (size_t j = i; j < vars.size(); ++j) {
          const int oj = var_offset(idx, vars[j]);
          if (oj < 0) continue;
          const int dj = static_cast<int>(lin.grad[j].size());
          hessian.block(oi, oj, di, dj) += lin.hess[i][j];
          if (i != j) hessian.block(oj, oi, dj, di) += lin.hess[i][j].transpose();
        }
      }
    }

    if (gradient.cwiseAbs().maxCoeff() < cfg.grad_tol) {
      result.status = LMStatus::GradientConverged;
      break;
    }

    const VecX h_diag = hessian.diagonal();
    bool first_solve = true;
    bool stop = false;
    while (true) {
      MatX damped = hessian;
      damped.diagonal() += lambda * h_diag;
      Eigen::LDLT<MatX> ldlt(damped);
      VecX delta;
      bool solve_ok = ldlt.info() == Eigen::Success;
      if (solve_ok) {
        delta = ldlt.solve(-gradient);
        solve_ok = delta.allFinite();
      }
      if (solve_ok && first_solve &&
          max_step_ratio(problem, idx, delta, state) < cfg.step_ratio_tol) {
        result.status = LMStatus::StepConverged;
        stop = true;
        break;
      }
      first_solve = false;
      if (solve_ok) {
        State candidate = state;
        apply_step(problem, idx, delta, candidate);
        const double candidate_error = problem.total_error(candidate);
        if (std::isfinite(candidate_error) && candidate_error < current_error) {
          state = std::move(candidate);
          current_error = candidate_error;
          lambda = clamp_damp(lambda / cfg.down_mult);
          break;
        }
      }
      if (lambda < cfg.damp_max) {
        lambda = clamp_damp(lambda * cfg.up_mult);
      } else {
        result.status = LMStatus::Stalled;
        stop = true;
        break;
      }
    }
    if (stop) break;

    ++result.iterations;
    result.trace.push_back({current_error, lambda, relin_count > 0});
    if (result.iterations >= cfg.max_iters) {
      result.status = LMStatus::MaxIterations;
      break;
    }
  }

  result.final_error = current_error;
  return result;
}

// ---------------------------------------------------------------------------

TrackingResult optimize_tracking(const Keyframe& ref, const Keyframe& frame, const Camera& cam,
                                 const Pose& init_rel, const MatchSet& matches,
                                 const TrackingOptions& opts) {
  Problem problem;
  problem.resize(2);
  problem.pose_free[1] = 1;
  problem.code_dims[0] = ref.prior.basis_count();
  problem.code_dims[1] = frame.prior.basis_count();

  State state = State::sized(2);
  state.pose[0] = Pose::identity();
  state.pose[1] = init_rel.inverse();
  state.log_scale[0] = std::log(ref.prior.scale);
  state.log_scale[1] = std::log(frame.prior.scale);
  state.code[0] = ref.prior.code;
  state.code[1] = frame.prior.code;

  if (opts.use_fm) problem.add(std::make_unique<FmFactor>(0, 1, &ref, &frame, cam, opts.fm));
  if (opts.use_rp && matches.size() > 0)
    problem.add(std::make_unique<RpFactor>(0, 1, &ref, cam, matches, opts.rp));

  TrackingResult out;
  if (problem.factors.empty()) {
    out.lost = true;
    return out;
  }
  int support = 0;
  for (const auto& f : problem.factors) support += f->support_size(state);
  if (support == 0) {
    out.lost = true;
    return out;
  }

  out.lm = lm_minimize(problem, state, opts.lm);
  out.relative = state.pose[1].inverse();
  return out;
}

PairGeometricResult optimize_pair_geometric(const Keyframe& src, const Keyframe& tgt,
                                            const Camera& cam, const Pose& init_rel,
                                            double init_src_scale, const MatchSet& matches,
                                            const PairGeometricOptions& opts) {
  PairGeometricResult out;
  if (matches.empty()) {
    out.failed = true;
    return out;
  }

  Problem problem;
  problem.resize(2);
  problem.pose_free[0] = 1;
  problem.scale_free[0] = 1;
  problem.code_dims[0] = src.prior.basis_count();
  problem.code_dims[1] = tgt.prior.basis_count();

  State state = State::sized(2);
  state.pose[0] = init_rel;  // pose[1] = identity, so rel == pose[0]
  state.pose[1] = Pose::identity();
  state.log_scale[0] = std::log(init_src_scale);
  state.log_scale[1] = std::log(tgt.prior.scale);
  state.code[0] = src.prior.code;
  state.code[1] = tgt.prior.code;

  if (opts.use_fm) problem.add(std::make_unique<FmFactor>(0, 1, &src, &tgt, cam, opts.fm));
  problem.add(std::make_unique<SmgFactor>(0, 1, &src, &tgt, cam, matches, opts.smg));

  int support = 0;
  for (const auto& f : problem.factors) support += f->support_size(state);
  if (support == 0) {
    out.failed = true;
    return out;
  }

  out.lm = lm_minimize(problem, state, opts.lm);
  out.relative = state.pose[0];
  out.src_scale = std::exp(state.log_scale[0]);
  return out;
}

PoseScaleResult optimize_pose_scale_graph(const std::vector<const Keyframe*>& keyframes,
                                          const std::vector<std::pair<int, int>>& edges,
                                          const GlobalLink& link, const PoseScaleOptions& opts) {
  const int n = static_cast<int>(keyframes.size());
  if (n < 2) throw std::invalid_argument("optimize_pose_scale_graph: need at least two keyframes");

  // Connectivity check over edges plus the link.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  for (const auto& [a, b] : edges) unite(a, b);
  if (link.src_index >= 0) unite(link.src_index, link.tgt_index);
  for (int i = 1; i < n; ++i)
    if (find(i) != find(0))
      throw std::runtime_error("optimize_pose_scale_graph: disconnected graph");

  Problem problem;
  problem.resize(n);
  State state = State::sized(n);
  for (int i = 0; i < n; ++i) {
    problem.pose_free[i] = i > 0;  // first keyframe pose is the rigid gauge
    problem.scale_free[i] = 1;
    state.pose[i] = keyframes[i]->pose;
    state.log_scale[i] = std::log(keyframes[i]->prior.scale);
    state.code[i] = VecX::Zero(0);
  }

  for (const auto& [a, b] : edges) {
    const int s = std::min(a, b);
    const int t = std::max(a, b);
    RpsParams params;
    params.weight = opts.rps_weight;
    params.rot_weight = opts.rps_rot_weight;
    params.scale_weight = opts.rps_scale_weight;
    params.target_rel = state.pose[t].inverse() * state.pose[s];
    params.target_src_scale = std::exp(state.log_scale[s]);
    params.target_tgt_scale = std::exp(state.log_scale[t]);
    problem.add(std::make_unique<RpsFactor>(s, t, params));
  }

  if (link.src_index >= 0) {
    RpsParams params;
    params.weight = opts.rps_global_weight;
    params.rot_weight = opts.rps_rot_weight;
    params.scale_weight = opts.rps_scale_weight;
    params.target_rel = link.target_rel;
    params.target_src_scale = link.target_src_scale;
    params.target_tgt_scale = link.target_tgt_scale;
    problem.add(std::make_unique<RpsFactor>(link.src_index, link.tgt_index, params));

    ScParams sc;
    sc.weight = opts.sc_weight;
    sc.target_scale = link.target_src_scale;
    problem.add(std::make_unique<ScFactor>(link.src_index, sc));
  }

  PoseScaleResult out;
  out.lm = lm_minimize(problem, state, opts.lm);
  out.poses = state.pose;
  out.scales.resize(n);
  for (int i = 0; i < n; ++i) out.scales[i] = std::exp(state.log_scale[i]);
  return out;
}

}  // namespace sage
