#include "sage/slam.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sage {

const char* to_string(ConnectionType type) {
  switch (type) {
    case ConnectionType::Temporal: return "temporal";
    case ConnectionType::LocalLoop: return "local-loop";
    case ConnectionType::GlobalLoop: return "global-loop";
  }
  return "unknown";
}

bool KeyframeGraph::connected(KeyframeId a, KeyframeId b) const {
  for (const Connection& c : connections)
    if ((c.src == a && c.tgt == b) || (c.src == b && c.tgt == a)) return true;
  return false;
}

std::vector<KeyframeId> KeyframeGraph::ids() const {
  std::vector<KeyframeId> out;
  out.reserve(keyframes.size());
  for (const auto& [id, kf] : keyframes) out.push_back(id);
  return out;
}

Pipeline::Pipeline(const Camera& cam, const RunConfig& cfg)
    : cam_(cam), cfg_(cfg), fm_weights_(cfg.fm_weights()), rng_(cfg.seed) {}

TrackingOptions Pipeline::tracking_options() const {
  TrackingOptions opts;
  opts.lm.damp_init = cfg_.tracking_damp_init;
  opts.lm.damp_min = cfg_.tracking_damp_min;
  opts.lm.damp_max = cfg_.tracking_damp_max;
  opts.lm.up_mult = cfg_.tracking_damp_up;
  opts.lm.down_mult = cfg_.tracking_damp_down;
  opts.lm.max_iters = cfg_.tracking_max_iters;
  opts.lm.grad_tol = cfg_.tracking_grad_tol;
  opts.lm.step_ratio_tol = cfg_.tracking_step_tol;
  opts.lm.jacobian_recompute_ratio = cfg_.tracking_jacobian_ratio;
  opts.fm.weight = 1.0;
  opts.fm.level_weights = fm_weights_;
  opts.rp.weight = cfg_.rp_weight;
  opts.rp.sigma = cfg_.rp_sigma;
  opts.use_fm = cfg_.fm_enabled;
  opts.use_rp = cfg_.rp_enabled;
  return opts;
}

PairGeometricOptions Pipeline::pair_options() const {
  PairGeometricOptions opts;
  const TrackingOptions base = tracking_options();
  opts.lm = base.lm;
  opts.fm = base.fm;
  opts.smg.weight = cfg_.smg_weight;
  opts.smg.sigma = cfg_.smg_sigma;
  opts.use_fm = cfg_.fm_enabled;
  return opts;
}

KeyframeParams Pipeline::keyframe_params() const {
  KeyframeParams params;
  params.pyramid_levels = cfg_.pyramid_levels;
  params.pyramid_kernel = cfg_.pyramid_kernel;
  params.pyramid_sigma = cfg_.pyramid_sigma;
  params.histogram_bins = cfg_.hist_bins;
  params.histogram_bandwidth = cfg_.hist_bandwidth;
  return params;
}

double Pipeline::pose_distance(const Pose& a, const Pose& b) const {
  const Pose rel = a.inverse() * b;
  return cfg_.loop_rot_weight * rel.rotation_angle() +
         cfg_.loop_trans_weight * (a.translation() - b.translation()).norm();
}

Pipeline::PairMetrics Pipeline::match_pair(const Keyframe& src, const Keyframe& tgt) {
  PairMetrics out;
  MatchingParams mp;
  mp.max_candidates = cfg_.match_candidates;
  mp.grid_step = cfg_.match_grid_step;
  const MatchSet candidates = match_descriptors(src.descriptors, tgt.descriptors, mp);
  FilterParams fp;
  fp.noise_multiplier = cfg_.noise_bound_multiplier;
  fp.ransac_iterations = cfg_.ransac_iterations;
  fp.consensus_fraction = cfg_.ransac_consensus;
  FilterResult filtered = filter_matches_3d(candidates, src, tgt, cam_, fp, rng_);
  out.filter_ok = filtered.ok;
  if (filtered.ok) {
    out.filtered = std::move(filtered.inliers);
    out.inlier_ratio = inlier_ratio(out.filtered, candidates);
  }
  return out;
}

double Pipeline::initial_scale(const Keyframe& ref, const Keyframe& fresh, const Pose& rel) const {
  std::vector<double> ratios;
  for (int r = 0; r < ref.height(); r += 2) {
    for (int c = 0; c < ref.width(); c += 2) {
      if (!ref.mask.at(r, c)) continue;
      double d = ref.prior.compose_at(r, c);
      if (d < kDepthFloor) d = kDepthFloor;
      const Vec3 p = rel * unproject(cam_, Vec2(c, r), d);
      Vec2 uv;
      if (!project_checked(cam_, p, uv)) continue;
      const int ur = static_cast<int>(std::lround(uv.y()));
      const int uc = static_cast<int>(std::lround(uv.x()));
      if (!fresh.mask.in_bounds(ur, uc) || !fresh.mask.at(ur, uc)) continue;
      const double avg = fresh.prior.average.at(ur, uc);
      if (avg > 1e-9) ratios.push_back(p.z() / avg);
    }
  }
  if (ratios.empty()) return ref.prior.scale;
  const size_t mid = ratios.size() / 2;
  std::nth_element(ratios.begin(), ratios.begin() + mid, ratios.end());
  return std::clamp(ratios[mid], 1e-3, 1e3);
}

KeyframeId Pipeline::select_reference(const Pose& last_pose, const MatX& last_signature) const {
  double best_sim = 0.0;
  KeyframeId best_sim_id = -1;
  std::vector<std::pair<double, KeyframeId>> by_distance;
  for (const auto& [id, kf] : graph_.keyframes) {
    const double sim = signature_similarity(kf->signature, last_signature);
    if (sim > best_sim) {
      best_sim = sim;
      best_sim_id = id;
    }
    by_distance.emplace_back(pose_distance(kf->pose, last_pose), id);
  }
  std::sort(by_distance.begin(), by_distance.end());
  for (const auto& [dist, id] : by_distance) {
    const double sim = signature_similarity(graph_.at(id).signature, last_signature);
    if (sim >= cfg_.ref_similarity_factor * best_sim) return id;
  }
  return best_sim_id;
}

KeyframeDecision Pipeline::should_create_keyframe(const TrackingDiagnostics& diag) const {
  KeyframeDecision out;
  out.flow_ok = diag.mean_flow >= cfg_.kf_min_flow_frac * cam_.width;
  if (diag.overlap_area < cfg_.kf_max_overlap_area) out.reasons.push_back("overlap_area");
  if (diag.overlap_inlier < cfg_.kf_max_overlap_inlier) out.reasons.push_back("overlap_inlier");
  if (diag.match_inlier_ratio < cfg_.kf_max_inlier_ratio) out.reasons.push_back("inlier_ratio");
  out.create = out.flow_ok && !out.reasons.empty();
  return out;
}

KeyframeId Pipeline::insert_keyframe(FrameId frame_id, Keyframe&& kf, const Pose& pose) {
  const KeyframeId id = next_id_++;
  auto owned = std::make_unique<Keyframe>(std::move(kf));
  owned->id = id;
  owned->frame_id = frame_id;
  owned->pose = pose;
  graph_.keyframes.emplace(id, std::move(owned));
  return id;
}

FrameResult Pipeline::process_frame(FrameId frame_id, FrameData data) {
  FrameResult result;
  Keyframe frame = make_keyframe(std::move(data), keyframe_params(), 1.0);

  if (graph_.keyframes.empty()) {
    // Bootstrap: the first frame anchors the graph.
    frame.prior.scale = 1.0;
    last_signature_ = frame.signature;
    last_pose_ = Pose::identity();
    has_last_ = true;
    anchor_pose_ = Pose::identity();
    anchor_scale_ = 1.0;
    const KeyframeId id = insert_keyframe(frame_id, std::move(frame), Pose::identity());
    result.tracked = true;
    result.keyframe_created = true;
    result.keyframe_id = id;
    result.pose = Pose::identity();
    log_.push_back("frame " + std::to_string(frame_id) + ": bootstrap keyframe 0");
    return result;
  }

  const KeyframeId ref_id = select_reference(last_pose_, last_signature_);
  const Keyframe& ref = graph_.at(ref_id);
  result.diagnostics.reference = ref_id;

  PairMetrics pm = match_pair(ref, frame);
  const Pose init_rel = last_pose_.inverse() * ref.pose;
  const TrackingResult tracked =
      optimize_tracking(ref, frame, cam_, init_rel, pm.filtered, tracking_options());
  if (tracked.lost) {
    result.diagnostics.lost = true;
    log_.push_back("frame " + std::to_string(frame_id) + ": tracking lost");
    return result;
  }

  const Pose world_pose = ref.pose * tracked.relative.inverse();
  result.tracked = true;
  result.pose = world_pose;

  // Diagnostics against the reference keyframe.
  frame.prior.scale = initial_scale(ref, frame, tracked.relative);
  const FlowField flow = compute_flow(ref, frame, tracked.relative, cam_);
  const OverlapRatios overlap =
      overlap_ratios(ref, frame, tracked.relative, cam_, cfg_.gc_sigma);
  result.diagnostics.overlap_area = overlap.area;
  result.diagnostics.overlap_inlier = overlap.point_inlier;
  result.diagnostics.match_inlier_ratio = pm.inlier_ratio;
  result.diagnostics.mean_flow = flow.empty() ? 0.0 : mean_flow_magnitude(flow);

  last_pose_ = world_pose;
  last_signature_ = frame.signature;

  const KeyframeDecision decision = should_create_keyframe(result.diagnostics);
  if (!decision.create) return result;

  // Keyframe creation with temporal connections.
  const KeyframeId prev_id = graph_.keyframes.rbegin()->first;
  const KeyframeId new_id = insert_keyframe(frame_id, std::move(frame), world_pose);
  Keyframe& kf = graph_.at(new_id);
  result.keyframe_created = true;
  result.keyframe_id = new_id;

  {
    // The most recent keyframe connects unconditionally.
    PairMetrics edge = (prev_id == ref_id)
                           ? std::move(pm)
                           : match_pair(graph_.at(prev_id), kf);
    graph_.connections.push_back(
        {prev_id, new_id, ConnectionType::Temporal, std::move(edge.filtered)});
    kf.connections.push_back(prev_id);
    graph_.at(prev_id).connections.push_back(new_id);
  }
  int extra = 0;
  for (auto it = graph_.keyframes.rbegin();
       it != graph_.keyframes.rend() && 1 + extra < cfg_.kf_max_temporal_connections; ++it) {
    const KeyframeId old_id = it->first;
    if (old_id == new_id || old_id == prev_id) continue;
    PairMetrics edge = match_pair(*it->second, kf);
    if (!edge.filter_ok || edge.inlier_ratio < cfg_.kf_min_connect_inlier_ratio) continue;
    graph_.connections.push_back(
        {old_id, new_id, ConnectionType::Temporal, std::move(edge.filtered)});
    kf.connections.push_back(old_id);
    graph_.at(old_id).connections.push_back(new_id);
    ++extra;
  }
  log_.push_back("frame " + std::to_string(frame_id) + ": keyframe " + std::to_string(new_id) +
                 " (" + std::to_string(kf.connections.size()) + " temporal connections)");

  // Loop closure for the new keyframe, then one mapping round.
  if (cfg_.local_loop_enabled) {
    if (auto local = detect_local_loop(new_id)) {
      graph_.at(local->src).connections.push_back(local->tgt);
      graph_.at(local->tgt).connections.push_back(local->src);
      graph_.connections.push_back(std::move(*local));
      log_.push_back("keyframe " + std::to_string(new_id) + ": local loop with " +
                     std::to_string(graph_.connections.back().src));
    }
  }
  if (cfg_.global_loop_enabled) {
    for (const GlobalLoopCandidate& hit : detect_global_loop(new_id)) {
      if (close_global_loop(hit)) {
        last_pose_ = graph_.at(new_id).pose;
        log_.push_back("keyframe " + std::to_string(new_id) + ": global loop closed with " +
                       std::to_string(hit.candidate));
      }
    }
  }

  run_mapping_round(cfg_.map_max_iters);
  last_pose_ = graph_.at(new_id).pose;
  result.pose = last_pose_;
  return result;
}

Pipeline::ReferenceMetrics Pipeline::reference_pair_metrics(KeyframeId query) {
  ReferenceMetrics out;
  const Keyframe& q = graph_.at(query);
  const Connection* best = nullptr;
  double best_dist = 0.0;
  for (const Connection& c : graph_.connections) {
    if (c.type != ConnectionType::Temporal) continue;
    if (c.src != query && c.tgt != query) continue;
    const KeyframeId other = (c.src == query) ? c.tgt : c.src;
    const double dist = pose_distance(q.pose, graph_.at(other).pose);
    if (!best || dist < best_dist) {
      best = &c;
      best_dist = dist;
      out.partner = other;
    }
  }
  if (!best) return out;

  out.ok = true;
  out.pose_distance = best_dist;
  out.inlier_ratio = inlier_ratio(best->matches, best->matches);
  const Keyframe& partner = graph_.at(out.partner);
  const Pose rel = partner.pose.inverse() * q.pose;  // src = query
  out.overlap = overlap_ratios(q, partner, rel, cam_, cfg_.gc_sigma);
  const FlowField flow = compute_flow(q, partner, rel, cam_);
  out.mean_flow = flow.empty() ? 0.0 : mean_flow_magnitude(flow);
  return out;
}

Pipeline::VerifyOutcome Pipeline::verify_candidate(KeyframeId query, KeyframeId candidate,
                                                   const ReferenceMetrics& ref) {
  VerifyOutcome out;
  const Keyframe& q = graph_.at(query);
  const Keyframe& cand = graph_.at(candidate);

  // Appearance verification on the feature match inlier ratio.
  MatchingParams mp;
  mp.max_candidates = cfg_.match_candidates;
  mp.grid_step = cfg_.match_grid_step;
  const MatchSet candidates = match_descriptors(q.descriptors, cand.descriptors, mp);
  FilterParams fp;
  fp.noise_multiplier = cfg_.noise_bound_multiplier;
  fp.ransac_iterations = cfg_.ransac_iterations;
  fp.consensus_fraction = cfg_.ransac_consensus;
  FilterResult filtered = filter_matches_3d(candidates, q, cand, cam_, fp, rng_);
  if (!filtered.ok) return out;
  out.inlier_ratio = inlier_ratio(filtered.inliers, candidates);
  const double min_ratio =
      std::max(cfg_.loop_metric_multiplier * ref.inlier_ratio, cfg_.loop_min_inlier_ratio);
  if (out.inlier_ratio <= min_ratio) return out;

  // Geometric verification: pair-wise optimization seeded by the similarity
  // transform from match filtering.
  const Pose init_rel(filtered.transform.rotation, filtered.transform.translation);
  const double init_scale = filtered.transform.scale * q.prior.scale;
  const PairGeometricResult pg =
      optimize_pair_geometric(q, cand, cam_, init_rel, init_scale, filtered.inliers,
                              pair_options());
  if (pg.failed) return out;

  out.rel = pg.relative;
  out.query_scale = pg.src_scale;
  out.overlap = overlap_ratios(q, cand, pg.relative, cam_, cfg_.gc_sigma, pg.src_scale);
  const FlowField flow = compute_flow(q, cand, pg.relative, cam_, pg.src_scale);
  out.mean_flow = flow.empty() ? 0.0 : mean_flow_magnitude(flow);
  out.matches = std::move(filtered.inliers);

  const double mult = cfg_.loop_metric_multiplier;
  const bool area_ok =
      out.overlap.area > std::max(mult * ref.overlap.area, cfg_.loop_min_overlap_area);
  const bool inlier_ok = out.overlap.point_inlier >
                         std::max(mult * ref.overlap.point_inlier, cfg_.loop_min_overlap_inlier);
  const bool flow_ok = ref.mean_flow <= 0.0 || out.mean_flow < ref.mean_flow / mult;
  out.accepted = area_ok && inlier_ok && flow_ok;
  return out;
}

std::optional<Connection> Pipeline::detect_local_loop(KeyframeId query) {
  const ReferenceMetrics ref = reference_pair_metrics(query);
  if (!ref.ok) return std::nullopt;
  const Keyframe& q = graph_.at(query);

  struct Scored {
    KeyframeId id;
    VerifyOutcome outcome;
  };
  std::optional<Scored> best;
  for (const auto& [id, kf] : graph_.keyframes) {
    if (id == query || id == ref.partner) continue;
    if (query - id > cfg_.loop_local_window || id > query) continue;
    if (graph_.connected(id, query)) continue;
    const double dist = pose_distance(q.pose, kf->pose);
    if (dist >= cfg_.loop_distance_multiplier * ref.pose_distance) continue;
    VerifyOutcome outcome = verify_candidate(query, id, ref);
    if (!outcome.accepted) continue;
    if (!best || outcome.overlap.area > best->outcome.overlap.area ||
        (outcome.overlap.area == best->outcome.overlap.area &&
         outcome.mean_flow < best->outcome.mean_flow)) {
      best = Scored{id, std::move(outcome)};
    }
  }
  if (!best) return std::nullopt;

  // Store the connection with the older keyframe as source.
  Connection conn;
  conn.src = best->id;
  conn.tgt = query;
  conn.type = ConnectionType::LocalLoop;
  conn.matches.candidate_count = best->outcome.matches.candidate_count;
  conn.matches.pairs.reserve(best->outcome.matches.pairs.size());
  for (const auto& [xs, xt] : best->outcome.matches.pairs)
    conn.matches.pairs.emplace_back(xt, xs);
  return conn;
}

std::vector<GlobalLoopCandidate> Pipeline::detect_global_loop(KeyframeId query) {
  std::vector<GlobalLoopCandidate> out;
  const ReferenceMetrics ref = reference_pair_metrics(query);
  if (!ref.ok) return out;
  const Keyframe& q = graph_.at(query);
  const double ref_similarity =
      signature_similarity(q.signature, graph_.at(ref.partner).signature);

  std::vector<std::pair<double, KeyframeId>> scored;
  for (const auto& [id, kf] : graph_.keyframes) {
    if (query - id < cfg_.loop_global_gap) continue;
    if (graph_.connected(id, query)) continue;
    scored.emplace_back(signature_similarity(q.signature, kf->signature), id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (static_cast<int>(scored.size()) > cfg_.loop_global_candidates)
    scored.resize(cfg_.loop_global_candidates);

  struct Survivor {
    KeyframeId id;
    VerifyOutcome outcome;
  };
  std::vector<Survivor> survivors;
  for (const auto& [sim, id] : scored) {
    if (sim <= cfg_.loop_similarity_multiplier * ref_similarity) continue;
    VerifyOutcome outcome = verify_candidate(query, id, ref);
    if (outcome.accepted) survivors.push_back({id, std::move(outcome)});
  }
  std::sort(survivors.begin(), survivors.end(), [](const Survivor& a, const Survivor& b) {
    if (a.outcome.inlier_ratio != b.outcome.inlier_ratio)
      return a.outcome.inlier_ratio > b.outcome.inlier_ratio;
    return a.id < b.id;
  });

  std::vector<KeyframeId> selected;
  for (Survivor& s : survivors) {
    bool far_enough = true;
    for (const KeyframeId prev : selected)
      if (std::abs(s.id - prev) < cfg_.loop_global_gap) far_enough = false;
    if (!far_enough) continue;
    selected.push_back(s.id);

    GlobalLoopCandidate hit;
    hit.query = query;
    hit.candidate = s.id;
    hit.verified_rel = s.outcome.rel;
    hit.verified_query_scale = s.outcome.query_scale;
    hit.inlier_ratio = s.outcome.inlier_ratio;
    hit.matches.candidate_count = s.outcome.matches.candidate_count;
    for (const auto& [xs, xt] : s.outcome.matches.pairs) hit.matches.pairs.emplace_back(xt, xs);
    out.push_back(std::move(hit));
  }
  return out;
}

bool Pipeline::close_global_loop(const GlobalLoopCandidate& hit) {
  std::vector<const Keyframe*> kfs;
  std::vector<KeyframeId> ids;
  std::map<KeyframeId, int> index;
  for (const auto& [id, kf] : graph_.keyframes) {
    index[id] = static_cast<int>(kfs.size());
    ids.push_back(id);
    kfs.push_back(kf.get());
  }
  std::vector<std::pair<int, int>> edges;
  edges.reserve(graph_.connections.size());
  for (const Connection& c : graph_.connections)
    edges.emplace_back(index.at(c.src), index.at(c.tgt));

  GlobalLink link;
  link.src_index = index.at(hit.query);
  link.tgt_index = index.at(hit.candidate);
  link.target_rel = hit.verified_rel;
  link.target_src_scale = hit.verified_query_scale;
  link.target_tgt_scale = graph_.at(hit.candidate).prior.scale;

  PoseScaleOptions opts;
  opts.lm.damp_init = cfg_.tracking_damp_init;
  opts.lm.damp_min = cfg_.tracking_damp_min;
  opts.lm.damp_max = cfg_.tracking_damp_max;
  opts.lm.up_mult = cfg_.tracking_damp_up;
  opts.lm.down_mult = cfg_.tracking_damp_down;
  opts.lm.max_iters = cfg_.loop_max_iters;
  opts.lm.per_variable_relin = true;
  opts.lm.relin_pose = cfg_.loop_relin_pose;
  opts.lm.relin_scale = cfg_.loop_relin_scale;
  opts.lm.no_relin_stop = cfg_.loop_no_relin_stop;
  opts.rps_weight = cfg_.loop_rps_weight;
  opts.rps_global_weight = cfg_.loop_rps_global_weight;
  opts.sc_weight = cfg_.loop_sc_weight;
  opts.rps_rot_weight = cfg_.rps_rot_weight;
  opts.rps_scale_weight = cfg_.rps_scale_weight;

  const PoseScaleResult result = optimize_pose_scale_graph(kfs, edges, link, opts);
  if (!(result.lm.final_error < result.lm.initial_error)) return false;

  for (size_t i = 0; i < ids.size(); ++i) {
    Keyframe& kf = graph_.at(ids[i]);
    kf.pose = result.poses[i];
    kf.prior.scale = result.scales[i];
  }
  Connection conn;
  conn.src = hit.candidate;
  conn.tgt = hit.query;
  conn.type = ConnectionType::GlobalLoop;
  conn.matches = hit.matches;
  graph_.at(conn.src).connections.push_back(conn.tgt);
  graph_.at(conn.tgt).connections.push_back(conn.src);
  graph_.connections.push_back(std::move(conn));
  return true;
}

void Pipeline::run_mapping_round(int max_iters) {
  std::vector<KeyframeId> ids;
  std::map<KeyframeId, int> index;
  for (const auto& [id, kf] : graph_.keyframes) {
    index[id] = static_cast<int>(ids.size());
    ids.push_back(id);
  }
  const int n = static_cast<int>(ids.size());

  Problem problem;
  problem.resize(n);
  State state = State::sized(n);
  for (int i = 0; i < n; ++i) {
    Keyframe& kf = graph_.at(ids[i]);
    problem.pose_free[i] = 1;
    problem.scale_free[i] = 1;
    problem.code_free[i] = 1;
    problem.code_dims[i] = kf.prior.basis_count();
    state.pose[i] = kf.pose;
    state.log_scale[i] = std::log(kf.prior.scale);
    state.code[i] = kf.prior.code;
  }

  // First-keyframe anchors and per-keyframe code priors.
  PsParams ps;
  ps.weight = cfg_.anchor_weight;
  ps.rot_weight = cfg_.ps_rot_weight;
  ps.target = anchor_pose_;
  problem.add(std::make_unique<PsFactor>(0, ps));
  ScParams sc;
  sc.weight = cfg_.anchor_weight;
  sc.target_scale = anchor_scale_;
  problem.add(std::make_unique<ScFactor>(0, sc));
  for (int i = 0; i < n; ++i) {
    CdParams cd;
    cd.weight = cfg_.cd_weight;
    problem.add(std::make_unique<CdFactor>(i, graph_.at(ids[i]).prior.basis_count(), cd));
  }

  for (const Connection& c : graph_.connections) {
    const int s = index.at(c.src);
    const int t = index.at(c.tgt);
    const Keyframe* src = &graph_.at(c.src);
    const Keyframe* tgt = &graph_.at(c.tgt);
    if (cfg_.fm_enabled) {
      FmParams fm;
      fm.weight = 1.0;
      fm.level_weights = fm_weights_;
      problem.add(std::make_unique<FmFactor>(s, t, src, tgt, cam_, fm));
    }
    GcParams gc;
    gc.weight = cfg_.gc_weight;
    gc.sigma = cfg_.gc_sigma;
    problem.add(std::make_unique<GcFactor>(s, t, src, tgt, cam_, MatchSet{}, gc));
  }

  LMConfig lm;
  lm.damp_init = cfg_.tracking_damp_init;
  lm.damp_min = cfg_.tracking_damp_min;
  lm.damp_max = cfg_.tracking_damp_max;
  lm.up_mult = cfg_.tracking_damp_up;
  lm.down_mult = cfg_.tracking_damp_down;
  lm.max_iters = max_iters;
  lm.per_variable_relin = true;
  lm.relin_pose = cfg_.map_relin_pose;
  lm.relin_scale = cfg_.map_relin_scale;
  lm.relin_code = cfg_.map_relin_code;
  lm.no_relin_stop = cfg_.map_no_relin_stop;
  lm_minimize(problem, state, lm);

  for (int i = 0; i < n; ++i) {
    Keyframe& kf = graph_.at(ids[i]);
    kf.pose = state.pose[i];
    kf.prior.scale = std::exp(state.log_scale[i]);
    kf.prior.code = state.code[i];
  }
}

void Pipeline::finalize() {
  for (int round = 0; round < cfg_.map_post_rounds; ++round)
    run_mapping_round(cfg_.map_max_iters);
}

Trajectory Pipeline::keyframe_trajectory() const {
  Trajectory out;
  for (const auto& [id, kf] : graph_.keyframes) out.append(kf->frame_id, kf->pose);
  return out;
}

}  // namespace sage
