#pragma once

#include "sage/config.hpp"
#include "sage/eval.hpp"
#include "sage/flow.hpp"
#include "sage/keyframe.hpp"
#include "sage/matching.hpp"
#include "sage/rng.hpp"
#include "sage/solver.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sage {

enum class ConnectionType { Temporal, LocalLoop, GlobalLoop };

const char* to_string(ConnectionType type);

struct Connection {
  KeyframeId src;  // older keyframe
  KeyframeId tgt;  // newer keyframe
  ConnectionType type;
  MatchSet matches;  // filtered matches used by sparse diagnostics
};

struct KeyframeGraph {
  std::map<KeyframeId, std::unique_ptr<Keyframe>> keyframes;
  std::vector<Connection> connections;

  Keyframe& at(KeyframeId id) { return *keyframes.at(id); }
  const Keyframe& at(KeyframeId id) const { return *keyframes.at(id); }
  bool connected(KeyframeId a, KeyframeId b) const;
  std::vector<KeyframeId> ids() const;
};

struct TrackingDiagnostics {
  double overlap_area = 0.0;
  double overlap_inlier = 0.0;
  double match_inlier_ratio = 0.0;
  double mean_flow = 0.0;
  bool lost = false;
  KeyframeId reference = -1;
};

struct KeyframeDecision {
  bool create = false;
  bool flow_ok = false;
  std::vector<std::string> reasons;
};

struct FrameResult {
  bool tracked = false;
  bool keyframe_created = false;
  KeyframeId keyframe_id = -1;
  Pose pose;  // world pose when tracked
  TrackingDiagnostics diagnostics;
};

// Verified global loop pair: candidate keyframe is the older side.
struct GlobalLoopCandidate {
  KeyframeId query = -1;
  KeyframeId candidate = -1;
  Pose verified_rel;          // T^candidate_query
  double verified_query_scale = 1.0;
  double inlier_ratio = 0.0;
  MatchSet matches;           // src = candidate, tgt = query
};

// Full pipeline: camera tracking, keyframe creation with temporal
// connections, per-keyframe local/global loop closure and a mapping round, in
// a fixed single-threaded order.
class Pipeline {
public:
  Pipeline(const Camera& cam, const RunConfig& cfg);

  FrameResult process_frame(FrameId frame_id, FrameData data);
  // Post-session refinement mapping rounds.
  void finalize();

  const KeyframeGraph& graph() const { return graph_; }
  const Camera& camera() const { return cam_; }
  Trajectory keyframe_trajectory() const;
  const std::vector<std::string>& log() const { return log_; }

  // Exposed for tests; these are the pipeline's own building blocks.
  KeyframeId select_reference(const Pose& last_pose, const MatX& last_signature) const;
  KeyframeDecision should_create_keyframe(const TrackingDiagnostics& diag) const;
  std::optional<Connection> detect_local_loop(KeyframeId query);
  std::vector<GlobalLoopCandidate> detect_global_loop(KeyframeId query);
  bool close_global_loop(const GlobalLoopCandidate& hit);
  void run_mapping_round(int max_iters);

private:
  struct PairMetrics {
    MatchSet filtered;
    double inlier_ratio = 0.0;
    bool filter_ok = false;
  };

  // Reference-pair thresholds for loop verification.
  struct ReferenceMetrics {
    bool ok = false;
    KeyframeId partner = -1;
    double pose_distance = 0.0;
    double inlier_ratio = 0.0;
    OverlapRatios overlap;
    double mean_flow = 0.0;
  };

  // Verified candidate geometry (query is the source side).
  struct VerifyOutcome {
    bool accepted = false;
    Pose rel;  // T^candidate_query
    double query_scale = 1.0;
    OverlapRatios overlap;
    double mean_flow = 0.0;
    double inlier_ratio = 0.0;
    MatchSet matches;  // src = query, tgt = candidate
  };

  PairMetrics match_pair(const Keyframe& src, const Keyframe& tgt);
  KeyframeId insert_keyframe(FrameId frame_id, Keyframe&& kf, const Pose& pose);
  double initial_scale(const Keyframe& ref, const Keyframe& fresh, const Pose& rel) const;
  double pose_distance(const Pose& a, const Pose& b) const;
  ReferenceMetrics reference_pair_metrics(KeyframeId query);
  VerifyOutcome verify_candidate(KeyframeId query, KeyframeId candidate,
                                 const ReferenceMetrics& ref);

  TrackingOptions tracking_options() const;
  PairGeometricOptions pair_options() const;
  KeyframeParams keyframe_params() const;

  Camera cam_;
  RunConfig cfg_;
  std::vector<double> fm_weights_;
  KeyframeGraph graph_;
  Rng rng_;
  KeyframeId next_id_ = 0;

  // Anchor targets of the first keyframe (PS + SC priors in mapping).
  Pose anchor_pose_;
  double anchor_scale_ = 1.0;

  // Last tracked frame state (for reference selection and tracking init).
  Pose last_pose_;
  MatX last_signature_;
  bool has_last_ = false;

  std::vector<std::string> log_;
};

}  // namespace sage
