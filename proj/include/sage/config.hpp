#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sage {

// Flat key-value run configuration. Every hyperparameter of the pipeline
// lives here with its default; unknown keys are rejected on load.
struct RunConfig {
  // simulation
  uint64_t seed = 42;
  int height = 64;
  int width = 80;
  int frames = 30;
  std::string trajectory = "sweep";
  int basis_count = 8;
  int feature_channels = 8;
  int descriptor_channels = 16;
  double noise_depth_rel = 0.0;
  double noise_feature_abs = 0.0;
  double noise_pose_init = 0.0;
  std::string mask = "full";

  // pyramids
  int pyramid_levels = 4;
  int pyramid_kernel = 5;
  double pyramid_sigma = 1.0;

  // factors
  std::string fm_level_weights = "10,9,8,7";
  double rp_weight = 0.1;
  double rp_sigma = 0.03;
  double smg_weight = 0.1;
  double smg_sigma = 0.1;
  double gc_weight = 0.1;
  double gc_sigma = 0.03;
  double cd_weight = 1e-4;
  double rps_rot_weight = 5.0;
  double rps_scale_weight = 0.5;
  double ps_rot_weight = 1.0;
  double anchor_weight = 1e4;  // PS and SC weight on the first keyframe

  // matching
  int match_candidates = 256;
  int match_grid_step = 2;
  double noise_bound_multiplier = 2.0;
  int ransac_iterations = 500;
  double ransac_consensus = 0.8;

  // tracking LM
  int tracking_max_iters = 40;
  double tracking_damp_init = 1e-4;
  double tracking_damp_min = 1e-6;
  double tracking_damp_max = 1e-2;
  double tracking_damp_up = 100.0;
  double tracking_damp_down = 10.0;
  double tracking_grad_tol = 1e-4;
  double tracking_step_tol = 1e-2;
  double tracking_jacobian_ratio = 1e-2;
  double ref_similarity_factor = 0.6;

  // keyframe policy
  double kf_max_overlap_area = 0.8;
  double kf_max_overlap_inlier = 0.9;
  double kf_max_inlier_ratio = 0.4;
  double kf_min_flow_frac = 0.08;
  int kf_max_temporal_connections = 3;
  double kf_min_connect_inlier_ratio = 0.7;

  // loop closure
  int loop_local_window = 9;
  double loop_rot_weight = 1.0;
  double loop_trans_weight = 1.0;
  double loop_distance_multiplier = 5.0;
  double loop_metric_multiplier = 0.7;
  double loop_min_inlier_ratio = 0.2;
  double loop_min_overlap_area = 0.5;
  double loop_min_overlap_inlier = 0.5;
  int loop_global_gap = 10;
  int loop_global_candidates = 5;
  double loop_similarity_multiplier = 0.7;
  double loop_rps_weight = 1.0;
  double loop_rps_global_weight = 5.0;
  double loop_sc_weight = 10.0;
  int loop_max_iters = 200;
  int loop_no_relin_stop = 5;
  double loop_relin_pose = 3e-3;
  double loop_relin_scale = 1e-2;

  // mapping
  double map_relin_pose = 1e-3;
  double map_relin_scale = 1e-3;
  double map_relin_code = 1e-2;
  int map_max_iters = 20;
  int map_no_relin_stop = 5;
  int map_post_rounds = 3;

  // losses / evaluation
  int hist_bins = 100;          // K
  double hist_bandwidth = 0.008;  // beta = 4 / (5K)
  double hist_margin = 0.3;     // eta_hist
  double si_epsilon = 1e-4;
  int rpe_delta = 7;

  // pipeline switches
  bool deterministic = true;
  int threads = 1;
  bool fm_enabled = true;
  bool rp_enabled = true;
  bool local_loop_enabled = true;
  bool global_loop_enabled = true;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::vector<std::pair<std::string, std::string>> items() const;

  // Parses "key = value" lines; '#' starts a comment. Unknown keys throw.
  void load_file(const std::string& path);

  std::vector<double> fm_weights() const;
};

}  // namespace sage
