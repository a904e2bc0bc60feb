#include "sage/runner.hpp"

#include "sage/io.hpp"
#include "sage/slam.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sage {

namespace fs = std::filesystem;

namespace {

SceneConfig scene_config(const RunConfig& cfg) {
  SceneConfig out;
  out.seed = cfg.seed;
  out.height = cfg.height;
  out.width = cfg.width;
  out.frames = cfg.frames;
  out.trajectory = trajectory_kind_from_string(cfg.trajectory);
  out.basis_count = cfg.basis_count;
  out.feature_channels = cfg.feature_channels;
  out.descriptor_channels = cfg.descriptor_channels;
  out.noise_depth_rel = cfg.noise_depth_rel;
  out.noise_feature_abs = cfg.noise_feature_abs;
  out.noise_pose_init = cfg.noise_pose_init;
  out.mask = mask_kind_from_string(cfg.mask);
  out.pyramid_levels = cfg.pyramid_levels;
  return out;
}

std::string depth_file(FrameId id) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "depth_%06d.sgdm", id);
  return buf;
}

}  // namespace

void cmd_simulate(const RunConfig& cfg, const std::string& out_dir) {
  const Sequence seq = generate_sequence(scene_config(cfg));
  save_sequence(out_dir, seq);
}

void cmd_run(const RunConfig& cfg, const std::string& sequence_dir, const std::string& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  const Sequence seq = load_sequence(sequence_dir);
  fs::create_directories(out_dir);

  Pipeline pipeline(seq.camera, cfg);
  int tracked = 0;
  for (int i = 0; i < seq.config.frames; ++i) {
    const FrameResult r = pipeline.process_frame(i, seq.frames[i].data);
    if (r.tracked) ++tracked;
  }
  pipeline.finalize();

  write_trajectory(out_dir + "/trajectory.txt", pipeline.keyframe_trajectory());

  // Composed depth per keyframe, named by frame id; invalid pixels are 0.
  for (const auto& [id, kf] : pipeline.graph().keyframes) {
    const ComposedDepth composed = compose_depth_map(kf->prior);
    ImageD depth(kf->height(), kf->width(), 0.0);
    for (int r = 0; r < kf->height(); ++r)
      for (int c = 0; c < kf->width(); ++c)
        if (kf->mask.at(r, c)) depth.at(r, c) = std::max(composed.depth.at(r, c), 0.0);
    write_sgdm(out_dir + "/" + depth_file(kf->frame_id), sgdm_from_image(depth));
  }

  {
    std::ofstream graph(out_dir + "/graph.txt");
    for (const auto& [id, kf] : pipeline.graph().keyframes) {
      graph << "keyframe " << id << " frame " << kf->frame_id << " scale "
            << format_double(kf->prior.scale) << '\n';
    }
    for (const Connection& c : pipeline.graph().connections)
      graph << "connection " << c.src << ' ' << c.tgt << ' ' << to_string(c.type) << " matches "
            << c.matches.size() << '\n';
  }

  const auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  std::ofstream log(out_dir + "/run_log.txt");
  log << "# effective configuration\n";
  for (const auto& [key, value] : cfg.items()) log << key << " = " << value << '\n';
  log << "# run\n";
  log << "frames = " << seq.config.frames << '\n';
  log << "tracked = " << tracked << '\n';
  log << "keyframes = " << pipeline.graph().keyframes.size() << '\n';
  log << "connections = " << pipeline.graph().connections.size() << '\n';
  log << "elapsed_ms = " << elapsed.count() << '\n';
  log << "# events\n";
  for (const std::string& line : pipeline.log()) log << line << '\n';
}

std::string cmd_eval(const RunConfig& cfg, const std::string& estimate_dir,
                     const std::string& sequence_dir, const std::string& report_path) {
  const Trajectory est = read_trajectory(estimate_dir + "/trajectory.txt");
  const Sequence seq = load_sequence(sequence_dir);
  Trajectory gt;
  for (int i = 0; i < seq.config.frames; ++i) gt.append(i, seq.frames[i].gt_pose);

  const AlignedPair pair = sync_and_align(est, gt);
  const AteResult ate_result = ate(pair);
  const RpeResult rpe_result = rpe(pair, cfg.rpe_delta);

  // Depth metrics over the synchronized keyframes.
  std::vector<ImageD> est_depths, gt_depths;
  std::vector<MaskImage> masks;
  for (const FrameId id : pair.ids) {
    est_depths.push_back(image_from_sgdm(read_sgdm(estimate_dir + "/" + depth_file(id))));
    gt_depths.push_back(seq.frames.at(id).gt_depth);
    masks.push_back(seq.frames.at(id).data.mask);
  }
  const std::vector<double> thetas = {1.25, 1.5625};
  const DepthMetrics traj_metrics = depth_metrics(est_depths, gt_depths, masks,
                                                  DepthScaling::TrajectoryScale,
                                                  pair.transform.scale, thetas);
  const DepthMetrics frame_metrics =
      depth_metrics(est_depths, gt_depths, masks, DepthScaling::PerFrameMedian, 1.0, thetas);

  std::ostringstream report;
  report << "ate_trans = " << format_double(ate_result.trans) << '\n';
  report << "ate_rot = " << format_double(ate_result.rot_deg) << '\n';
  report << "rpe_trans = " << format_double(rpe_result.trans) << '\n';
  report << "rpe_rot = " << format_double(rpe_result.rot_deg) << '\n';
  report << "ard_traj = " << format_double(traj_metrics.ard) << '\n';
  report << "ard_frame = " << format_double(frame_metrics.ard) << '\n';
  report << "thresh_traj_1.25 = " << format_double(traj_metrics.threshold[0]) << '\n';
  report << "thresh_frame_1.25 = " << format_double(frame_metrics.threshold[0]) << '\n';
  report << "thresh_traj_1.5625 = " << format_double(traj_metrics.threshold[1]) << '\n';
  report << "thresh_frame_1.5625 = " << format_double(frame_metrics.threshold[1]) << '\n';

  const std::string text = report.str();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write " + report_path);
    out << text;
  }
  return text;
}

}  // namespace sage
