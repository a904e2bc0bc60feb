#include "sage/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace sage {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

struct Entry {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

double parse_double(const std::string& v) {
  size_t pos = 0;
  const double out = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad number: " + v);
  return out;
}

int parse_int(const std::string& v) {
  size_t pos = 0;
  const int out = std::stoi(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad integer: " + v);
  return out;
}

uint64_t parse_u64(const std::string& v) {
  size_t pos = 0;
  const unsigned long long out = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad integer: " + v);
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::invalid_argument("bad boolean: " + v);
}

#define FIELD_D(name) \
  {#name, [](const RunConfig& c) { return format_double(c.name); }, \
   [](RunConfig& c, const std::string& v) { c.name = parse_double(v); }}
#define FIELD_I(name) \
  {#name, [](const RunConfig& c) { return std::to_string(c.name); }, \
   [](RunConfig& c, const std::string& v) { c.name = parse_int(v); }}
#define FIELD_U(name) \
  {#name, [](const RunConfig& c) { return std::to_string(c.name); }, \
   [](RunConfig& c, const std::string& v) { c.name = parse_u64(v); }}
#define FIELD_S(name) \
  {#name, [](const RunConfig& c) { return c.name; }, \
   [](RunConfig& c, const std::string& v) { c.name = v; }}
#define FIELD_B(name) \
  {#name, [](const RunConfig& c) { return std::string(c.name ? "1" : "0"); }, \
   [](RunConfig& c, const std::string& v) { c.name = parse_bool(v); }}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      FIELD_U(seed),
      FIELD_I(height),
      FIELD_I(width),
      FIELD_I(frames),
      FIELD_S(trajectory),
      FIELD_I(basis_count),
      FIELD_I(feature_channels),
      FIELD_I(descriptor_channels),
      FIELD_D(noise_depth_rel),
      FIELD_D(noise_feature_abs),
      FIELD_D(noise_pose_init),
      FIELD_S(mask),
      FIELD_I(pyramid_levels),
      FIELD_I(pyramid_kernel),
      FIELD_D(pyramid_sigma),
      FIELD_S(fm_level_weights),
      FIELD_D(rp_weight),
      FIELD_D(rp_sigma),
      FIELD_D(smg_weight),
      FIELD_D(smg_sigma),
      FIELD_D(gc_weight),
      FIELD_D(gc_sigma),
      FIELD_D(cd_weight),
      FIELD_D(rps_rot_weight),
      FIELD_D(rps_scale_weight),
      FIELD_D(ps_rot_weight),
      FIELD_D(anchor_weight),
      FIELD_I(match_candidates),
      FIELD_I(match_grid_step),
      FIELD_D(noise_bound_multiplier),
      FIELD_I(ransac_iterations),
      FIELD_D(ransac_consensus),
      FIELD_I(tracking_max_iters),
      FIELD_D(tracking_damp_init),
      FIELD_D(tracking_damp_min),
      FIELD_D(tracking_damp_max),
      FIELD_D(tracking_damp_up),
      FIELD_D(tracking_damp_down),
      FIELD_D(tracking_grad_tol),
      FIELD_D(tracking_step_tol),
      FIELD_D(tracking_jacobian_ratio),
      FIELD_D(ref_similarity_factor),
      FIELD_D(kf_max_overlap_area),
      FIELD_D(kf_max_overlap_inlier),
      FIELD_D(kf_max_inlier_ratio),
      FIELD_D(kf_min_flow_frac),
      FIELD_I(kf_max_temporal_connections),
      FIELD_D(kf_min_connect_inlier_ratio),
      FIELD_I(loop_local_window),
      FIELD_D(loop_rot_weight),
      FIELD_D(loop_trans_weight),
      FIELD_D(loop_distance_multiplier),
      FIELD_D(loop_metric_multiplier),
      FIELD_D(loop_min_inlier_ratio),
      FIELD_D(loop_min_overlap_area),
      FIELD_D(loop_min_overlap_inlier),
      FIELD_I(loop_global_gap),
      FIELD_I(loop_global_candidates),
      FIELD_D(loop_similarity_multiplier),
      FIELD_D(loop_rps_weight),
      FIELD_D(loop_rps_global_weight),
      FIELD_D(loop_sc_weight),
      FIELD_I(loop_max_iters),
      FIELD_I(loop_no_relin_stop),
      FIELD_D(loop_relin_pose),
      FIELD_D(loop_relin_scale),
      FIELD_D(map_relin_pose),
      FIELD_D(map_relin_scale),
      FIELD_D(map_relin_code),
      FIELD_I(map_max_iters),
      FIELD_I(map_no_relin_stop),
      FIELD_I(map_post_rounds),
      FIELD_I(hist_bins),
      FIELD_D(hist_bandwidth),
      FIELD_D(hist_margin),
      FIELD_D(si_epsilon),
      FIELD_I(rpe_delta),
      FIELD_B(deterministic),
      FIELD_I(threads),
      FIELD_B(fm_enabled),
      FIELD_B(rp_enabled),
      FIELD_B(local_loop_enabled),
      FIELD_B(global_loop_enabled),
  };
  return entries;
}

#undef FIELD_D
#undef FIELD_I
#undef FIELD_U
#undef FIELD_S
#undef FIELD_B

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Entry& e : registry()) {
    if (key == e.key) {
      e.set(*this, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key: " + key);
}

std::string RunConfig::get(const std::string& key) const {
  for (const Entry& e : registry()) {
    if (key == e.key) return e.get(*this);
  }
  throw std::invalid_argument("unknown config key: " + key);
}

std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(registry().size());
  for (const Entry& e : registry()) out.emplace_back(e.key, e.get(*this));
  return out;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set(key, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::vector<double> RunConfig::fm_weights() const {
  std::vector<double> out;
  std::stringstream ss(fm_level_weights);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(item));
  }
  if (out.empty()) throw std::invalid_argument("fm_level_weights: empty");
  return out;
}

}  // namespace sage
