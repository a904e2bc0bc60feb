#include "sage/io.hpp"

#include <Eigen/Geometry>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sage {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v & 0xff),
                            static_cast<unsigned char>((v >> 8) & 0xff),
                            static_cast<unsigned char>((v >> 16) & 0xff),
                            static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  return static_cast<uint32_t>(bytes[0]) | (static_cast<uint32_t>(bytes[1]) << 8) |
         (static_cast<uint32_t>(bytes[2]) << 16) | (static_cast<uint32_t>(bytes[3]) << 24);
}

std::string frame_file(int index, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "frame_%06d_%s.sgdm", index, suffix);
  return buf;
}

}  // namespace

void write_sgdm(const std::string& path, const SgdmMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("SGDM", 4);
  write_u32(out, static_cast<uint32_t>(map.channels));
  write_u32(out, static_cast<uint32_t>(map.height));
  write_u32(out, static_cast<uint32_t>(map.width));
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(map.values.data()),
            static_cast<std::streamsize>(map.values.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

SgdmMap read_sgdm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SGDM", 4) != 0)
    throw std::runtime_error("not an SGDM file: " + path);
  SgdmMap map;
  map.channels = static_cast<int>(read_u32(in));
  map.height = static_cast<int>(read_u32(in));
  map.width = static_cast<int>(read_u32(in));
  if (map.channels < 0 || map.height <= 0 || map.width <= 0)
    throw std::runtime_error("bad SGDM header: " + path);
  map.values.resize(static_cast<size_t>(map.channels) * map.height * map.width);
  in.read(reinterpret_cast<char*>(map.values.data()),
          static_cast<std::streamsize>(map.values.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated SGDM file: " + path);
  return map;
}

SgdmMap sgdm_from_image(const ImageD& image) {
  SgdmMap map;
  map.channels = 1;
  map.height = image.height();
  map.width = image.width();
  map.values.resize(image.size());
  for (size_t i = 0; i < image.size(); ++i) map.values[i] = static_cast<float>(image.data()[i]);
  return map;
}

SgdmMap sgdm_from_mask(const MaskImage& mask) {
  SgdmMap map;
  map.channels = 1;
  map.height = mask.height();
  map.width = mask.width();
  map.values.resize(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) map.values[i] = mask.data()[i] ? 1.0f : 0.0f;
  return map;
}

SgdmMap sgdm_from_dense(const DenseMap& dense) {
  SgdmMap map;
  map.channels = dense.channels();
  map.height = dense.height();
  map.width = dense.width();
  map.values.resize(dense.data().size());
  for (size_t i = 0; i < dense.data().size(); ++i)
    map.values[i] = static_cast<float>(dense.data()[i]);
  return map;
}

ImageD image_from_sgdm(const SgdmMap& map, int channel) {
  ImageD out(map.height, map.width);
  const size_t off = static_cast<size_t>(channel) * map.height * map.width;
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c)
      out.at(r, c) = map.values[off + static_cast<size_t>(r) * map.width + c];
  return out;
}

MaskImage mask_from_sgdm(const SgdmMap& map) {
  MaskImage out(map.height, map.width);
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c)
      out.at(r, c) = map.at(0, r, c) != 0.0f ? 1 : 0;
  return out;
}

DenseMap dense_from_sgdm(const SgdmMap& map, MaskImage mask) {
  DenseMap out(map.channels, map.height, map.width, std::move(mask));
  for (size_t i = 0; i < map.values.size(); ++i) out.data()[i] = map.values[i];
  return out;
}

void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [id, pose] : traj.entries) {
    Eigen::Quaterniond q(pose.rotation());
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3& t = pose.translation();
    out << id << ' ' << format_double(t.x()) << ' ' << format_double(t.y()) << ' '
        << format_double(t.z()) << ' ' << format_double(q.x()) << ' ' << format_double(q.y())
        << ' ' << format_double(q.z()) << ' ' << format_double(q.w()) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    FrameId id;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> id >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw std::runtime_error("bad trajectory line in " + path + ": " + line);
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    traj.append(id, Pose(q.toRotationMatrix(), Vec3(tx, ty, tz)));
  }
  return traj;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [key, value] : manifest) out << key << " = " << value << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad manifest line: " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void save_sequence(const std::string& dir, const Sequence& seq) {
  fs::create_directories(dir);
  const SceneConfig& cfg = seq.config;

  Manifest manifest;
  manifest.emplace_back("width", std::to_string(cfg.width));
  manifest.emplace_back("height", std::to_string(cfg.height));
  manifest.emplace_back("fx", format_double(seq.camera.fx));
  manifest.emplace_back("fy", format_double(seq.camera.fy));
  manifest.emplace_back("cx", format_double(seq.camera.cx));
  manifest.emplace_back("cy", format_double(seq.camera.cy));
  manifest.emplace_back("frames", std::to_string(cfg.frames));
  manifest.emplace_back("seed", std::to_string(cfg.seed));
  manifest.emplace_back("trajectory", to_string(cfg.trajectory));
  manifest.emplace_back("mask_kind", to_string(cfg.mask));
  manifest.emplace_back("basis_count", std::to_string(cfg.basis_count));
  manifest.emplace_back("feature_channels", std::to_string(cfg.feature_channels));
  manifest.emplace_back("descriptor_channels", std::to_string(cfg.descriptor_channels));
  manifest.emplace_back("noise_depth_rel", format_double(cfg.noise_depth_rel));
  manifest.emplace_back("noise_feature_abs", format_double(cfg.noise_feature_abs));
  manifest.emplace_back("noise_pose_init", format_double(cfg.noise_pose_init));
  manifest.emplace_back("mask", "mask.sgdm");
  manifest.emplace_back("gt_trajectory", "gt_trajectory.txt");
  manifest.emplace_back("init_trajectory", "init_trajectory.txt");
  manifest.emplace_back("gt_codes", "gt_codes.txt");

  write_sgdm(dir + "/mask.sgdm", sgdm_from_mask(seq.frames.at(0).data.mask));

  Trajectory gt, init;
  std::ofstream codes(dir + "/gt_codes.txt");
  if (!codes) throw std::runtime_error("cannot write gt_codes.txt");
  for (int i = 0; i < cfg.frames; ++i) {
    const FrameObservation& obs = seq.frames[i];
    gt.append(i, obs.gt_pose);
    init.append(i, obs.init_pose);
    codes << i << ' ' << format_double(obs.gt_scale);
    for (int k = 0; k < obs.gt_code.size(); ++k) codes << ' ' << format_double(obs.gt_code(k));
    codes << '\n';

    write_sgdm(dir + "/" + frame_file(i, "depth"), sgdm_from_image(obs.gt_depth));
    write_sgdm(dir + "/" + frame_file(i, "avg"), sgdm_from_image(obs.data.average_depth));
    write_sgdm(dir + "/" + frame_file(i, "bases"), sgdm_from_dense(obs.data.bases));
    write_sgdm(dir + "/" + frame_file(i, "feat"), sgdm_from_dense(obs.data.features));
    write_sgdm(dir + "/" + frame_file(i, "desc"), sgdm_from_dense(obs.data.descriptors));
    manifest.emplace_back("frame_" + std::to_string(i) + "_depth", frame_file(i, "depth"));
    manifest.emplace_back("frame_" + std::to_string(i) + "_avg", frame_file(i, "avg"));
    manifest.emplace_back("frame_" + std::to_string(i) + "_bases", frame_file(i, "bases"));
    manifest.emplace_back("frame_" + std::to_string(i) + "_feat", frame_file(i, "feat"));
    manifest.emplace_back("frame_" + std::to_string(i) + "_desc", frame_file(i, "desc"));
  }
  codes.close();
  write_trajectory(dir + "/gt_trajectory.txt", gt);
  write_trajectory(dir + "/init_trajectory.txt", init);
  write_manifest(dir + "/manifest.txt", manifest);
}

Sequence load_sequence(const std::string& dir) {
  const auto manifest = read_manifest(dir + "/manifest.txt");
  auto need = [&](const std::string& key) {
    const auto it = manifest.find(key);
    if (it == manifest.end()) throw std::runtime_error("manifest missing key: " + key);
    return it->second;
  };

  Sequence seq;
  seq.config.width = std::stoi(need("width"));
  seq.config.height = std::stoi(need("height"));
  seq.config.frames = std::stoi(need("frames"));
  seq.config.seed = std::stoull(need("seed"));
  seq.config.trajectory = trajectory_kind_from_string(need("trajectory"));
  seq.config.mask = mask_kind_from_string(need("mask_kind"));
  seq.config.basis_count = std::stoi(need("basis_count"));
  seq.config.feature_channels = std::stoi(need("feature_channels"));
  seq.config.descriptor_channels = std::stoi(need("descriptor_channels"));
  seq.config.noise_depth_rel = std::stod(need("noise_depth_rel"));
  seq.config.noise_feature_abs = std::stod(need("noise_feature_abs"));
  seq.config.noise_pose_init = std::stod(need("noise_pose_init"));
  seq.camera = Camera(std::stod(need("fx")), std::stod(need("fy")), std::stod(need("cx")),
                      std::stod(need("cy")), seq.config.width, seq.config.height);

  const MaskImage mask = mask_from_sgdm(read_sgdm(dir + "/" + need("mask")));
  const Trajectory gt = read_trajectory(dir + "/" + need("gt_trajectory"));
  const Trajectory init = read_trajectory(dir + "/" + need("init_trajectory"));
  if (gt.size() != seq.config.frames || init.size() != seq.config.frames)
    throw std::runtime_error("trajectory length mismatch in " + dir);

  std::ifstream codes(dir + "/" + need("gt_codes"));
  if (!codes) throw std::runtime_error("cannot read gt_codes");

  seq.frames.reserve(seq.config.frames);
  for (int i = 0; i < seq.config.frames; ++i) {
    FrameObservation obs;
    obs.gt_pose = gt.entries[i].second;
    obs.init_pose = init.entries[i].second;

    int id;
    codes >> id >> obs.gt_scale;
    obs.gt_code = VecX::Zero(seq.config.basis_count);
    for (int k = 0; k < seq.config.basis_count; ++k) codes >> obs.gt_code(k);
    if (!codes) throw std::runtime_error("bad gt_codes line in " + dir);

    const std::string prefix = "frame_" + std::to_string(i) + "_";
    obs.gt_depth = image_from_sgdm(read_sgdm(dir + "/" + need(prefix + "depth")));
    obs.data.mask = mask;
    obs.data.average_depth = image_from_sgdm(read_sgdm(dir + "/" + need(prefix + "avg")));
    obs.data.bases = dense_from_sgdm(read_sgdm(dir + "/" + need(prefix + "bases")), mask);
    obs.data.features = dense_from_sgdm(read_sgdm(dir + "/" + need(prefix + "feat")), mask);
    obs.data.descriptors = dense_from_sgdm(read_sgdm(dir + "/" + need(prefix + "desc")), mask);
    seq.frames.push_back(std::move(obs));
  }
  return seq;
}

}  // namespace sage
