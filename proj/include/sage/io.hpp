#pragma once

#include "sage/dense_map.hpp"
#include "sage/eval.hpp"
#include "sage/sim.hpp"
#include "sage/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace sage {

// Binary map file: magic "SGDM", uint32 LE C, H, W, then C*H*W float32 LE in
// row-major channel planes. Masks are stored as C=1 with values {0, 1}.
struct SgdmMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int c, int r, int col) const {
    return values[(static_cast<size_t>(c) * height + r) * width + col];
  }
};

void write_sgdm(const std::string& path, const SgdmMap& map);
SgdmMap read_sgdm(const std::string& path);

SgdmMap sgdm_from_image(const ImageD& image);
SgdmMap sgdm_from_mask(const MaskImage& mask);
SgdmMap sgdm_from_dense(const DenseMap& map);
ImageD image_from_sgdm(const SgdmMap& map, int channel = 0);
MaskImage mask_from_sgdm(const SgdmMap& map);
DenseMap dense_from_sgdm(const SgdmMap& map, MaskImage mask);

// Trajectory text format: one line per pose, "id tx ty tz qx qy qz qw" with
// 17 significant digits and a unit quaternion (w kept non-negative).
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path);

// Plain-text manifest, one "key = value" per line.
using Manifest = std::vector<std::pair<std::string, std::string>>;
void write_manifest(const std::string& path, const Manifest& manifest);
std::map<std::string, std::string> read_manifest(const std::string& path);

// Sequence directory: manifest.txt + per-frame SGDM maps + gt/init
// trajectories + gt code/scale table.
void save_sequence(const std::string& dir, const Sequence& seq);
Sequence load_sequence(const std::string& dir);

std::string format_double(double v);  // %.17g

}  // namespace sage
