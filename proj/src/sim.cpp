#include "sage/sim.hpp"

#include "sage/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace sage {

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  if (name == "sweep") return TrajectoryKind::Sweep;
  if (name == "orbit") return TrajectoryKind::Orbit;
  if (name == "loop") return TrajectoryKind::Loop;
  if (name == "random-walk") return TrajectoryKind::RandomWalk;
  throw std::invalid_argument("unknown trajectory kind: " + name);
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Sweep: return "sweep";
    case TrajectoryKind::Orbit: return "orbit";
    case TrajectoryKind::Loop: return "loop";
    case TrajectoryKind::RandomWalk: return "random-walk";
  }
  return "sweep";
}

MaskKind mask_kind_from_string(const std::string& name) {
  if (name == "full") return MaskKind::Full;
  if (name == "circular") return MaskKind::Circular;
  throw std::invalid_argument("unknown mask kind: " + name);
}

std::string to_string(MaskKind kind) {
  return kind == MaskKind::Circular ? "circular" : "full";
}

namespace {

// Height field z(x, y) = z0 + sum_j a_j sin(kx_j x + ky_j y + phi_j).
struct Surface {
  double z0 = 1.0;
  struct Harmonic {
    double kx, ky, amp, phase;
  };
  std::vector<Harmonic> harmonics;

  double height(double x, double y) const {
    double z = z0;
    for (const auto& h : harmonics) z += h.amp * std::sin(h.kx * x + h.ky * y + h.phase);
    return z;
  }

  // Root of (o + t d).z == height((o + t d).xy) along an unnormalized ray
  // with d.z == 1 in camera units, so the root equals the pinhole depth.
  double intersect(const Vec3& origin, const Vec3& dir) const {
    auto g = [&](double t) {
      const Vec3 p = origin + t * dir;
      return p.z() - height(p.x(), p.y());
    };
    double lo = 0.05, hi = 4.0;
    double glo = g(lo);
    double ghi = g(hi);
    if (glo > 0.0 || ghi < 0.0) throw std::runtime_error("surface intersection lost bracket");
    for (int i = 0; i < 45; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (g(mid) < 0.0)
        lo = mid;
      else
        hi = mid;
    }
    // Newton polish.
    double t = 0.5 * (lo + hi);
    for (int i = 0; i < 3; ++i) {
      const Vec3 p = origin + t * dir;
      double gx = 0.0, gy = 0.0;
      for (const auto& h : harmonics) {
        const double c = h.amp * std::cos(h.kx * p.x() + h.ky * p.y() + h.phase);
        gx += h.kx * c;
        gy += h.ky * c;
      }
      const double val = p.z() - height(p.x(), p.y());
      const double deriv = dir.z() - gx * dir.x() - gy * dir.y();
      t -= val / deriv;
    }
    return t;
  }
};

Surface make_surface(Rng& rng) {
  Surface s;
  s.z0 = 1.0;
  const int count = 5;
  const double total_amp = 0.10;
  for (int i = 0; i < count; ++i) {
    Surface::Harmonic h;
    const double freq = rng.uniform(5.0, 12.5);
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    h.kx = freq * std::cos(angle);
    h.ky = freq * std::sin(angle);
    h.amp = total_amp / count * rng.uniform(0.6, 1.4);
    h.phase = rng.uniform(0.0, 2.0 * M_PI);
    s.harmonics.push_back(h);
  }
  return s;
}

// Smooth random channel field over 3D points, values strictly inside (-1, 1).
struct VolumeField {
  struct Harmonic {
    Vec3 k;
    double amp, phase;
  };
  std::vector<std::vector<Harmonic>> channels;

  double value(int channel, const Vec3& p) const {
    double v = 0.0;
    for (const auto& h : channels[channel]) v += h.amp * std::sin(h.k.dot(p) + h.phase);
    return std::tanh(v);
  }
};

VolumeField make_volume_field(Rng& rng, int channels, double min_freq, double max_freq,
                              double amplitude = 1.0) {
  VolumeField f;
  f.channels.resize(channels);
  for (int c = 0; c < channels; ++c) {
    for (int j = 0; j < 4; ++j) {
      VolumeField::Harmonic h;
      const double freq = rng.uniform(min_freq, max_freq);
      Vec3 dir(rng.normal(), rng.normal(), rng.normal());
      dir.normalize();
      h.k = freq * dir;
      h.amp = amplitude * rng.uniform(0.3, 0.6);
      h.phase = rng.uniform(0.0, 2.0 * M_PI);
      f.channels[c].push_back(h);
    }
  }
  return f;
}

// Feature content is band-split: most channels are smooth enough to stay
// accurate through the coarse pyramid levels, a few low-amplitude sharp
// channels add fine-level gradient structure.
VolumeField make_feature_field(Rng& rng, int channels) {
  const int sharp = std::max(1, channels / 4);
  VolumeField low = make_volume_field(rng, channels - sharp, 1.5, 4.0, 1.0);
  VolumeField high = make_volume_field(rng, sharp, 8.0, 16.0, 0.35);
  for (auto& ch : high.channels) low.channels.push_back(std::move(ch));
  return low;
}

// Smooth random field over normalized pixel coordinates with sum of
// amplitudes equal to `amplitude` (so |value| <= amplitude).
struct PixelField {
  struct Harmonic {
    double fu, fv, amp, phase;
  };
  std::vector<Harmonic> harmonics;

  double value(double u, double v) const {
    double out = 0.0;
    for (const auto& h : harmonics)
      out += h.amp * std::sin(2.0 * M_PI * (h.fu * u + h.fv * v) + h.phase);
    return out;
  }
};

PixelField make_pixel_field(Rng& rng, double amplitude) {
  PixelField f;
  const int count = 4;
  double raw_total = 0.0;
  std::vector<double> raw(count);
  for (int j = 0; j < count; ++j) {
    raw[j] = rng.uniform(0.5, 1.0);
    raw_total += raw[j];
  }
  for (int j = 0; j < count; ++j) {
    PixelField::Harmonic h;
    h.fu = rng.uniform(0.5, 2.5);
    h.fv = rng.uniform(0.5, 2.5);
    h.amp = amplitude * raw[j] / raw_total;
    h.phase = rng.uniform(0.0, 2.0 * M_PI);
    f.harmonics.push_back(h);
  }
  return f;
}

Mat3 look_at_rotation(const Vec3& position, const Vec3& target) {
  Vec3 forward = (target - position).normalized();
  Vec3 up(0.0, 1.0, 0.0);
  Vec3 right = up.cross(forward).normalized();
  up = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = up;
  r.col(2) = forward;
  return r;
}

std::vector<Pose> make_trajectory(const SceneConfig& cfg, Rng& rng) {
  std::vector<Pose> poses;
  poses.reserve(cfg.frames);
  const int n = cfg.frames;
  switch (cfg.trajectory) {
    case TrajectoryKind::Sweep: {
      for (int i = 0; i < n; ++i) {
        const double s = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
        const Vec3 p(0.35 * s, 0.02 * std::sin(2.0 * M_PI * s), 0.01 * std::sin(4.0 * M_PI * s));
        const Vec3 w(0.015 * std::sin(2.0 * M_PI * s), 0.02 * std::sin(2.0 * M_PI * s + 1.0),
                     0.01 * std::sin(4.0 * M_PI * s));
        poses.emplace_back(so3_exp(w), p);
      }
      break;
    }
    case TrajectoryKind::Loop: {
      const double radius = 0.35;
      for (int i = 0; i < n; ++i) {
        const double theta = 2.0 * M_PI * i / n;
        const Vec3 p(radius * std::sin(theta), radius * (1.0 - std::cos(theta)),
                     0.01 * std::sin(2.0 * theta));
        const Vec3 w(0.02 * std::sin(theta), 0.02 * (1.0 - std::cos(theta)),
                     0.25 * std::sin(theta));
        poses.emplace_back(so3_exp(w), p);
      }
      break;
    }
    case TrajectoryKind::Orbit: {
      const double radius = 0.18;
      const Vec3 target(0.0, 0.0, 1.0);
      for (int i = 0; i < n; ++i) {
        const double theta = 2.0 * M_PI * i / n;
        const Vec3 p(radius * std::cos(theta), radius * std::sin(theta), 0.0);
        poses.emplace_back(look_at_rotation(p, target), p);
      }
      break;
    }
    case TrajectoryKind::RandomWalk: {
      Pose current;
      for (int i = 0; i < n; ++i) {
        poses.push_back(current);
        Vec3 dt(rng.normal(0.0, 0.01), rng.normal(0.0, 0.01), rng.normal(0.0, 0.004));
        Vec3 dw(rng.normal(0.0, 0.006), rng.normal(0.0, 0.006), rng.normal(0.0, 0.006));
        Vec3 next = current.translation() + dt;
        next.x() = std::clamp(next.x(), -0.3, 0.3);
        next.y() = std::clamp(next.y(), -0.3, 0.3);
        next.z() = std::clamp(next.z(), -0.05, 0.05);
        current = Pose(current.rotation() * so3_exp(dw), next);
      }
      break;
    }
  }
  return poses;
}

MaskImage make_mask(const SceneConfig& cfg) {
  MaskImage mask(cfg.height, cfg.width, 1);
  if (cfg.mask == MaskKind::Circular) {
    const double cx = (cfg.width - 1) / 2.0;
    const double cy = (cfg.height - 1) / 2.0;
    const double radius = 0.47 * std::min(cfg.height, cfg.width);
    for (int r = 0; r < cfg.height; ++r)
      for (int c = 0; c < cfg.width; ++c)
        mask.at(r, c) = ((c - cx) * (c - cx) + (r - cy) * (r - cy) <= radius * radius) ? 1 : 0;
  }
  return mask;
}

}  // namespace

Sequence generate_sequence(const SceneConfig& cfg) {
  if (cfg.frames < 1) throw std::invalid_argument("generate_sequence: frames must be >= 1");
  if (cfg.height < 8 || cfg.width < 8)
    throw std::invalid_argument("generate_sequence: resolution too small");
  const int div = 1 << (cfg.pyramid_levels - 1);
  if (cfg.height % div != 0 || cfg.width % div != 0)
    throw std::invalid_argument("generate_sequence: resolution not divisible by 2^(L-1)");
  if (cfg.basis_count < 1) throw std::invalid_argument("generate_sequence: basis_count must be >= 1");
  if (cfg.noise_depth_rel < 0.0 || cfg.noise_feature_abs < 0.0 || cfg.noise_pose_init < 0.0)
    throw std::invalid_argument("generate_sequence: noise must be non-negative");

  Sequence seq;
  seq.config = cfg;
  const double f = 1.25 * cfg.width;
  seq.camera = Camera(f, f, (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0, cfg.width, cfg.height);

  Rng rng(cfg.seed);
  const Surface surface = make_surface(rng);
  const VolumeField feature_field = make_feature_field(rng, cfg.feature_channels);
  const VolumeField descriptor_field = make_volume_field(rng, cfg.descriptor_channels, 6.0, 20.0);
  const std::vector<Pose> gt_poses = make_trajectory(cfg, rng);
  const MaskImage mask = make_mask(cfg);

  seq.frames.reserve(cfg.frames);
  for (int fi = 0; fi < cfg.frames; ++fi) {
    Rng frame_rng(cfg.seed * 1000003ULL + static_cast<uint64_t>(fi) * 7919ULL + 1ULL);
    FrameObservation obs;
    obs.gt_pose = gt_poses[fi];
    obs.gt_scale = 1.0;

    const int h = cfg.height;
    const int w = cfg.width;
    obs.gt_depth = ImageD(h, w, 0.0);
    obs.data.mask = mask;
    obs.data.average_depth = ImageD(h, w, 0.0);
    obs.data.bases = DenseMap(cfg.basis_count, h, w, mask);
    obs.data.features = DenseMap(cfg.feature_channels, h, w, mask);
    obs.data.descriptors = DenseMap(cfg.descriptor_channels, h, w, mask);

    // Per-frame prior error field and basis fields.
    const PixelField noise_field = make_pixel_field(frame_rng, 1.0);
    std::vector<PixelField> basis_fields;
    basis_fields.reserve(cfg.basis_count);
    for (int k = 0; k < cfg.basis_count; ++k)
      basis_fields.push_back(make_pixel_field(frame_rng, 0.1));

    obs.gt_code = VecX::Zero(cfg.basis_count);
    const bool noisy = cfg.noise_depth_rel > 0.0;
    if (noisy) {
      obs.gt_code(0) = 0.3;
      for (int k = 1; k < cfg.basis_count; ++k) obs.gt_code(k) = frame_rng.uniform(-0.15, 0.15);
    }

    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const Vec3 ray = pixel_ray(seq.camera, Vec2(c, r));
        const Vec3 dir_world = obs.gt_pose.rotation() * ray;
        const double depth = surface.intersect(obs.gt_pose.translation(), dir_world);
        obs.gt_depth.at(r, c) = depth;
        const Vec3 point_world = obs.gt_pose.translation() + depth * dir_world;

        const double u = static_cast<double>(c) / w;
        const double v = static_cast<double>(r) / h;
        const double avg = depth * (1.0 + cfg.noise_depth_rel * noise_field.value(u, v));
        obs.data.average_depth.at(r, c) = avg;

        // Bases 1..B-1 are free smooth fields; basis 0 absorbs the residual
        // so that the gt code composes exactly back to the gt depth.
        double residual_rest = 0.0;
        for (int k = 1; k < cfg.basis_count; ++k) {
          const double b = basis_fields[k].value(u, v);
          obs.data.bases.at(k, r, c) = b;
          residual_rest += obs.gt_code(k) * b;
        }
        if (noisy) {
          double b0 = (depth / obs.gt_scale - avg - residual_rest) / obs.gt_code(0);
          b0 = std::clamp(b0, -0.999, 0.999);
          obs.data.bases.at(0, r, c) = b0;
        } else {
          obs.data.bases.at(0, r, c) = basis_fields[0].value(u, v);
        }

        for (int ch = 0; ch < cfg.feature_channels; ++ch) {
          double val = feature_field.value(ch, point_world);
          if (cfg.noise_feature_abs > 0.0)
            val = std::clamp(val + frame_rng.normal(0.0, cfg.noise_feature_abs), -0.999, 0.999);
          obs.data.features.at(ch, r, c) = val;
        }
        for (int ch = 0; ch < cfg.descriptor_channels; ++ch) {
          double val = descriptor_field.value(ch, point_world);
          if (cfg.noise_feature_abs > 0.0)
            val = std::clamp(val + frame_rng.normal(0.0, cfg.noise_feature_abs), -0.999, 0.999);
          obs.data.descriptors.at(ch, r, c) = val;
        }
      }
    }

    // Recorded initialization for pair-wise optimization experiments.
    if (cfg.noise_pose_init > 0.0) {
      Vec6 xi;
      for (int i = 0; i < 3; ++i) xi(i) = frame_rng.normal(0.0, cfg.noise_pose_init);
      for (int i = 3; i < 6; ++i) xi(i) = frame_rng.normal(0.0, cfg.noise_pose_init);
      obs.init_pose = obs.gt_pose.retract(xi);
    } else {
      obs.init_pose = obs.gt_pose;
    }

    seq.frames.push_back(std::move(obs));
  }
  return seq;
}

FlowField analytic_flow(const Sequence& seq, int frame_a, int frame_b) {
  const FrameObservation& a = seq.frames.at(frame_a);
  const FrameObservation& b = seq.frames.at(frame_b);
  const Camera& cam = seq.camera;
  const int h = seq.config.height;
  const int w = seq.config.width;
  const Pose b_from_world = b.gt_pose.inverse();

  FlowField field;
  field.flow.u = ImageD(h, w, 0.0);
  field.flow.v = ImageD(h, w, 0.0);
  field.omega_mask = MaskImage(h, w, 0);

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!a.data.mask.at(r, c)) continue;
      const Vec3 point_world =
          a.gt_pose * (a.gt_depth.at(r, c) * pixel_ray(cam, Vec2(c, r)));
      const Vec3 p = b_from_world * point_world;
      Vec2 uv;
      if (!project_checked(cam, p, uv)) continue;
      if (!mask_sampleable(b.data.mask, uv.x(), uv.y())) continue;
      field.flow.u.at(r, c) = uv.x() - c;
      field.flow.v.at(r, c) = uv.y() - r;
      field.omega_mask.at(r, c) = 1;
      field.omega.emplace_back(r, c);
    }
  }
  return field;
}

}  // namespace sage
