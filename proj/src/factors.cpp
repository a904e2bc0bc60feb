#include "sage/factors.hpp"

#include <cmath>
#include <stdexcept>

namespace sage {

void FactorLinearization::reset(const std::vector<int>& dims) {
  const size_t n = dims.size();
  value = 0.0;
  grad.resize(n);
  hess.assign(n, std::vector<MatX>(n));
  if (active.size() != n) active.assign(n, 1);
  for (size_t i = 0; i < n; ++i) {
    grad[i] = VecX::Zero(dims[i]);
    for (size_t j = i; j < n; ++j) hess[i][j] = MatX::Zero(dims[i], dims[j]);
  }
}

namespace {

// Raw accumulator over a compact internal layout whose first 6 columns are
// the right perturbation of rel = T_tgt^-1 * T_src. Blocks are later expanded
// onto (pose_src, pose_tgt, extras...) with grad_tgt = M^T grad_rel,
// M = -Adj(rel^-1).
struct RelAccum {
  double value = 0.0;
  VecX g;
  MatX h;

  void init(int dim) {
    value = 0.0;
    g = VecX::Zero(dim);
    h = MatX::Zero(dim, dim);
  }

  // Adds w * rho(|r|^2) and the corresponding gradient / GN blocks.
  void add(const Eigen::Ref<const MatX>& jac, const Eigen::Ref<const VecX>& r,
           const RobustKernel& kernel) {
    const double a = r.squaredNorm();
    value += kernel.value(a);
    const double s = 2.0 * kernel.derivative(a);
    g.noalias() += s * (jac.transpose() * r);
    h.selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose(), s);
  }

  void scale(double s) {
    value *= s;
    g *= s;
    h *= s;
  }

  void merge(const RelAccum& other, double s) {
    value += s * other.value;
    g.noalias() += s * other.g;
    h.noalias() += s * other.h;
  }
};

// Expands rel-space blocks into the factor's variable blocks. `extra_dims`
// lists the dimensions of the non-pose variables following the two poses.
void expand_rel_blocks(const RelAccum& acc, const Pose& rel, FactorLinearization& lin,
                       const std::vector<int>& extra_dims) {
  MatX h = acc.h;
  h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
  const Mat6 m = -rel.inverse().adjoint();
  const Mat6 mt = m.transpose();

  lin.grad[0] += acc.g.head<6>();
  lin.grad[1] += mt * acc.g.head<6>();
  const Mat6 h_rr = h.topLeftCorner<6, 6>();
  lin.hess[0][0] += h_rr;
  lin.hess[0][1] += h_rr * m;
  lin.hess[1][1] += mt * h_rr * m;
  int off = 6;
  for (size_t e = 0; e < extra_dims.size(); ++e) {
    const int d = extra_dims[e];
    lin.grad[2 + e] += acc.g.segment(off, d);
    const MatX h_re = h.block(0, off, 6, d);
    lin.hess[0][2 + e] += h_re;
    lin.hess[1][2 + e] += mt * h_re;
    int off_j = 6;
    for (size_t f = 0; f < extra_dims.size(); ++f) {
      if (f >= e) lin.hess[2 + e][2 + f] += h.block(off, off_j, d, extra_dims[f]);
      off_j += extra_dims[f];
    }
    off += d;
  }
}

inline double clamped_depth(double d, bool& clamped) {
  clamped = d < kDepthFloor;
  return clamped ? kDepthFloor : d;
}

// Bilinear sample of an average + bases prior at a continuous location.
// Outputs the composed depth, its spatial gradient, the sampled average and
// the sampled basis vector (for code Jacobians).
bool sample_prior(const DepthPrior& prior, double x, double y, const VecX& code, double s,
                  double& depth, Vec2& grad, VecX& basis_values) {
  if (!sampleable(prior.bases, x, y)) return false;
  const int ix = static_cast<int>(std::floor(x));
  const int iy = static_cast<int>(std::floor(y));
  const double ax = x - ix;
  const double ay = y - iy;
  const double w00 = (1.0 - ax) * (1.0 - ay);
  const double w01 = ax * (1.0 - ay);
  const double w10 = (1.0 - ax) * ay;
  const double w11 = ax * ay;

  auto blend = [&](double v00, double v01, double v10, double v11, double& out, double& gx,
                   double& gy) {
    out = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11;
    gx = (1.0 - ay) * (v01 - v00) + ay * (v11 - v10);
    gy = (1.0 - ax) * (v10 - v00) + ax * (v11 - v01);
  };

  double total, gx_total, gy_total;
  blend(prior.average.at(iy, ix), prior.average.at(iy, ix + 1), prior.average.at(iy + 1, ix),
        prior.average.at(iy + 1, ix + 1), total, gx_total, gy_total);
  const int nb = prior.bases.channels();
  basis_values.resize(nb);
  for (int k = 0; k < nb; ++k) {
    double bv, bgx, bgy;
    blend(prior.bases.at(k, iy, ix), prior.bases.at(k, iy, ix + 1), prior.bases.at(k, iy + 1, ix),
          prior.bases.at(k, iy + 1, ix + 1), bv, bgx, bgy);
    basis_values(k) = bv;
    total += code(k) * bv;
    gx_total += code(k) * bgx;
    gy_total += code(k) * bgy;
  }
  depth = s * total;
  grad = Vec2(s * gx_total, s * gy_total);
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// FM

FmFactor::FmFactor(int src_slot, int tgt_slot, const Keyframe* src, const Keyframe* tgt,
                   const Camera& cam, FmParams params)
    : src_slot_(src_slot), tgt_slot_(tgt_slot), src_(src), tgt_(tgt), cam_(cam),
      params_(std::move(params)) {
  if (static_cast<int>(params_.level_weights.size()) != src_->features.level_count() ||
      src_->features.level_count() != tgt_->features.level_count())
    throw std::invalid_argument("FmFactor: level weight / pyramid level mismatch");
  vars_ = {{src_slot_, VarKind::Pose},
           {tgt_slot_, VarKind::Pose},
           {src_slot_, VarKind::Scale},
           {src_slot_, VarKind::Code}};
}

template <bool kWithJacobians>
double FmFactor::eval_impl(const State& state, FactorLinearization* lin) const {
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const Mat3& r_rel = rel.rotation();
  const VecX& code = state.code[src_slot_];
  const double s_src = std::exp(state.log_scale[src_slot_]);
  const int levels = src_->features.level_count();
  const int basis_count = src_->prior.basis_count();

  const bool with_scale = !lin || lin->active[2];
  const bool with_code = !lin || lin->active[3];
  const int dim = 6 + (kWithJacobians ? (with_scale ? 1 : 0) + (with_code ? basis_count : 0) : 0);
  const int scale_col = 6;
  const int code_col = with_scale ? 7 : 6;

  RelAccum total;
  RelAccum level_acc;
  if constexpr (kWithJacobians) total.init(dim);

  const int channels = src_->features.levels[0].channels();
  VecX f_src(channels), f_tgt(channels), dfx(channels), dfy(channels), residual(channels),
      u(channels);
  MatX jac;
  if constexpr (kWithJacobians) jac.resize(channels, dim);
  Eigen::Matrix<double, 3, 6> dp_dxi;
  MatX g3(channels, 3);

  double value = 0.0;

  // Every level is evaluated at the full-resolution mask samples; both sides
  // are sampled bilinearly from their level maps at scaled coordinates, so
  // interpolation smoothing acts symmetrically on source and target.
  for (int lv = 0; lv < levels; ++lv) {
    const DenseMap& f_src_map = src_->features.levels[lv];
    const DenseMap& f_dst_map = tgt_->features.levels[lv];
    const Camera cam_lv = cam_.level(lv);
    const double inv_scale = 1.0 / static_cast<double>(1 << lv);
    if constexpr (kWithJacobians) level_acc.init(dim);
    double level_value = 0.0;
    long count = 0;

    auto process_pixel = [&](int r, int c) {
      if (!sample_bilinear_all(f_src_map, c * inv_scale, r * inv_scale, f_src)) return;
      bool clamped = false;
      const double depth = clamped_depth(src_->prior.compose_at(r, c, code, s_src), clamped);
      const Vec3 ray = pixel_ray(cam_, Vec2(c, r));
      const Vec3 q = depth * ray;
      const Vec3 p = rel * q;
      if (p.z() <= 0.0) return;
      Vec2 uv;
      uv.x() = cam_lv.fx * p.x() / p.z() + cam_lv.cx;
      uv.y() = cam_lv.fy * p.y() / p.z() + cam_lv.cy;
      if constexpr (kWithJacobians) {
        if (!sample_bilinear_all(f_dst_map, uv.x(), uv.y(), f_tgt, &dfx, &dfy)) return;
      } else {
        if (!sample_bilinear_all(f_dst_map, uv.x(), uv.y(), f_tgt)) return;
      }
      residual = f_tgt - f_src;
      ++count;
      if constexpr (kWithJacobians) {
        const Eigen::Matrix<double, 2, 3> jproj = project_jacobian(cam_lv, p);
        for (int ch = 0; ch < channels; ++ch) {
          g3.row(ch) = dfx(ch) * jproj.row(0) + dfy(ch) * jproj.row(1);
        }
        dp_dxi.leftCols<3>() = r_rel;
        dp_dxi.rightCols<3>().noalias() = -r_rel * skew(q);
        jac.leftCols<6>().noalias() = g3 * dp_dxi;
        if (with_scale || with_code) {
          u.noalias() = g3 * (r_rel * ray);
          if (clamped) u.setZero();
          if (with_scale) jac.col(scale_col) = u * depth;
          if (with_code) {
            for (int k = 0; k < basis_count; ++k)
              jac.col(code_col + k) = u * (s_src * src_->prior.bases.at(k, r, c));
          }
        }
        level_acc.add(jac, residual, RobustKernel::none());
      } else {
        level_value += residual.squaredNorm();
      }
    };

    if (frozen_) {
      for (const auto& [r, c] : (*frozen_)[lv]) process_pixel(r, c);
      count = static_cast<long>((*frozen_)[lv].size());
      if (count == 0) continue;
    } else {
      for (int r = 0; r < src_->height(); ++r)
        for (int c = 0; c < src_->width(); ++c)
          if (src_->mask.at(r, c)) process_pixel(r, c);
      if (count == 0) continue;
    }

    const double level_scale =
        params_.weight * params_.level_weights[lv] / (static_cast<double>(levels) * count);
    if constexpr (kWithJacobians) {
      total.merge(level_acc, level_scale);
    } else {
      value += level_scale * level_value;
    }
  }

  if constexpr (kWithJacobians) {
    // Pad the compact (active-only) layout back to [rel | scale | code].
    total.h.triangularView<Eigen::StrictlyUpper>() = total.h.transpose();
    RelAccum padded;
    padded.init(6 + 1 + basis_count);
    padded.value = total.value;
    padded.g.head<6>() = total.g.head<6>();
    padded.h.topLeftCorner<6, 6>() = total.h.topLeftCorner<6, 6>();
    if (with_scale) {
      padded.g(6) = total.g(scale_col);
      padded.h.block(0, 6, 6, 1) = total.h.block(0, scale_col, 6, 1);
      padded.h(6, 6) = total.h(scale_col, scale_col);
    }
    if (with_code) {
      padded.g.segment(7, basis_count) = total.g.segment(code_col, basis_count);
      padded.h.block(0, 7, 6, basis_count) = total.h.block(0, code_col, 6, basis_count);
      if (with_scale)
        padded.h.block(6, 7, 1, basis_count) = total.h.block(scale_col, code_col, 1, basis_count);
      padded.h.block(7, 7, basis_count, basis_count) =
          total.h.block(code_col, code_col, basis_count, basis_count);
    }
    padded.h.triangularView<Eigen::StrictlyLower>() = padded.h.transpose();
    expand_rel_blocks(padded, rel, *lin, {1, basis_count});
    lin->value = padded.value;
    return padded.value;
  }
  return value;
}

double FmFactor::evaluate(const State& state) const { return eval_impl<false>(state, nullptr); }

double FmFactor::linearize(const State& state, FactorLinearization& lin) const {
  lin.reset({6, 6, 1, src_->prior.basis_count()});
  return eval_impl<true>(state, &lin);
}

namespace {

// Shared support scan for FmFactor: full-resolution mask samples that are
// sampleable in both level maps with a positive warped depth.
template <typename Visit>
void fm_scan_support(const Keyframe& src, const Keyframe& tgt, const Camera& cam,
                     const State& state, int src_slot, int tgt_slot, Visit&& visit) {
  const Pose rel = state.pose[tgt_slot].inverse() * state.pose[src_slot];
  const VecX& code = state.code[src_slot];
  const double s_src = std::exp(state.log_scale[src_slot]);
  for (int lv = 0; lv < src.features.level_count(); ++lv) {
    const DenseMap& f_src = src.features.levels[lv];
    const DenseMap& f_dst = tgt.features.levels[lv];
    const Camera cam_lv = cam.level(lv);
    const double inv_scale = 1.0 / static_cast<double>(1 << lv);
    for (int r = 0; r < src.height(); ++r) {
      for (int c = 0; c < src.width(); ++c) {
        if (!src.mask.at(r, c)) continue;
        if (!sampleable(f_src, c * inv_scale, r * inv_scale)) continue;
        bool clamped = false;
        const double depth = clamped_depth(src.prior.compose_at(r, c, code, s_src), clamped);
        const Vec3 p = rel * (depth * pixel_ray(cam, Vec2(c, r)));
        Vec2 uv;
        if (!project_checked(cam_lv, p, uv)) continue;
        if (sampleable(f_dst, uv.x(), uv.y())) visit(lv, r, c);
      }
    }
  }
}

}  // namespace

int FmFactor::support_size(const State& state) const {
  int count = 0;
  fm_scan_support(*src_, *tgt_, cam_, state, src_slot_, tgt_slot_,
                  [&](int, int, int) { ++count; });
  return count;
}

void FmFactor::freeze_support(const State& state) {
  std::vector<std::vector<std::pair<int, int>>> support(src_->features.level_count());
  fm_scan_support(*src_, *tgt_, cam_, state, src_slot_, tgt_slot_,
                  [&](int lv, int r, int c) { support[lv].emplace_back(r, c); });
  frozen_ = std::move(support);
}

// ---------------------------------------------------------------------------
// GC

GcFactor::GcFactor(int src_slot, int tgt_slot, const Keyframe* src, const Keyframe* tgt,
                   const Camera& cam, MatchSet matches, GcParams params)
    : src_slot_(src_slot), tgt_slot_(tgt_slot), src_(src), tgt_(tgt), cam_(cam),
      params_(params) {
  delta_ = params_.sigma * mean_average_depth(*src_);
  if (matches.empty()) {
    // Dense mode: every masked source pixel is a term.
    for (int r = 0; r < src_->height(); ++r)
      for (int c = 0; c < src_->width(); ++c)
        if (src_->mask.at(r, c)) src_points_.emplace_back(c, r);
  } else {
    for (const auto& m : matches.pairs) src_points_.push_back(m.first);
  }
  vars_ = {{src_slot_, VarKind::Pose},  {tgt_slot_, VarKind::Pose},
           {src_slot_, VarKind::Scale}, {src_slot_, VarKind::Code},
           {tgt_slot_, VarKind::Scale}, {tgt_slot_, VarKind::Code}};
}

template <bool kWithJacobians>
double GcFactor::eval_impl(const State& state, FactorLinearization* lin) const {
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const Mat3& r_rel = rel.rotation();
  const VecX& code_s = state.code[src_slot_];
  const VecX& code_t = state.code[tgt_slot_];
  const double s_src = std::exp(state.log_scale[src_slot_]);
  const double s_tgt = std::exp(state.log_scale[tgt_slot_]);
  const int nb_s = src_->prior.basis_count();
  const int nb_t = tgt_->prior.basis_count();
  const int dim = 6 + 1 + nb_s + 1 + nb_t;
  const RobustKernel kernel = RobustKernel::cauchy(delta_);

  RelAccum acc;
  if constexpr (kWithJacobians) acc.init(dim);
  double value = 0.0;
  long count = 0;

  VecX basis_t(nb_t);
  MatX jac;
  VecX residual(1);
  if constexpr (kWithJacobians) jac = MatX::Zero(1, dim);
  Eigen::Matrix<double, 3, 6> dp_dxi;

  auto process = [&](int idx) {
    const Vec2& x_src = src_points_[idx];
    const int pr = static_cast<int>(x_src.y());
    const int pc = static_cast<int>(x_src.x());
    bool clamped = false;
    const double d_src = clamped_depth(src_->prior.compose_at(pr, pc, code_s, s_src), clamped);
    const Vec3 ray = pixel_ray(cam_, x_src);
    const Vec3 q = d_src * ray;
    const Vec3 p = rel * q;
    if (p.z() <= 0.0) return false;
    Vec2 uv;
    uv.x() = cam_.fx * p.x() / p.z() + cam_.cx;
    uv.y() = cam_.fy * p.y() / p.z() + cam_.cy;
    double d_tgt;
    Vec2 d_tgt_grad;
    if (!sample_prior(tgt_->prior, uv.x(), uv.y(), code_t, s_tgt, d_tgt, d_tgt_grad, basis_t))
      return false;
    const double r = p.z() - d_tgt;
    ++count;
    if constexpr (kWithJacobians) {
      const Eigen::Matrix<double, 2, 3> jproj = project_jacobian(cam_, p);
      dp_dxi.leftCols<3>() = r_rel;
      dp_dxi.rightCols<3>().noalias() = -r_rel * skew(q);
      // dz/dxi - dD_t/duv * duv/dxi
      const Eigen::Matrix<double, 1, 3> dz = Eigen::Matrix<double, 1, 3>(0, 0, 1);
      const Eigen::Matrix<double, 1, 3> chain = dz - d_tgt_grad.transpose() * jproj;
      jac.block<1, 6>(0, 0) = chain * dp_dxi;
      const Vec3 dp_dd = r_rel * ray;
      const double dr_dd_src = clamped ? 0.0 : (chain * dp_dd)(0, 0);
      jac(0, 6) = dr_dd_src * d_src;  // d log s_src
      for (int k = 0; k < nb_s; ++k)
        jac(0, 7 + k) = dr_dd_src * s_src * src_->prior.bases.at(k, pr, pc);
      jac(0, 7 + nb_s) = -d_tgt;  // d log s_tgt
      for (int k = 0; k < nb_t; ++k) jac(0, 7 + nb_s + 1 + k) = -s_tgt * basis_t(k);
      residual(0) = r;
      acc.add(jac, residual, kernel);
    } else {
      value += kernel.value(r * r);
    }
    return true;
  };

  if (frozen_) {
    for (const int idx : *frozen_) process(idx);
    count = static_cast<long>(frozen_->size());
  } else {
    for (int i = 0; i < static_cast<int>(src_points_.size()); ++i) process(i);
  }
  if (count == 0) return 0.0;

  const double scale = params_.weight / static_cast<double>(count);
  if constexpr (kWithJacobians) {
    acc.scale(scale);
    expand_rel_blocks(acc, rel, *lin, {1, nb_s, 1, nb_t});
    lin->value = acc.value;
    return acc.value;
  }
  return value * scale;
}

double GcFactor::evaluate(const State& state) const { return eval_impl<false>(state, nullptr); }

double GcFactor::linearize(const State& state, FactorLinearization& lin) const {
  lin.reset({6, 6, 1, src_->prior.basis_count(), 1, tgt_->prior.basis_count()});
  return eval_impl<true>(state, &lin);
}

int GcFactor::support_size(const State& state) const {
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const VecX& code_s = state.code[src_slot_];
  const double s_src = std::exp(state.log_scale[src_slot_]);
  int count = 0;
  for (const Vec2& x_src : src_points_) {
    bool clamped = false;
    const double d = clamped_depth(
        src_->prior.compose_at(static_cast<int>(x_src.y()), static_cast<int>(x_src.x()), code_s,
                               s_src),
        clamped);
    const Vec3 p = rel * (d * pixel_ray(cam_, x_src));
    Vec2 uv;
    if (!project_checked(cam_, p, uv)) continue;
    if (sampleable(tgt_->prior.bases, uv.x(), uv.y())) ++count;
  }
  return count;
}

void GcFactor::freeze_support(const State& state) {
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const VecX& code_s = state.code[src_slot_];
  const double s_src = std::exp(state.log_scale[src_slot_]);
  std::vector<int> support;
  for (int i = 0; i < static_cast<int>(src_points_.size()); ++i) {
    const Vec2& x_src = src_points_[i];
    bool clamped = false;
    const double d = clamped_depth(
        src_->prior.compose_at(static_cast<int>(x_src.y()), static_cast<int>(x_src.x()), code_s,
                               s_src),
        clamped);
    const Vec3 p = rel * (d * pixel_ray(cam_, x_src));
    Vec2 uv;
    if (!project_checked(cam_, p, uv)) continue;
    if (sampleable(tgt_->prior.bases, uv.x(), uv.y())) support.push_back(i);
  }
  frozen_ = std::move(support);
}

// ---------------------------------------------------------------------------
// RP

RpFactor::RpFactor(int src_slot, int tgt_slot, const Keyframe* src, const Camera& cam,
                   MatchSet matches, RpParams params)
    : src_slot_(src_slot), tgt_slot_(tgt_slot), src_(src), cam_(cam), matches_(std::move(matches)),
      params_(params) {
  bound_ = params_.sigma * static_cast<double>(cam_.width) * static_cast<double>(cam_.width);
  vars_ = {{src_slot_, VarKind::Pose},
           {tgt_slot_, VarKind::Pose},
           {src_slot_, VarKind::Scale},
           {src_slot_, VarKind::Code}};
}

template <bool kWithJacobians>
double RpFactor::eval_impl(const State& state, FactorLinearization* lin) const {
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const Mat3& r_rel = rel.rotation();
  const VecX& code = state.code[src_slot_];
  const double s_src = std::exp(state.log_scale[src_slot_]);
  const int nb = src_->prior.basis_count();
  const int dim = 6 + 1 + nb;
  const RobustKernel kernel = RobustKernel::fair(bound_);

  RelAccum acc;
  if constexpr (kWithJacobians) acc.init(dim);
  double value = 0.0;
  long count = 0;

  MatX jac;
  if constexpr (kWithJacobians) jac = MatX::Zero(2, dim);
  Eigen::Matrix<double, 3, 6> dp_dxi;

  auto process = [&](int idx) {
    const auto& [x_src, x_tgt] = matches_.pairs[idx];
    const int pr = static_cast<int>(x_src.y());
    const int pc = static_cast<int>(x_src.x());
    bool clamped = false;
    const double d_src = clamped_depth(src_->prior.compose_at(pr, pc, code, s_src), clamped);
    const Vec3 ray = pixel_ray(cam_, x_src);
    const Vec3 q = d_src * ray;
    const Vec3 p = rel * q;
    if (p.z() <= 0.0) return;
    Vec2 uv;
    uv.x() = cam_.fx * p.x() / p.z() + cam_.cx;
    uv.y() = cam_.fy * p.y() / p.z() + cam_.cy;
    const Vec2 residual = uv - x_tgt;
    ++count;
    if constexpr (kWithJacobians) {
      const Eigen::Matrix<double, 2, 3> jproj = project_jacobian(cam_, p);
      dp_dxi.leftCols<3>() = r_rel;
      dp_dxi.rightCols<3>().noalias() = -r_rel * skew(q);
      jac.block<2, 6>(0, 0).noalias() = jproj * dp_dxi;
      Vec2 u = jproj * (r_rel * ray);
      if (clamped) u.setZero();
      jac.col(6) = u * d_src;
      for (int k = 0; k < nb; ++k) jac.col(7 + k) = u * (s_src * src_->prior.bases.at(k, pr, pc));
      acc.add(jac, residual, kernel);
    } else {
      value += kernel.value(residual.squaredNorm());
    }
  };

  if (frozen_) {
    for (const int idx : *frozen_) process(idx);
    count = static_cast<long>(frozen_->size());
  } else {
    for (int i = 0; i < matches_.size(); ++i) process(i);
  }
  if (count == 0) return 0.0;

  const double scale = params_.weight / static_cast<double>(count);
  if constexpr (kWithJacobians) {
    acc.scale(scale);
    expand_rel_blocks(acc, rel, *lin, {1, nb});
    lin->value = acc.value;
    return acc.value;
  }
  return value * scale;
}

double RpFactor::evaluate(const State& state) const { return eval_impl<false>(state, nullptr); }

double RpFactor::linearize(const State& state, FactorLinearization& lin) const {
  lin.reset({6, 6, 1, src_->prior.basis_count()});
  return eval_impl<true>(state, &lin);
}

int RpFactor::support_size(const State& state) const {
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const VecX& code = state.code[src_slot_];
  const double s_src = std::exp(state.log_scale[src_slot_]);
  int count = 0;
  for (const auto& [x_src, x_tgt] : matches_.pairs) {
    bool clamped = false;
    const double d = clamped_depth(
        src_->prior.compose_at(static_cast<int>(x_src.y()), static_cast<int>(x_src.x()), code,
                               s_src),
        clamped);
    if ((rel * (d * pixel_ray(cam_, x_src))).z() > 0.0) ++count;
  }
  return count;
}

void RpFactor::freeze_support(const State& state) {
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const VecX& code = state.code[src_slot_];
  const double s_src = std::exp(state.log_scale[src_slot_]);
  std::vector<int> support;
  for (int i = 0; i < matches_.size(); ++i) {
    const Vec2& x_src = matches_.pairs[i].first;
    bool clamped = false;
    const double d = clamped_depth(
        src_->prior.compose_at(static_cast<int>(x_src.y()), static_cast<int>(x_src.x()), code,
                               s_src),
        clamped);
    if ((rel * (d * pixel_ray(cam_, x_src))).z() > 0.0) support.push_back(i);
  }
  frozen_ = std::move(support);
}

// ---------------------------------------------------------------------------
// SMG

SmgFactor::SmgFactor(int src_slot, int tgt_slot, const Keyframe* src, const Keyframe* tgt,
                     const Camera& cam, MatchSet matches, SmgParams params)
    : src_slot_(src_slot), tgt_slot_(tgt_slot), src_(src), tgt_(tgt), cam_(cam),
      matches_(std::move(matches)), params_(params) {
  delta_ = params_.sigma * mean_average_depth(*src_);
  vars_ = {{src_slot_, VarKind::Pose},  {tgt_slot_, VarKind::Pose},
           {src_slot_, VarKind::Scale}, {src_slot_, VarKind::Code},
           {tgt_slot_, VarKind::Scale}, {tgt_slot_, VarKind::Code}};
}

template <bool kWithJacobians>
double SmgFactor::eval_impl(const State& state, FactorLinearization* lin) const {
  if (matches_.empty()) return 0.0;
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const Mat3& r_rel = rel.rotation();
  const VecX& code_s = state.code[src_slot_];
  const VecX& code_t = state.code[tgt_slot_];
  const double s_src = std::exp(state.log_scale[src_slot_]);
  const double s_tgt = std::exp(state.log_scale[tgt_slot_]);
  const int nb_s = src_->prior.basis_count();
  const int nb_t = tgt_->prior.basis_count();
  const int dim = 6 + 1 + nb_s + 1 + nb_t;
  const RobustKernel kernel = RobustKernel::fair(delta_);

  RelAccum acc;
  if constexpr (kWithJacobians) acc.init(dim);
  double value = 0.0;

  MatX jac;
  if constexpr (kWithJacobians) jac = MatX::Zero(3, dim);
  Eigen::Matrix<double, 3, 6> dp_dxi;

  for (const auto& [x_src, x_tgt] : matches_.pairs) {
    const int sr = static_cast<int>(x_src.y());
    const int sc = static_cast<int>(x_src.x());
    const int tr = static_cast<int>(x_tgt.y());
    const int tc = static_cast<int>(x_tgt.x());
    bool clamp_s = false, clamp_t = false;
    const double d_src = clamped_depth(src_->prior.compose_at(sr, sc, code_s, s_src), clamp_s);
    const double d_tgt = clamped_depth(tgt_->prior.compose_at(tr, tc, code_t, s_tgt), clamp_t);
    const Vec3 ray_s = pixel_ray(cam_, x_src);
    const Vec3 ray_t = pixel_ray(cam_, x_tgt);
    const Vec3 q = d_src * ray_s;
    const Vec3 p = rel * q;
    const Vec3 residual = p - d_tgt * ray_t;
    if constexpr (kWithJacobians) {
      dp_dxi.leftCols<3>() = r_rel;
      dp_dxi.rightCols<3>().noalias() = -r_rel * skew(q);
      jac.block<3, 6>(0, 0) = dp_dxi;
      Vec3 u = r_rel * ray_s;
      if (clamp_s) u.setZero();
      jac.col(6) = u * d_src;
      for (int k = 0; k < nb_s; ++k)
        jac.col(7 + k) = u * (s_src * src_->prior.bases.at(k, sr, sc));
      Vec3 ut = -ray_t;
      if (clamp_t) ut.setZero();
      jac.col(7 + nb_s) = ut * d_tgt;
      for (int k = 0; k < nb_t; ++k)
        jac.col(7 + nb_s + 1 + k) = ut * (s_tgt * tgt_->prior.bases.at(k, tr, tc));
      acc.add(jac, residual, kernel);
    } else {
      value += kernel.value(residual.squaredNorm());
    }
  }

  const double scale = params_.weight / static_cast<double>(matches_.size());
  if constexpr (kWithJacobians) {
    acc.scale(scale);
    expand_rel_blocks(acc, rel, *lin, {1, nb_s, 1, nb_t});
    lin->value = acc.value;
    return acc.value;
  }
  return value * scale;
}

double SmgFactor::evaluate(const State& state) const { return eval_impl<false>(state, nullptr); }

double SmgFactor::linearize(const State& state, FactorLinearization& lin) const {
  lin.reset({6, 6, 1, src_->prior.basis_count(), 1, tgt_->prior.basis_count()});
  return eval_impl<true>(state, &lin);
}

// ---------------------------------------------------------------------------
// RPS

RpsFactor::RpsFactor(int src_slot, int tgt_slot, RpsParams params)
    : src_slot_(src_slot), tgt_slot_(tgt_slot), params_(std::move(params)) {
  vars_ = {{src_slot_, VarKind::Pose},
           {tgt_slot_, VarKind::Pose},
           {src_slot_, VarKind::Scale},
           {tgt_slot_, VarKind::Scale}};
}

template <bool kWithJacobians>
double RpsFactor::eval_impl(const State& state, FactorLinearization* lin) const {
  const Pose rel = state.pose[tgt_slot_].inverse() * state.pose[src_slot_];
  const double ls_src = state.log_scale[src_slot_];
  const double ls_tgt = state.log_scale[tgt_slot_];
  const double s_src = std::exp(ls_src);

  const Vec3 t_norm = rel.translation() / s_src;
  const Vec3 t_target = params_.target_rel.translation() / params_.target_src_scale;
  const Vec3 r1 = t_norm - t_target;

  const Vec3 log_r = so3_log(rel.rotation());
  const Vec3 r2 = log_r - so3_log(params_.target_rel.rotation());

  const double r3 = (ls_tgt - ls_src) -
                    (std::log(params_.target_tgt_scale) - std::log(params_.target_src_scale));

  const double value =
      params_.weight *
      (r1.squaredNorm() + params_.rot_weight * r2.squaredNorm() + params_.scale_weight * r3 * r3);
  if constexpr (!kWithJacobians) return value;

  const int dim = 6 + 2;  // rel, log s_src, log s_tgt
  RelAccum acc;
  acc.init(dim);

  MatX jac = MatX::Zero(3, dim);
  // r1: translation over source scale.
  jac.block<3, 3>(0, 0) = rel.rotation() / s_src;
  jac.col(6) = -t_norm;
  acc.add(jac, r1, RobustKernel::none());

  // r2: rotation log difference, weight omega_rot.
  jac.setZero();
  jac.block<3, 3>(0, 3) = so3_right_jacobian_inv(log_r);
  jac *= std::sqrt(params_.rot_weight);
  acc.add(jac, std::sqrt(params_.rot_weight) * r2, RobustKernel::none());

  // r3: log scale ratio, weight omega_scl.
  MatX jac1 = MatX::Zero(1, dim);
  jac1(0, 6) = -1.0;
  jac1(0, 7) = 1.0;
  VecX res1(1);
  res1(0) = r3;
  jac1 *= std::sqrt(params_.scale_weight);
  acc.add(jac1, std::sqrt(params_.scale_weight) * res1, RobustKernel::none());

  acc.scale(params_.weight);
  expand_rel_blocks(acc, rel, *lin, {1, 1});
  lin->value = acc.value;
  return acc.value;
}

double RpsFactor::evaluate(const State& state) const { return eval_impl<false>(state, nullptr); }

double RpsFactor::linearize(const State& state, FactorLinearization& lin) const {
  lin.reset({6, 6, 1, 1});
  return eval_impl<true>(state, &lin);
}

// ---------------------------------------------------------------------------
// CD / SC / PS

CdFactor::CdFactor(int slot, int code_dim, CdParams params) : slot_(slot), params_(std::move(params)) {
  if (params_.target.size() == 0) params_.target = VecX::Zero(code_dim);
  if (params_.target.size() != code_dim)
    throw std::invalid_argument("CdFactor: target dimension mismatch");
  vars_ = {{slot_, VarKind::Code}};
}

double CdFactor::evaluate(const State& state) const {
  const VecX r = state.code[slot_] - params_.target;
  return params_.weight * r.squaredNorm() / static_cast<double>(r.size());
}

double CdFactor::linearize(const State& state, FactorLinearization& lin) const {
  const int nb = static_cast<int>(params_.target.size());
  lin.reset({nb});
  const VecX r = state.code[slot_] - params_.target;
  const double w = params_.weight / static_cast<double>(nb);
  lin.value = w * r.squaredNorm();
  lin.grad[0] = 2.0 * w * r;
  lin.hess[0][0] = 2.0 * w * MatX::Identity(nb, nb);
  return lin.value;
}

ScFactor::ScFactor(int slot, ScParams params) : slot_(slot), params_(params) {
  if (params_.target_scale <= 0.0)
    throw std::domain_error("ScFactor: target scale must be positive");
  log_target_ = std::log(params_.target_scale);
  vars_ = {{slot_, VarKind::Scale}};
}

double ScFactor::evaluate(const State& state) const {
  const double r = state.log_scale[slot_] - log_target_;
  return params_.weight * r * r;
}

double ScFactor::linearize(const State& state, FactorLinearization& lin) const {
  lin.reset({1});
  const double r = state.log_scale[slot_] - log_target_;
  lin.value = params_.weight * r * r;
  lin.grad[0](0) = 2.0 * params_.weight * r;
  lin.hess[0][0](0, 0) = 2.0 * params_.weight;
  return lin.value;
}

PsFactor::PsFactor(int slot, PsParams params) : slot_(slot), params_(std::move(params)) {
  vars_ = {{slot_, VarKind::Pose}};
}

double PsFactor::evaluate(const State& state) const {
  const Pose& pose = state.pose[slot_];
  const Vec3 r1 = pose.translation() - params_.target.translation();
  const Vec3 r2 = so3_log(pose.rotation()) - so3_log(params_.target.rotation());
  return params_.weight * (r1.squaredNorm() + params_.rot_weight * r2.squaredNorm());
}

double PsFactor::linearize(const State& state, FactorLinearization& lin) const {
  lin.reset({6});
  const Pose& pose = state.pose[slot_];
  const Vec3 log_r = so3_log(pose.rotation());
  const Vec3 r1 = pose.translation() - params_.target.translation();
  const Vec3 r2 = log_r - so3_log(params_.target.rotation());

  // T * exp(xi): d t / d rho = R, d log(R) / d phi = Jr^-1(log R).
  Eigen::Matrix<double, 3, 6> j1 = Eigen::Matrix<double, 3, 6>::Zero();
  j1.leftCols<3>() = pose.rotation();
  Eigen::Matrix<double, 3, 6> j2 = Eigen::Matrix<double, 3, 6>::Zero();
  j2.rightCols<3>() = so3_right_jacobian_inv(log_r);

  const double w = params_.weight;
  const double wr = params_.weight * params_.rot_weight;
  lin.value = w * r1.squaredNorm() + wr * r2.squaredNorm();
  lin.grad[0] = 2.0 * w * j1.transpose() * r1 + 2.0 * wr * j2.transpose() * r2;
  lin.hess[0][0] =
      2.0 * w * j1.transpose() * j1 + 2.0 * wr * j2.transpose() * j2;
  return lin.value;
}

}  // namespace sage
