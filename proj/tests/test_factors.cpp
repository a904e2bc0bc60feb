#include "sage/factors.hpp"

#include "sage/robust.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

using namespace sage;
using namespace sage::test;

namespace {

constexpr double kJacobianTol = 1e-5;

struct PairFixture {
  Keyframe src;
  Keyframe tgt;
  Camera cam;
  State state;
  MatchSet matches;

  explicit PairFixture(Rng& rng, int match_count = 6)
      : src(random_keyframe(rng)), tgt(random_keyframe(rng)),
        cam(test_camera(src.height(), src.width())),
        state(random_pair_state(rng, src.prior.basis_count())),
        matches(random_matches(rng, src.height(), src.width(), match_count)) {}
};

}  // namespace

TEST_CASE("robust kernels: values and bounds") {
  CHECK(fair_loss(0.0, 3.0) == 0.0);
  CHECK(fair_loss(2.0, 2.0) == doctest::Approx(2.0 * (1.0 - std::log(2.0))).epsilon(1e-12));
  CHECK(cauchy_loss(3.0, 1.0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(cauchy_loss(0.0, 0.5) == 0.0);
  CHECK_THROWS_AS(fair_loss(-1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(cauchy_loss(-1e-9, 1.0), std::domain_error);

  // Down-weighting: rho(a; b) <= a/b with equality only at a = 0.
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(1e-6, 50.0);
    const double b = rng.uniform(0.1, 10.0);
    CHECK(fair_loss(a, b) < a / b);
    CHECK(cauchy_loss(a, b) < a / b);
    CHECK(fair_loss(a, b) >= 0.0);
  }

  // Kernel derivatives drive the factor Jacobians; check them directly.
  for (int i = 0; i < 20; ++i) {
    const double a = rng.uniform(0.01, 20.0);
    const double b = rng.uniform(0.1, 5.0);
    const double h = 1e-6;
    CHECK(fair_loss_derivative(a, b) ==
          doctest::Approx((fair_loss(a + h, b) - fair_loss(a - h, b)) / (2 * h)).epsilon(1e-6));
    CHECK(cauchy_loss_derivative(a, b) ==
          doctest::Approx((cauchy_loss(a + h, b) - cauchy_loss(a - h, b)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("fm: zero cases and analytic jacobian") {
  Rng rng(11);
  PairFixture fx(rng);

  SUBCASE("identical keyframes at identity give zero") {
    State state = State::sized(2);
    state.code[0] = VecX::Zero(fx.src.prior.basis_count());
    state.code[1] = state.code[0];
    FmFactor fm(0, 1, &fx.src, &fx.src, fx.cam, FmParams{1.0, {1.0, 1.0}});
    CHECK(fm.evaluate(state) == doctest::Approx(0.0).epsilon(1e-14));
  }

  SUBCASE("constant equal feature maps give zero for any overlap pose") {
    Keyframe a = random_keyframe(rng);
    Keyframe b = random_keyframe(rng);
    for (auto* kf : {&a, &b})
      for (int lv = 0; lv < kf->features.level_count(); ++lv)
        std::fill(kf->features.levels[lv].data().begin(), kf->features.levels[lv].data().end(),
                  0.375);
    State state = random_pair_state(rng, a.prior.basis_count());
    FmFactor fm(0, 1, &a, &b, fx.cam, FmParams{1.0, {1.0, 1.0}});
    REQUIRE(fm.support_size(state) > 0);
    CHECK(fm.evaluate(state) == doctest::Approx(0.0).epsilon(1e-14));
  }

  SUBCASE("jacobian matches finite differences") {
    for (int trial = 0; trial < 20; ++trial) {
      PairFixture f(rng);
      FmFactor fm(0, 1, &f.src, &f.tgt, f.cam, FmParams{1.0, {1.3, 0.7}});
      REQUIRE(fm.support_size(f.state) > 20);
      CHECK(jacobian_relative_error(fm, f.state) < kJacobianTol);
    }
  }
}

TEST_CASE("rp: example values and jacobian") {
  Rng rng(13);

  SUBCASE("one match with squared pixel error sigma*W^2 gives fair(1)") {
    PairFixture f(rng, 1);
    State state = State::sized(2);
    state.code[0] = VecX::Zero(f.src.prior.basis_count());
    state.code[1] = state.code[0];
    const Vec2 x_src(4, 3);
    const double depth = f.src.prior.compose_at(3, 4, state.code[0], 1.0);
    const Vec2 proj = project(f.cam, unproject(f.cam, x_src, depth));
    const double bound = 0.03 * f.cam.width * f.cam.width;
    MatchSet m;
    m.candidate_count = 1;
    m.pairs.emplace_back(x_src, proj + Vec2(std::sqrt(bound), 0.0));
    RpFactor rp(0, 1, &f.src, f.cam, m, RpParams{1.0, 0.03});
    CHECK(rp.evaluate(state) ==
          doctest::Approx(2.0 * (1.0 - std::log(2.0))).epsilon(1e-10));
  }

  SUBCASE("perfect correspondences give zero") {
    PairFixture f(rng);
    const Pose rel = f.state.pose[1].inverse() * f.state.pose[0];
    MatchSet m;
    m.candidate_count = 0;
    for (int i = 0; i < 8; ++i) {
      const Vec2 x_src(1 + static_cast<int>(rng.uniform_index(f.src.width() - 2)),
                       1 + static_cast<int>(rng.uniform_index(f.src.height() - 2)));
      const double d = f.src.prior.compose_at(static_cast<int>(x_src.y()),
                                              static_cast<int>(x_src.x()), f.state.code[0],
                                              std::exp(f.state.log_scale[0]));
      Vec2 proj;
      if (!project_checked(f.cam, rel * unproject(f.cam, x_src, d), proj)) continue;
      m.pairs.emplace_back(x_src, proj);
      ++m.candidate_count;
    }
    REQUIRE(m.size() >= 4);
    RpFactor rp(0, 1, &f.src, f.cam, m, RpParams{0.1, 0.03});
    CHECK(rp.evaluate(f.state) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("jacobian matches finite differences") {
    for (int trial = 0; trial < 20; ++trial) {
      PairFixture f(rng);
      RpFactor rp(0, 1, &f.src, f.cam, f.matches, RpParams{0.1, 0.03});
      REQUIRE(rp.support_size(f.state) > 0);
      CHECK(jacobian_relative_error(rp, f.state) < kJacobianTol);
    }
  }
}

TEST_CASE("smg: delta semantics and jacobian") {
  Rng rng(17);

  SUBCASE("one match with squared 3d distance delta gives fair(1)") {
    PairFixture f(rng, 1);
    State state = State::sized(2);
    state.code[0] = VecX::Zero(f.src.prior.basis_count());
    state.code[1] = state.code[0];
    SmgParams params{1.0, 0.1};
    MatchSet m;
    m.candidate_count = 1;
    m.pairs.emplace_back(Vec2(4, 3), Vec2(4, 3));
    SmgFactor probe(0, 1, &f.src, &f.tgt, f.cam, m, params);
    const double delta = probe.delta();
    CHECK(delta == doctest::Approx(0.1 * mean_average_depth(f.src)).epsilon(1e-12));

    const double d_src = f.src.prior.compose_at(3, 4, state.code[0], 1.0);
    const double d_tgt = f.tgt.prior.compose_at(3, 4, state.code[1], 1.0);
    const Vec3 p_src = unproject(f.cam, Vec2(4, 3), d_src);
    const Vec3 p_tgt = unproject(f.cam, Vec2(4, 3), d_tgt);
    state.pose[0] = Pose(Mat3::Identity(), p_tgt + Vec3(std::sqrt(delta), 0, 0) - p_src);
    CHECK(probe.evaluate(state) ==
          doctest::Approx(2.0 * (1.0 - std::log(2.0))).epsilon(1e-10));
  }

  SUBCASE("jacobian matches finite differences") {
    for (int trial = 0; trial < 20; ++trial) {
      PairFixture f(rng);
      SmgFactor smg(0, 1, &f.src, &f.tgt, f.cam, f.matches, SmgParams{0.1, 0.1});
      CHECK(jacobian_relative_error(smg, f.state) < kJacobianTol);
    }
  }
}

TEST_CASE("gc: delta semantics and jacobian") {
  Rng rng(19);

  SUBCASE("consistent geometry gives zero") {
    PairFixture f(rng);
    State state = State::sized(2);
    state.code[0] = VecX::Zero(f.src.prior.basis_count());
    state.code[1] = state.code[0];
    GcFactor gc(0, 1, &f.src, &f.src, f.cam, MatchSet{}, GcParams{1.0, 0.03});
    CHECK(gc.evaluate(state) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("a known z-error maps through the cauchy kernel") {
    PairFixture f(rng, 1);
    State state = State::sized(2);
    state.code[0] = VecX::Zero(f.src.prior.basis_count());
    state.code[1] = state.code[0];
    MatchSet m;
    m.candidate_count = 1;
    m.pairs.emplace_back(Vec2(4, 3), Vec2(0, 0));
    GcFactor gc(0, 1, &f.src, &f.src, f.cam, m, GcParams{1.0, 0.03});
    state.pose[0] = Pose(Mat3::Identity(), Vec3(0, 0, std::sqrt(gc.delta())));
    const double d_src = f.src.prior.compose_at(3, 4, state.code[0], 1.0);
    const Vec3 p = state.pose[0] * unproject(f.cam, Vec2(4, 3), d_src);
    double d_at;
    REQUIRE(f.src.prior.compose_sampled(project(f.cam, p).x(), project(f.cam, p).y(),
                                        state.code[1], 1.0, d_at));
    const double r = p.z() - d_at;
    CHECK(gc.evaluate(state) == doctest::Approx(cauchy_loss(r * r, gc.delta())).epsilon(1e-12));
    // Close to ln 2 where the sampled depth barely moves.
    CHECK(gc.evaluate(state) == doctest::Approx(std::log(2.0)).epsilon(0.15));
  }

  SUBCASE("jacobian matches finite differences (sparse and dense)") {
    for (int trial = 0; trial < 10; ++trial) {
      PairFixture f(rng);
      GcFactor sparse(0, 1, &f.src, &f.tgt, f.cam, f.matches, GcParams{0.1, 0.03});
      REQUIRE(sparse.support_size(f.state) > 0);
      CHECK(jacobian_relative_error(sparse, f.state) < kJacobianTol);
      GcFactor dense(0, 1, &f.src, &f.tgt, f.cam, MatchSet{}, GcParams{0.1, 0.03});
      REQUIRE(dense.support_size(f.state) > 20);
      CHECK(jacobian_relative_error(dense, f.state) < kJacobianTol);
    }
  }
}

TEST_CASE("rps: gauge invariance, example value, jacobian") {
  Rng rng(23);

  SUBCASE("estimates at targets give zero; pure rotation gives w_rot theta^2") {
    RpsParams params;
    params.rot_weight = 5.0;
    params.scale_weight = 0.5;
    params.target_rel = Pose(so3_exp(Vec3(0.1, -0.2, 0.3)), Vec3(0.4, 0.1, -0.2));
    params.target_src_scale = 1.3;
    params.target_tgt_scale = 0.8;
    State state = State::sized(2);
    state.pose[1] = Pose::identity();
    state.pose[0] = params.target_rel;  // rel = pose[1]^-1 * pose[0]
    state.log_scale[0] = std::log(1.3);
    state.log_scale[1] = std::log(0.8);
    RpsFactor rps(0, 1, params);
    CHECK(rps.evaluate(state) == doctest::Approx(0.0).epsilon(1e-12));

    // Offset the rotation along the target's own axis so the log difference
    // is exactly theta.
    const double theta = 0.17;
    const Vec3 axis = so3_log(params.target_rel.rotation()).normalized();
    State rotated = state;
    rotated.pose[0] = Pose(params.target_rel.rotation() * so3_exp(theta * axis),
                           params.target_rel.translation());
    CHECK(rps.evaluate(rotated) == doctest::Approx(5.0 * theta * theta).epsilon(1e-9));
  }

  SUBCASE("joint scaling of scales and translation leaves the value unchanged") {
    RpsParams params;
    params.target_rel = Pose(so3_exp(Vec3(0.05, 0.02, -0.1)), Vec3(0.3, -0.2, 0.1));
    params.target_src_scale = 0.9;
    params.target_tgt_scale = 1.2;
    RpsFactor rps(0, 1, params);
    for (int i = 0; i < 20; ++i) {
      State state = random_pair_state(rng, 1);
      const double base = rps.evaluate(state);
      for (const double k : {0.1, 10.0, 3.7}) {
        State scaled = state;
        scaled.pose[0] = Pose(state.pose[0].rotation(), k * state.pose[0].translation());
        scaled.pose[1] = Pose(state.pose[1].rotation(), k * state.pose[1].translation());
        scaled.log_scale[0] += std::log(k);
        scaled.log_scale[1] += std::log(k);
        CHECK(rps.evaluate(scaled) == doctest::Approx(base).epsilon(1e-9));
      }
    }
  }

  SUBCASE("jacobian matches finite differences") {
    RpsParams params;
    params.weight = 2.0;
    params.target_rel = Pose(so3_exp(Vec3(0.05, 0.02, -0.1)), Vec3(0.3, -0.2, 0.1));
    params.target_src_scale = 0.9;
    params.target_tgt_scale = 1.2;
    for (int trial = 0; trial < 20; ++trial) {
      State state = random_pair_state(rng, 1);
      RpsFactor rps(0, 1, params);
      CHECK(jacobian_relative_error(rps, state) < kJacobianTol);
    }
  }
}

TEST_CASE("cd / sc / ps: values, gradients, jacobians") {
  Rng rng(29);

  SUBCASE("cd: all-ones code with zero target and B=8 gives 1") {
    State state = State::sized(1);
    state.code[0] = VecX::Ones(8);
    CdFactor cd(0, 8, CdParams{1.0, VecX()});
    CHECK(cd.evaluate(state) == doctest::Approx(1.0).epsilon(1e-12));
    FactorLinearization lin;
    cd.linearize(state, lin);
    CHECK((lin.grad[0] - (2.0 / 8.0) * VecX::Ones(8)).norm() == doctest::Approx(0.0));
  }

  SUBCASE("sc: value is squared log ratio") {
    State state = State::sized(1);
    state.log_scale[0] = std::log(std::exp(1.0) * 2.5);
    ScFactor sc(0, ScParams{1.0, 2.5});
    CHECK(sc.evaluate(state) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(ScFactor(0, ScParams{1.0, -1.0}), std::domain_error);
  }

  SUBCASE("ps: translation and rotation components") {
    PsParams params;
    params.rot_weight = 0.7;
    params.target = Pose(so3_exp(Vec3(0.1, 0.2, -0.1)), Vec3(0.5, -0.3, 0.2));
    PsFactor ps(0, params);
    State state = State::sized(1);
    state.pose[0] = params.target;
    CHECK(ps.evaluate(state) == doctest::Approx(0.0).epsilon(1e-12));

    state.pose[0] = Pose(params.target.rotation(), params.target.translation() + Vec3(1, 0, 0));
    CHECK(ps.evaluate(state) == doctest::Approx(1.0).epsilon(1e-12));

    const double theta = 0.21;
    const Vec3 axis = so3_log(params.target.rotation()).normalized();
    state.pose[0] = Pose(params.target.rotation() * so3_exp(theta * axis),
                         params.target.translation());
    CHECK(ps.evaluate(state) == doctest::Approx(0.7 * theta * theta).epsilon(1e-9));
  }

  SUBCASE("jacobians match finite differences") {
    for (int trial = 0; trial < 20; ++trial) {
      State state = random_pair_state(rng, 4);
      CdParams cd_params;
      cd_params.weight = 0.3;
      cd_params.target = VecX::Zero(4);
      for (int k = 0; k < 4; ++k) cd_params.target(k) = rng.uniform(-0.5, 0.5);
      CdFactor cd(0, 4, cd_params);
      CHECK(jacobian_relative_error(cd, state) < kJacobianTol);

      ScFactor sc(1, ScParams{1.7, rng.uniform(0.5, 2.0)});
      CHECK(jacobian_relative_error(sc, state) < kJacobianTol);

      PsParams ps_params;
      ps_params.weight = 0.8;
      ps_params.rot_weight = 1.9;
      ps_params.target = random_pose_near_identity(rng, 0.3, 0.4);
      PsFactor ps(0, ps_params);
      CHECK(jacobian_relative_error(ps, state) < kJacobianTol);
    }
  }
}

TEST_CASE("pair factor values are non-negative") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    PairFixture f(rng);
    FmFactor fm(0, 1, &f.src, &f.tgt, f.cam, FmParams{1.0, {1.0, 1.0}});
    RpFactor rp(0, 1, &f.src, f.cam, f.matches, RpParams{0.1, 0.03});
    SmgFactor smg(0, 1, &f.src, &f.tgt, f.cam, f.matches, SmgParams{0.1, 0.1});
    GcFactor gc(0, 1, &f.src, &f.tgt, f.cam, f.matches, GcParams{0.1, 0.03});
    CHECK(fm.evaluate(f.state) >= 0.0);
    CHECK(rp.evaluate(f.state) >= 0.0);
    CHECK(smg.evaluate(f.state) >= 0.0);
    CHECK(gc.evaluate(f.state) >= 0.0);
  }
}
