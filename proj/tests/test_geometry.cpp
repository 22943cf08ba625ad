#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "destnet/fdcheck.hpp"
#include "destnet/geometry.hpp"
#include "destnet/ops.hpp"
#include "destnet/rng.hpp"

using namespace destnet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo, double hi, bool rg = false) {
  Tensor t = Tensor::zeros(std::move(shape), rg);
  for (Index i = 0; i < t.numel(); ++i) t.value()[i] = rng.uniform(lo, hi);
  return t;
}

WarpParams rand_params(Rng& rng, double scale) {
  WarpParams p;
  for (int i = 0; i < 8; ++i) p[i] = rng.uniform(-scale, scale);
  return p;
}

Tensor params_tensor(const WarpParams& p, bool rg = false) {
  Tensor t = Tensor::zeros({1, 8}, rg);
  for (int i = 0; i < 8; ++i) t.value()[i] = p[i];
  return t;
}

}  // namespace

TEST_CASE("params_to_homography") {
  CHECK(params_to_homography(WarpParams::Zero()).isApprox(Homography::Identity()));

  WarpParams trans = WarpParams::Zero();
  trans[2] = 0.3;
  trans[5] = -0.2;
  Homography ht = params_to_homography(trans);
  Eigen::Vector2d moved = apply_homography(ht, {0.1, 0.4});
  CHECK(moved.x() == doctest::Approx(0.4));
  CHECK(moved.y() == doctest::Approx(0.2));

  WarpParams scl = WarpParams::Zero();
  scl[0] = 0.1;
  scl[4] = 0.1;
  Homography hs = params_to_homography(scl);
  CHECK(hs(0, 0) == doctest::Approx(1.1));
  CHECK(hs(1, 1) == doctest::Approx(1.1));
  CHECK(hs(2, 2) == 1.0);
  CHECK(hs(0, 1) == 0.0);

  WarpParams bad = WarpParams::Zero();
  bad[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(params_to_homography(bad), NumericError);
}

TEST_CASE("compose_additive") {
  Rng rng(5);
  WarpParams p = rand_params(rng, 0.4);
  CHECK(compose_additive(p, WarpParams::Zero()) == p);
  CHECK(compose_additive(WarpParams::Zero(), p) == p);
  CHECK(compose_additive(WarpParams::Ones(), WarpParams::Ones()) ==
        WarpParams::Constant(2.0));
}

TEST_CASE("generate_grid identity and translation") {
  Tensor zero_p = Tensor::zeros({1, 8});
  SampleGrid grid = generate_grid(zero_p, 3, 5);
  CHECK(grid.shape() == Shape{1, 3, 5, 2});
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 5; ++j) {
      CHECK(grid.at({0, i, j, 0}) == mesh_coord(j, 5));
      CHECK(grid.at({0, i, j, 1}) == mesh_coord(i, 3));
    }
  }

  Tensor tp = Tensor::zeros({1, 8});
  tp.value()[2] = 0.25;
  tp.value()[5] = -0.5;
  SampleGrid shifted = generate_grid(tp, 3, 5);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 5; ++j) {
      CHECK(shifted.at({0, i, j, 0}) == doctest::Approx(mesh_coord(j, 5) + 0.25));
      CHECK(shifted.at({0, i, j, 1}) == doctest::Approx(mesh_coord(i, 3) - 0.5));
    }
  }
}

TEST_CASE("generate_grid perspective division") {
  // p6 = 0.5: at normalized (1,1), w = 1.5 and x' = 1/1.5
  Tensor p = Tensor::zeros({1, 8});
  p.value()[6] = 0.5;
  SampleGrid grid = generate_grid(p, 3, 3);
  CHECK(grid.at({0, 2, 2, 0}) == doctest::Approx(1.0 / 1.5).epsilon(1e-12));

  // w = p6*x + p7*y + 1 vanishes at x = -1 when p6 = 1
  Tensor degen = Tensor::zeros({1, 8});
  degen.value()[6] = 1.0;
  CHECK_THROWS_WITH_AS(generate_grid(degen, 3, 3), doctest::Contains("pixel"),
                       GeometryError);
}

TEST_CASE("generate_grid is bitwise stable under composing with zero") {
  Rng rng(9);
  WarpParams p = rand_params(rng, 0.2);
  WarpParams composed = compose_additive(p, WarpParams::Zero());
  SampleGrid a = generate_grid(params_tensor(p), 7, 7);
  SampleGrid b = generate_grid(params_tensor(composed), 7, 7);
  CHECK((a.value() == b.value()).all());
}

TEST_CASE("bilinear_sample exact identity") {
  Rng rng(21);
  for (Index extent : {2, 5, 8, 24, 28, 36, 63}) {
    Tensor img = rand_tensor({1, 1, extent, extent}, rng, 0.0, 1.0);
    SampleGrid grid = generate_grid(Tensor::zeros({1, 8}), extent, extent);
    Tensor out = bilinear_sample(img, grid);
    CHECK_MESSAGE((out.value() == img.value()).all(),
                  "identity resample must be bit-exact at raster " << extent);
  }
}

TEST_CASE("bilinear_sample midpoint and padding") {
  Tensor img = Tensor::from_data({1, 1, 2, 2}, {0, 4, 0, 4});
  Tensor grid = Tensor::zeros({1, 1, 1, 2});
  grid.value()[0] = 0.0;   // x midway between the two columns
  grid.value()[1] = -1.0;  // top row
  CHECK(bilinear_sample(img, grid).value()[0] == doctest::Approx(2.0));

  Tensor far = Tensor::zeros({1, 1, 1, 2});
  far.value()[0] = 5.0;
  far.value()[1] = 5.0;
  CHECK(bilinear_sample(img, far).value()[0] == 0.0);
}

TEST_CASE("warp gradients match finite differences") {
  Rng rng(77);
  Tensor img = rand_tensor({1, 1, 5, 5}, rng, 0.0, 1.0, true);
  Tensor p = rand_tensor({1, 8}, rng, -0.08, 0.08, true);
  Tensor target = rand_tensor({1, 1, 5, 5}, rng, 0.0, 0.8);
  auto loss = [&] { return smooth_l1(bilinear_sample(img, generate_grid(p, 5, 5)), target); };
  FdOutcome r = fd_check(loss, {{"p", p}, {"image", img}}, 16);
  CHECK_MESSAGE(r.worst_rel < 1e-4, r.worst_at);
}

TEST_CASE("apply_warp agrees with scalar homography application") {
  Rng rng(31);
  WarpParams p = rand_params(rng, 0.15);
  Homography h = params_to_homography(p);
  Eigen::Matrix<double, Eigen::Dynamic, 2> pts(3, 2);
  pts << -1, -1, 0.25, 0.5, 1, 1;
  Tensor mapped = apply_warp(params_tensor(p), pts);
  for (Index i = 0; i < 3; ++i) {
    Eigen::Vector2d ref = apply_homography(h, {pts(i, 0), pts(i, 1)});
    CHECK(mapped.at({0, i, 0}) == doctest::Approx(ref.x()).epsilon(1e-14));
    CHECK(mapped.at({0, i, 1}) == doctest::Approx(ref.y()).epsilon(1e-14));
  }
}

TEST_CASE("corners_to_homography") {
  Eigen::Matrix<double, 4, 2> unit;
  unit << 0, 0, 1, 0, 1, 1, 0, 1;

  Homography id = corners_to_homography(unit, unit);
  CHECK(id.isApprox(Homography::Identity(), 1e-12));

  Eigen::Matrix<double, 4, 2> moved = unit;
  moved.array() += 0.7;
  Homography t = corners_to_homography(unit, moved);
  CHECK(t(0, 2) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(t(1, 2) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(t(2, 0) == doctest::Approx(0.0));

  Eigen::Matrix<double, 4, 2> quad;
  quad << 0, 0, 1, 0.1, 1.1, 1, 0, 1;
  Homography h = corners_to_homography(unit, quad);
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector2d back = apply_homography(h, {unit(i, 0), unit(i, 1)});
    CHECK(std::abs(back.x() - quad(i, 0)) < 1e-9);
    CHECK(std::abs(back.y() - quad(i, 1)) < 1e-9);
  }

  Eigen::Matrix<double, 4, 2> collinear;
  collinear << 0, 0, 1, 1, 2, 2, 0, 1;
  CHECK_THROWS_AS(corners_to_homography(collinear, quad), GeometryError);
}

TEST_CASE("invert") {
  CHECK(invert(Homography::Identity()).isApprox(Homography::Identity(), 1e-12));

  WarpParams trans = WarpParams::Zero();
  trans[2] = 0.4;
  trans[5] = -0.1;
  Homography inv = invert(params_to_homography(trans));
  CHECK(inv(0, 2) == doctest::Approx(-0.4).epsilon(1e-12));
  CHECK(inv(1, 2) == doctest::Approx(0.1).epsilon(1e-12));

  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Homography h = params_to_homography(rand_params(rng, 0.3));
    Homography prod = h * invert(h);
    prod /= prod(2, 2);
    CHECK((prod - Homography::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  }

  Homography singular = Homography::Zero();
  singular(2, 2) = 1.0;
  CHECK_THROWS_AS(invert(singular), GeometryError);
}

TEST_CASE("batched warping is invariant to batch order") {
  Rng rng(42);
  Tensor imgs = rand_tensor({3, 1, 6, 6}, rng, 0.0, 1.0);
  Tensor ps = rand_tensor({3, 8}, rng, -0.1, 0.1);
  Tensor out = bilinear_sample(imgs, generate_grid(ps, 6, 6));

  // swap samples 0 and 2
  Tensor imgs_sw = imgs.detached_copy();
  Tensor ps_sw = ps.detached_copy();
  const Index plane = 36;
  for (Index i = 0; i < plane; ++i) {
    std::swap(imgs_sw.value()[i], imgs_sw.value()[2 * plane + i]);
  }
  for (Index i = 0; i < 8; ++i) std::swap(ps_sw.value()[i], ps_sw.value()[16 + i]);
  Tensor out_sw = bilinear_sample(imgs_sw, generate_grid(ps_sw, 6, 6));
  for (Index i = 0; i < plane; ++i) {
    CHECK(out.value()[i] == out_sw.value()[2 * plane + i]);
    CHECK(out.value()[2 * plane + i] == out_sw.value()[i]);
    CHECK(out.value()[plane + i] == out_sw.value()[plane + i]);
  }
}
