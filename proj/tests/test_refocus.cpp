#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_support.hpp"
#include "tiltshift/errors.hpp"
#include "tiltshift/parallel.hpp"
#include "tiltshift/refocus.hpp"
#include "tiltshift/synthetic.hpp"

using namespace tiltshift;
using test::Rng;

namespace {

LightFieldDataset plane_dataset(const RefocusPlane& plane, int size = 32, int rows = 3, int cols = 3) {
  CameraGridOptions opt;
  opt.rows = rows;
  opt.cols = cols;
  opt.width = size;
  opt.height = size;
  return render_scene(make_plane_scene(plane, opt));
}

LightFieldDataset constant_dataset(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  CameraGridOptions opt;
  opt.width = 20;
  opt.height = 16;
  std::vector<Image> views;
  Image img(opt.width, opt.height);
  for (int v = 0; v < opt.height; ++v) {
    for (int u = 0; u < opt.width; ++u) {
      img.at(u, v, 0) = r;
      img.at(u, v, 1) = g;
      img.at(u, v, 2) = b;
    }
  }
  views.assign(9, img);
  return LightFieldDataset(3, 3, views, make_camera_grid(opt));
}

std::set<std::pair<int, int>> members(const Aperture& ap) {
  std::set<std::pair<int, int>> out;
  for (const auto& e : ap.entries) out.emplace(e.view.s, e.view.t);
  return out;
}

ImageF as_float(const Image& img) { return to_float(img); }

ProjectionMap shift(double du, double dv) {
  ProjectionMap map;
  map.P(0, 2) = du;
  map.P(1, 2) = dv;
  return map;
}

}  // namespace

TEST_CASE("make_aperture") {
  const LightFieldDataset ds = constant_dataset(10, 20, 30);

  SUBCASE("self only") {
    const Aperture ap = make_aperture(ds, {1, 1}, 0.5);
    REQUIRE(ap.entries.size() == 1u);
    CHECK(ap.entries[0].view == ViewIndex{1, 1});
    CHECK(ap.entries[0].weight == 1.0);
  }

  SUBCASE("center plus four neighbours") {
    const Aperture ap = make_aperture(ds, {1, 1}, 1.0);
    CHECK(members(ap) == std::set<std::pair<int, int>>{{1, 1}, {0, 1}, {2, 1}, {1, 0}, {1, 2}});
    for (const auto& e : ap.entries) CHECK(e.weight == doctest::Approx(0.2).epsilon(1e-12));
  }

  SUBCASE("between four views") {
    const Aperture ap = make_aperture(ds, {0.5, 0.5}, 0.8);
    CHECK(members(ap) == std::set<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    for (const auto& e : ap.entries) CHECK(e.weight == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("gaussian weights fall off with distance and sum to one") {
    const Aperture ap = make_aperture(ds, {1, 1}, 2.0, ApertureProfile::Gaussian);
    CHECK(ap.entries.size() == 9u);
    double total = 0.0;
    double center = 0.0;
    double edge = 0.0;
    double corner = 0.0;
    for (const auto& e : ap.entries) {
      total += e.weight;
      const int dist = std::abs(e.view.s - 1) + std::abs(e.view.t - 1);
      (dist == 0 ? center : dist == 1 ? edge : corner) = e.weight;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    // sigma = 1: weights proportional to exp(-r^2 / 2).
    CHECK(edge / center == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
    CHECK(corner / center == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(make_aperture(ds, {-0.1, 1}, 1.0), Error);
    CHECK_THROWS_AS(make_aperture(ds, {1, 2.5}, 1.0), Error);
    CHECK_THROWS_AS(make_aperture(ds, {1, 1}, 0.0), Error);
    try {
      make_aperture(ds, {0.5, 0.5}, 0.2);
      FAIL("expected EmptyAperture");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyAperture);
    }
  }

  SUBCASE("cap keeps the heaviest views") {
    const Aperture full = make_aperture(ds, {1, 1}, 2.0, ApertureProfile::Gaussian);
    const Aperture capped = cap_aperture(full, 5);
    CHECK(members(capped) == std::set<std::pair<int, int>>{{1, 1}, {0, 1}, {2, 1}, {1, 0}, {1, 2}});
    double total = 0.0;
    for (const auto& e : capped.entries) total += e.weight;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cap_aperture(full, 20).entries.size() == 9u);
  }
}

TEST_CASE("warp_view") {
  const LightFieldDataset ds = plane_dataset(RefocusPlane(Vec3(0, 0, 2), Vec3::UnitZ()), 24);
  const Image& view = ds.view({1, 1});

  SUBCASE("identity") {
    const WarpedView w = warp_view(view, ProjectionMap{});
    CHECK(w.image == as_float(view));
    for (float m : w.mask.data()) CHECK(m == 1.0f);
  }

  SUBCASE("integer shift leaves a five-column band") {
    const WarpedView w = warp_view(view, shift(-5, 0));
    const ImageF ref = as_float(view);
    for (int v = 0; v < 24; ++v) {
      for (int u = 0; u < 24; ++u) {
        if (u < 5) {
          CHECK(w.mask.at(u, v) == 0.0f);
        } else {
          CHECK(w.mask.at(u, v) == 1.0f);
          for (int c = 0; c < 3; ++c) CHECK(w.image.at(u, v, c) == ref.at(u - 5, v, c));
        }
      }
    }
  }

  SUBCASE("fractional shift gives a partial mask on the boundary") {
    const WarpedView w = warp_view(view, shift(-0.25, 0));
    CHECK(w.mask.at(0, 3) == doctest::Approx(0.75));
    CHECK(w.mask.at(1, 3) == 1.0f);
  }

  SUBCASE("constant colour stays constant") {
    const LightFieldDataset flat = constant_dataset(40, 120, 250);
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
      ProjectionMap map;
      map.P = Mat3::Identity() + 0.05 * Mat3::Random();
      map.P(2, 2) = 1.0;
      map.P(2, 0) *= 0.01;
      map.P(2, 1) *= 0.01;
      const WarpedView w = warp_view(flat.view({0, 0}), map, 30, 30);
      for (int v = 0; v < 30; ++v) {
        for (int u = 0; u < 30; ++u) {
          if (w.mask.at(u, v) <= 0.0f) continue;
          CHECK(w.image.at(u, v, 0) == doctest::Approx(40.0 / 255.0).epsilon(1e-6));
          CHECK(w.image.at(u, v, 2) == doctest::Approx(250.0 / 255.0).epsilon(1e-6));
        }
      }
    }
  }

  SUBCASE("singular map") {
    ProjectionMap singular;
    singular.P.setZero();
    CHECK_THROWS_AS(warp_view(view, singular), Error);
  }
}

TEST_CASE("refocus_generalized") {
  const RefocusPlane truth(Vec3(0, 0, 2), Vec3::UnitZ());
  const LightFieldDataset ds = plane_dataset(truth, 32);
  const CameraCalibration& ref = ds.calibration({1, 1});

  SUBCASE("single reference view reproduces it exactly") {
    const Aperture ap = make_aperture(ds, {1, 1}, 0.5);
    const RefocusImage out = refocus_generalized(ds, ap, RefocusPlane(Vec3(0, 0, 3), Vec3(0.2, 0.1, 1)), ref);
    CHECK(out.image == as_float(ds.view({1, 1})));
    CHECK(out.covered_fraction() == 1.0);
  }

  SUBCASE("constant light field stays constant where covered") {
    const LightFieldDataset flat = constant_dataset(200, 100, 0);
    const Aperture ap = make_aperture(flat, {1, 1}, 1.5);
    const RefocusImage out =
        refocus_generalized(flat, ap, RefocusPlane(Vec3(0, 0, 1.2), Vec3(0.3, 0, 1)), flat.calibration({1, 1}));
    for (int v = 0; v < 16; ++v) {
      for (int u = 0; u < 20; ++u) {
        REQUIRE(out.covered(u, v));
        CHECK(out.image.at(u, v, 0) == doctest::Approx(200.0 / 255.0).epsilon(1e-6));
        CHECK(out.image.at(u, v, 2) == 0.0f);
      }
    }
  }

  SUBCASE("orientation of the plane does not matter") {
    const Aperture ap = make_aperture(ds, {1, 1}, 1.5);
    const RefocusPlane tilted(Vec3(0.1, 0, 2.2), Vec3(0.3, -0.1, 1));
    CHECK(refocus_generalized(ds, ap, tilted, ref).image == refocus_generalized(ds, ap, tilted.flipped(), ref).image);
  }

  SUBCASE("rescaling aperture weights is bit-identical") {
    const Aperture ap = make_aperture(ds, {1, 1}, 1.5, ApertureProfile::Gaussian);
    std::vector<ApertureEntry> scaled = ap.entries;
    for (auto& e : scaled) e.weight *= 7.3;
    const Aperture rescaled = normalized_aperture(ap.reference, scaled, ap.radius);
    const RefocusPlane plane(Vec3(0, 0, 2.4), Vec3(0.1, 0.2, 1));
    const RefocusImage a = refocus_generalized(ds, ap, plane, ref);
    const RefocusImage b = refocus_generalized(ds, rescaled, plane, ref);
    CHECK(a.image == b.image);
    CHECK(a.coverage == b.coverage);
  }

  SUBCASE("output does not depend on the thread count") {
    const Aperture ap = make_aperture(ds, {1, 1}, 1.5);
    const RefocusPlane plane(Vec3(0, 0, 2.4), Vec3(0.1, 0.2, 1));
    const unsigned before = thread_count();
    set_thread_count(1);
    const RefocusImage one = refocus_generalized(ds, ap, plane, ref);
    set_thread_count(4);
    const RefocusImage four = refocus_generalized(ds, ap, plane, ref);
    set_thread_count(before);
    CHECK(one.image == four.image);
    CHECK(one.coverage == four.coverage);
  }

  SUBCASE("custom output size") {
    const Aperture ap = make_aperture(ds, {1, 1}, 1.0);
    const RefocusImage out = refocus_generalized(ds, ap, truth, ref.rescaled(0.5), 16, 16);
    CHECK(out.image.width() == 16);
    CHECK(out.coverage.height() == 16);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(refocus_generalized(ds, Aperture{}, truth, ref), Error);
    try {
      refocus_generalized(ds, make_aperture(ds, {1, 1}, 1.0), RefocusPlane(Vec3(0, 0, 0), Vec3::UnitZ()), ref);
      FAIL("expected DegeneratePlane");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegeneratePlane);
    }
  }
}

TEST_CASE("shift_and_sum") {
  const LightFieldDataset ds = plane_dataset(RefocusPlane(Vec3(0, 0, 2), Vec3::UnitZ()), 32);

  SUBCASE("zero shift is the weighted average of aligned views") {
    const Aperture ap = make_aperture(ds, {1, 1}, 1.0);
    const RefocusImage out = shift_and_sum(ds, ap, 0.0);
    for (int v = 0; v < 32; v += 7) {
      for (int u = 0; u < 32; u += 5) {
        double expected = 0.0;
        for (const auto& e : ap.entries) expected += e.weight * ds.view(e.view).at(u, v, 1) / 255.0;
        CHECK(out.image.at(u, v, 1) == doctest::Approx(expected).epsilon(1e-6));
        CHECK(out.coverage.at(u, v) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }

  SUBCASE("constant light field") {
    const LightFieldDataset flat = constant_dataset(7, 77, 177);
    const RefocusImage out = shift_and_sum(flat, make_aperture(flat, {1, 1}, 2.0), 2.7);
    for (int v = 0; v < 16; ++v) {
      for (int u = 0; u < 20; ++u) {
        if (!out.covered(u, v)) continue;
        CHECK(out.image.at(u, v, 1) == doctest::Approx(77.0 / 255.0).epsilon(1e-6));
      }
    }
  }

  SUBCASE("the true disparity maximizes PSNR over a sweep") {
    const Aperture ap = make_aperture(ds, {1, 1}, 1.5);
    const ImageF truth = as_float(ds.view({1, 1}));
    double best_delta = 0.0;
    double best = -1.0;
    for (int i = 0; i <= 40; ++i) {
      const double delta = 3.0 + 0.1 * i;
      const RefocusImage out = shift_and_sum(ds, ap, delta);
      const double p = psnr(out.image, truth, [&](int u, int v) { return out.coverage.at(u, v) > 1.0f - 1e-6f; });
      if (p > best) {
        best = p;
        best_delta = delta;
      }
    }
    CHECK(best_delta == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(best >= 40.0);
  }
}

TEST_CASE("frontoparallel planes reduce to shift and sum") {
  const LightFieldDataset ds = plane_dataset(RefocusPlane(Vec3(0, 0, 2.5), Vec3::UnitZ()), 32);
  const Aperture ap = make_aperture(ds, {1, 1}, 1.5, ApertureProfile::Gaussian);
  for (double depth : {1.7, 2.5, 4.0}) {
    const RefocusImage a = refocus_generalized(ds, ap, RefocusPlane(Vec3(0, 0, depth), Vec3::UnitZ()),
                                               ds.calibration({1, 1}));
    const RefocusImage b = shift_and_sum(ds, ap, 100.0 * 0.1 / depth);
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.image.data().size(); ++i) {
      worst = std::max(worst, std::abs(a.image.data()[i] - b.image.data()[i]));
    }
    CHECK(worst <= 1e-6f);
    CHECK(a.coverage == b.coverage);
  }
}

TEST_CASE("virtual viewpoints") {
  const RefocusPlane plane(Vec3(0, 0, 2), Vec3(0.2, 0, 1));
  const LightFieldDataset ds = plane_dataset(plane, 24);

  SUBCASE("grid node matches the discrete reference") {
    const RefocusImage virt = refocus_at_virtual_view(ds, {1, 1}, 1.0, plane);
    const RefocusImage disc = refocus_generalized(ds, make_aperture(ds, {1, 1}, 1.0), plane, ds.calibration({1, 1}));
    CHECK(virt.image == disc.image);
    CHECK(virt.coverage == disc.coverage);
    const RefocusImage virt_delta = refocus_at_virtual_view(ds, {1, 1}, 1.0, 5.0);
    CHECK(virt_delta.image == shift_and_sum(ds, make_aperture(ds, {1, 1}, 1.0), 5.0).image);
  }

  SUBCASE("virtual calibration interpolates centers") {
    const CameraCalibration mid = virtual_calibration(ds, {0.5, 1.25});
    const Vec3 expected = 0.5 * (0.75 * ds.calibration({0, 1}).center() + 0.25 * ds.calibration({0, 2}).center()) +
                          0.5 * (0.75 * ds.calibration({1, 1}).center() + 0.25 * ds.calibration({1, 2}).center());
    CHECK((mid.center() - expected).norm() < 1e-12);
    CHECK(virtual_calibration(ds, {2, 2}).center() == ds.calibration({2, 2}).center());
  }

  SUBCASE("moving by one step changes membership as enumerated") {
    const auto before = members(make_aperture(ds, {1, 1}, 1.0));
    const auto after = members(make_aperture(ds, {1, 2}, 1.0));
    std::set<std::pair<int, int>> entered;
    std::set<std::pair<int, int>> left;
    std::set_difference(after.begin(), after.end(), before.begin(), before.end(),
                        std::inserter(entered, entered.end()));
    std::set_difference(before.begin(), before.end(), after.begin(), after.end(),
                        std::inserter(left, left.end()));
    CHECK(entered == std::set<std::pair<int, int>>{{0, 2}, {2, 2}});
    CHECK(left == std::set<std::pair<int, int>>{{1, 0}, {0, 1}, {2, 1}});
  }

  SUBCASE("intermediate viewpoint renders") {
    const RefocusImage out = refocus_at_virtual_view(ds, {0.5, 1.5}, 1.0, plane, ApertureProfile::Gaussian);
    CHECK(out.covered_fraction() > 0.5);
  }

  SUBCASE("outside the hull") {
    try {
      refocus_at_virtual_view(ds, {2.5, 1}, 1.0, plane);
      FAIL("expected OutOfHull");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OutOfHull);
    }
  }
}
