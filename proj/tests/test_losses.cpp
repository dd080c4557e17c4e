#include "support/doctest.hpp"

#include <cmath>

#include "dcm/errors.hpp"
#include "dcm/losses.hpp"
#include "support/oracles.hpp"

using namespace dcm;
using namespace dcm::loss;

namespace {

double brute_mean_abs(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = oracle::to_vector(a), y = oracle::to_vector(b);
  double s = 0;
  for (size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

torch::Tensor ramp_image(int64_t h, int64_t w, double step) {
  auto row = torch::arange(w, torch::kFloat64) * step;
  return row.expand({h, w}).clone().unsqueeze(0).expand({3, h, w}).clone().unsqueeze(0);
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("cycle loss identities and oracle") {
    auto g = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    auto h = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    CHECK(cycle_loss(g, g, h, h).item<double>() == 0.0);
    CHECK(cycle_loss(g, g + 0.1, h, h).item<double>() == doctest::Approx(0.1).epsilon(1e-12));

    auto gr = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    auto hr = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    const double expected = brute_mean_abs(g, gr) + brute_mean_abs(h, hr);
    CHECK(std::abs(cycle_loss(g, gr, h, hr).item<double>() - expected) <= 1e-6);
    // swapping target and reconstruction leaves the loss unchanged
    CHECK(cycle_loss(gr, g, h, hr).item<double>() == cycle_loss(g, gr, h, hr).item<double>());
    CHECK_THROWS_AS(cycle_loss(g, gr.narrow(3, 0, 7), h, hr), ShapeError);
  }

  TEST_CASE("least-squares adversarial losses") {
    auto ones = torch::ones({2, 1, 4, 4});
    auto zeros = torch::zeros({2, 1, 4, 4});
    CHECK(adv_loss_discriminator(ones, zeros).item<double>() == 0.0);
    CHECK(adv_loss_discriminator(zeros, ones).item<double>() == 2.0);
    CHECK(adv_loss_generator(ones).item<double>() == 0.0);
    CHECK(adv_loss_generator(zeros).item<double>() == 1.0);

    auto r = torch::randn({3, 1, 5, 5}, torch::kFloat64);
    auto f = torch::randn({3, 1, 5, 5}, torch::kFloat64);
    auto rv = oracle::to_vector(r), fv = oracle::to_vector(f);
    double d = 0, g = 0;
    for (size_t i = 0; i < rv.size(); ++i) {
      d += (rv[i] - 1) * (rv[i] - 1) / rv.size() + fv[i] * fv[i] / fv.size();
      g += (fv[i] - 1) * (fv[i] - 1) / fv.size();
    }
    CHECK(std::abs(adv_loss_discriminator(r, f).item<double>() - d) <= 1e-6);
    CHECK(std::abs(adv_loss_generator(f).item<double>() - g) <= 1e-6);

    // spatial permutation of the score maps changes nothing
    auto perm = torch::randperm(25);
    auto rp = r.reshape({3, 1, 25}).index_select(2, perm).reshape({3, 1, 5, 5});
    auto fp = f.reshape({3, 1, 25}).index_select(2, perm).reshape({3, 1, 5, 5});
    CHECK(adv_loss_discriminator(rp, fp).item<double>() == doctest::Approx(adv_loss_discriminator(r, f).item<double>()).epsilon(1e-14));
    CHECK(adv_loss_generator(fp).item<double>() == doctest::Approx(adv_loss_generator(f).item<double>()).epsilon(1e-14));

    CHECK_THROWS_AS(adv_loss_generator(torch::full({1, 1, 2, 2}, NAN)), NumericError);
  }

  TEST_CASE("grayscale weights") {
    CHECK(to_grayscale(Image::filled(3, 3, {1, 1, 1}))[1][1].item<double>() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(to_grayscale(Image::filled(3, 3, {0, 0, 0}))[0][0].item<double>() == 0.0);
    CHECK(to_grayscale(Image::filled(3, 3, {1, 0, 0}))[2][2].item<double>() == doctest::Approx(0.299).epsilon(1e-15));
    CHECK(to_grayscale(Image::filled(3, 3, {0, 1, 0}))[2][2].item<double>() == doctest::Approx(0.587).epsilon(1e-15));
    CHECK(to_grayscale(Image::filled(3, 3, {0, 0, 1}))[2][2].item<double>() == doctest::Approx(0.114).epsilon(1e-15));
  }

  TEST_CASE("Sobel kernels") {
    auto kx = sobel_kernel_x();
    auto ky = sobel_kernel_y();
    CHECK(torch::equal(kx, torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}).reshape({3, 3})));
    CHECK(torch::equal(ky, kx.t()));
  }

  TEST_CASE("Sobel gradients match the nested-loop oracle") {
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
      torch::manual_seed(100 + i);
      auto img = torch::rand({8, 8}, torch::kFloat64);
      auto [gx, gy] = sobel_gradients(img);
      oracle::Grid ox, oy;
      oracle::sobel(oracle::from_tensor(img), ox, oy);
      auto vx = oracle::to_vector(gx), vy = oracle::to_vector(gy);
      REQUIRE(vx.size() == ox.v.size());
      for (size_t k = 0; k < vx.size(); ++k) {
        worst = std::max({worst, std::abs(vx[k] - ox.v[k]), std::abs(vy[k] - oy.v[k])});
      }
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("Sobel on constants, ramps, transposes and sums") {
    auto [cx, cy] = sobel_gradients(torch::full({6, 6}, 0.4, torch::kFloat64));
    CHECK(cx.eq(0).all().item<bool>());
    CHECK(cy.eq(0).all().item<bool>());

    const double s = 0.03;
    auto ramp = (torch::arange(8, torch::kFloat64) * s).expand({8, 8}).clone();
    auto [rx, ry] = sobel_gradients(ramp);
    CHECK((rx - 8 * s).abs().max().item<double>() <= 1e-12);
    CHECK(ry.abs().max().item<double>() <= 1e-12);

    auto img = torch::rand({7, 9}, torch::kFloat64);
    auto [gx, gy] = sobel_gradients(img);
    auto [tx, ty] = sobel_gradients(img.t().contiguous());
    CHECK((tx - gy.t()).abs().max().item<double>() <= 1e-12);
    CHECK((ty - gx.t()).abs().max().item<double>() <= 1e-12);

    auto other = torch::rand({7, 9}, torch::kFloat64);
    auto [ox, oy] = sobel_gradients(other);
    auto [lx, ly] = sobel_gradients(1.5 * img - 0.7 * other);
    CHECK((lx - (1.5 * gx - 0.7 * ox)).abs().max().item<double>() <= 1e-12);
    CHECK((ly - (1.5 * gy - 0.7 * oy)).abs().max().item<double>() <= 1e-12);

    auto [bx, by] = sobel_gradients(img.reshape({1, 1, 7, 9}));
    CHECK(bx.sizes() == torch::IntArrayRef({1, 1, 5, 7}));
    CHECK(torch::equal(bx.reshape({5, 7}), gx));
  }

  TEST_CASE("contour loss values") {
    auto flat = torch::full({2, 3, 6, 6}, 0.37, torch::kFloat64);
    CHECK(contour_loss(flat).item<double>() == 0.0);

    const double s = 0.05;
    // every valid pixel has |g| = 8s, seen through the epsilon-shifted magnitude
    const double expected = std::sqrt(64 * s * s + kMagnitudeEpsilon) - std::sqrt(kMagnitudeEpsilon);
    CHECK(std::abs(contour_loss(ramp_image(6, 6, s)).item<double>() - expected) <= 1e-12);

    auto img = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    CHECK(contour_loss(img, ContourMode::Matched, img).item<double>() == 0.0);
    // against a flat reference, matched mode reduces to the literal magnitude
    auto flat8 = torch::full({2, 3, 8, 8}, 0.37, torch::kFloat64);
    CHECK(contour_loss(img, ContourMode::Matched, flat8).item<double>() ==
          doctest::Approx(contour_loss(img).item<double>()).epsilon(1e-9));
    CHECK_THROWS_AS(contour_loss(img, ContourMode::Matched), ParameterError);
  }

  TEST_CASE("contour loss is nonnegative and vanishes only on constant luminance") {
    for (int i = 0; i < 30; ++i) {
      torch::manual_seed(300 + i);
      auto img = torch::rand({1, 3, 6, 6}, torch::kFloat64);
      CHECK(contour_loss(img).item<double>() > 0.0);
    }
    auto gray = torch::full({1, 3, 5, 5}, 0.2, torch::kFloat64);
    CHECK(contour_loss(gray).item<double>() == 0.0);
  }

  TEST_CASE("contour loss gradient matches finite differences") {
    for (int i = 0; i < 5; ++i) {
      torch::manual_seed(400 + i);
      auto img = torch::rand({1, 3, 6, 6}, torch::kFloat64);
      CHECK(oracle::gradient_relative_error([](const torch::Tensor& t) { return contour_loss(t); }, img) <= 1e-4);
      auto ref = torch::rand({1, 3, 6, 6}, torch::kFloat64);
      CHECK(oracle::gradient_relative_error(
                [&](const torch::Tensor& t) { return contour_loss(t, ContourMode::Matched, ref); }, img) <= 1e-4);
    }
  }

  TEST_CASE("gradient through a constant image stays finite") {
    auto flat = torch::full({1, 3, 6, 6}, 0.5, torch::kFloat64).set_requires_grad(true);
    contour_loss(flat).backward();
    CHECK(torch::isfinite(flat.grad()).all().item<bool>());
  }

  TEST_CASE("weighted total") {
    LossBreakdown b;
    b.cyc = 1;
    b.adv_g = 1;
    b.contour = 1;
    CHECK(total_loss(b) == 2.5);
    CHECK(total_loss(LossBreakdown{}) == 0.0);
    b.contour = 0.8;
    CHECK(total_loss(b, LossWeights{0, 0, 1}) == 0.8);
    b.cyc = NAN;
    try {
      total_loss(b);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(e.component() == "cyc");
    }
  }

  TEST_CASE("contour mode names") {
    CHECK(parse_contour_mode("literal") == ContourMode::Literal);
    CHECK(parse_contour_mode("matched") == ContourMode::Matched);
    CHECK(to_string(ContourMode::Matched) == "matched");
    CHECK_THROWS_AS(parse_contour_mode("sharpen"), ParameterError);
  }
}
