#pragma once

// Slow reference implementations used as test oracles. They work on plain std::vector<double>
// with explicit loops and never call into torch for the arithmetic.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <torch/torch.h>

namespace oracle {

struct Grid {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}
  double& at(int ch, int y, int x) { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
};

// [C,H,W] or [1,C,H,W] tensor -> Grid
inline Grid from_tensor(torch::Tensor t) {
  if (t.dim() == 4) t = t.squeeze(0);
  if (t.dim() == 2) t = t.unsqueeze(0);
  t = t.to(torch::kFloat64).contiguous();
  Grid g(t.size(0), t.size(1), t.size(2));
  std::copy(t.data_ptr<double>(), t.data_ptr<double>() + t.numel(), g.v.begin());
  return g;
}

inline std::vector<double> to_vector(torch::Tensor t) {
  t = t.to(torch::kFloat64).contiguous();
  return {t.data_ptr<double>(), t.data_ptr<double>() + t.numel()};
}

enum class Pad { Replicate, Zero, Valid };

// Cross-correlation with weight [out, in/groups, k, k] and optional bias [out].
inline Grid conv2d(const Grid& in, const torch::Tensor& weight, const torch::Tensor& bias, int groups, Pad pad) {
  const auto w = to_vector(weight);
  const std::vector<double> b = bias.defined() ? to_vector(bias) : std::vector<double>{};
  const int out_c = weight.size(0), in_per = weight.size(1), k = weight.size(2);
  const int r = k / 2;
  const int oh = pad == Pad::Valid ? in.h - k + 1 : in.h;
  const int ow = pad == Pad::Valid ? in.w - k + 1 : in.w;
  const int out_per = out_c / groups;
  Grid out(out_c, oh, ow);
  for (int o = 0; o < out_c; ++o) {
    const int grp = o / out_per;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = b.empty() ? 0.0 : b[o];
        for (int i = 0; i < in_per; ++i) {
          const int ch = grp * in_per + i;
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              int sy = pad == Pad::Valid ? y + dy : y + dy - r;
              int sx = pad == Pad::Valid ? x + dx : x + dx - r;
              double px;
              if (pad == Pad::Zero && (sy < 0 || sy >= in.h || sx < 0 || sx >= in.w)) {
                px = 0.0;
              } else {
                sy = std::clamp(sy, 0, in.h - 1);
                sx = std::clamp(sx, 0, in.w - 1);
                px = in.at(ch, sy, sx);
              }
              acc += w[((static_cast<size_t>(o) * in_per + i) * k + dy) * k + dx] * px;
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

inline Grid conv2d(const Grid& in, const torch::nn::Conv2d& conv, Pad pad = Pad::Replicate) {
  return conv2d(in, conv->weight.detach(), conv->bias.defined() ? conv->bias.detach() : torch::Tensor(),
                static_cast<int>(conv->options.groups()), pad);
}

inline Grid map(Grid g, const std::function<double(double)>& f) {
  for (auto& v : g.v) v = f(v);
  return g;
}

inline Grid concat(const std::vector<Grid>& parts) {
  int c = 0;
  for (const auto& p : parts) c += p.c;
  Grid out(c, parts.front().h, parts.front().w);
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.v.begin(), p.v.end(), out.v.begin() + off);
    off += p.v.size();
  }
  return out;
}

inline Grid add(Grid a, const Grid& b, double sb = 1.0) {
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += sb * b.v[i];
  return a;
}

inline Grid mul(Grid a, const Grid& b) {
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] *= b.v[i];
  return a;
}

// Plain correlation with the 3x3 Sobel masks over the valid region of an [H,W] luminance grid.
inline void sobel(const Grid& gray, Grid& gx, Grid& gy) {
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  gx = Grid(1, gray.h - 2, gray.w - 2);
  gy = Grid(1, gray.h - 2, gray.w - 2);
  for (int y = 0; y < gray.h - 2; ++y) {
    for (int x = 0; x < gray.w - 2; ++x) {
      double sx = 0, sy = 0;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          sx += kx[i][j] * gray.at(0, y + i, x + j);
          sy += ky[i][j] * gray.at(0, y + i, x + j);
        }
      }
      gx.at(0, y, x) = sx;
      gy.at(0, y, x) = sy;
    }
  }
}

// Per-window SSIM on BT.601 luminance with an 11x11 Gaussian (sigma 1.5), mean over every
// window that fits fully inside the image.
inline double ssim(const Grid& a, const Grid& b) {
  auto luma = [](const Grid& g) {
    Grid y(1, g.h, g.w);
    for (int i = 0; i < g.h; ++i)
      for (int j = 0; j < g.w; ++j) y.at(0, i, j) = 0.299 * g.at(0, i, j) + 0.587 * g.at(1, i, j) + 0.114 * g.at(2, i, j);
    return y;
  };
  const Grid x = luma(a), y = luma(b);
  double wts[11][11], wsum = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) wsum += wts[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 0.0001, c2 = 0.0009;
  double total = 0;
  int n = 0;
  for (int oy = 0; oy + 11 <= x.h; ++oy) {
    for (int ox = 0; ox + 11 <= x.w; ++ox) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double w = wts[i][j] / wsum, p = x.at(0, oy + i, ox + j), q = y.at(0, oy + i, ox + j);
          mx += w * p;
          my += w * q;
          sxx += w * p * p;
          syy += w * q * q;
          sxy += w * p * q;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  }
  return total / n;
}

// Relative error between the autograd gradient of `f` at `x` and central differences,
// measured as ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
inline double gradient_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                      const torch::Tensor& x0, double h = 1e-6) {
  auto x = x0.detach().clone().to(torch::kFloat64).set_requires_grad(true);
  auto analytic = torch::autograd::grad({f(x)}, {x})[0].detach().contiguous();
  auto base = x0.detach().clone().to(torch::kFloat64).contiguous();
  std::vector<double> numeric(base.numel());
  auto* p = base.data_ptr<double>();
  torch::NoGradGuard guard;
  for (int64_t i = 0; i < base.numel(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(base).item<double>();
    p[i] = keep - h;
    const double down = f(base).item<double>();
    p[i] = keep;
    numeric[i] = (up - down) / (2 * h);
  }
  const auto a = to_vector(analytic);
  double diff = 0, na = 0, nn = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - numeric[i]) * (a[i] - numeric[i]);
    na += a[i] * a[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

}  // namespace oracle
