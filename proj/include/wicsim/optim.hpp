#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <utility>
#include <vector>

#include "wicsim/common.hpp"

namespace wicsim {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double fval = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Standard Nelder-Mead simplex. Deterministic; tolerances on both simplex
// size and function spread.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn,
                                    const Eigen::VectorXd& x0, double step = 0.1,
                                    double xtol = 1e-9, double ftol = 1e-12,
                                    int max_iter = 2000) {
  const int n = static_cast<int>(x0.size());
  require(n >= 1, "nelder_mead: empty parameter vector");
  std::vector<Eigen::VectorXd> pts(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) pts[i + 1](i) += (x0(i) != 0.0 ? step * std::abs(x0(i)) : step);
  for (int i = 0; i <= n; ++i) fv[i] = fn(pts[i]);

  auto order = [&]() {
    std::vector<int> idx(n + 1);
    for (int i = 0; i <= n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> p2;
    std::vector<double> f2;
    for (int i : idx) {
      p2.push_back(pts[i]);
      f2.push_back(fv[i]);
    }
    pts = std::move(p2);
    fv = std::move(f2);
  };

  NelderMeadResult res;
  int it = 0;
  for (; it < max_iter; ++it) {
    order();
    double spread = std::abs(fv[n] - fv[0]);
    double size = 0.0;
    for (int i = 1; i <= n; ++i) size = std::max(size, (pts[i] - pts[0]).lpNorm<Eigen::Infinity>());
    if (size < xtol && spread < ftol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[i];
    centroid /= static_cast<double>(n);

    Eigen::VectorXd xr = centroid + (centroid - pts[n]);
    double fr = fn(xr);
    if (fr < fv[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[n]);
      double fe = fn(xe);
      if (fe < fr) {
        pts[n] = xe;
        fv[n] = fe;
      } else {
        pts[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      pts[n] = xr;
      fv[n] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (pts[n] - centroid);
      double fc = fn(xc);
      if (fc < fv[n]) {
        pts[n] = xc;
        fv[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          fv[i] = fn(pts[i]);
        }
      }
    }
  }
  order();
  res.x = pts[0];
  res.fval = fv[0];
  res.iterations = it;
  return res;
}

// Bisection on a bracketing interval. fn(lo) and fn(hi) must differ in sign.
inline double bisect(const std::function<double(double)>& fn, double lo, double hi,
                     double flo, double fhi, double xtol = 1e-10, int max_iter = 200) {
  require(flo == 0.0 || fhi == 0.0 || (flo < 0) != (fhi < 0),
          "bisect: no sign change on [", lo, ", ", hi, "], f=(", flo, ", ", fhi, ")");
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  for (int i = 0; i < max_iter && (hi - lo) > xtol; ++i) {
    double mid = 0.5 * (lo + hi);
    double fm = fn(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  return 0.5 * (lo + hi);
}

// Scans [lo, hi] on n equal intervals and returns every bracketing subinterval
// together with the endpoint values. Used to detect multiple roots.
struct Bracket {
  double lo, hi, flo, fhi;
};

inline std::vector<Bracket> scan_sign_changes(const std::function<double(double)>& fn, double lo,
                                              double hi, int n) {
  std::vector<Bracket> out;
  double prev_x = lo;
  double prev_f = fn(lo);
  for (int i = 1; i <= n; ++i) {
    double x = lo + (hi - lo) * static_cast<double>(i) / n;
    double f = fn(x);
    if (prev_f == 0.0 || (prev_f < 0) != (f < 0)) out.push_back({prev_x, x, prev_f, f});
    prev_x = x;
    prev_f = f;
  }
  return out;
}

}  // namespace wicsim
