#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "wicsim/common.hpp"

namespace wicsim {

struct OlsFit {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd se;         // homoskedastic OLS standard errors
  Eigen::VectorXd residuals;
  double sigma = 0.0;         // residual standard deviation (dof-adjusted)
  double r2 = 0.0;
};

// Names the columns that a rank-revealing QR marks as linearly dependent.
inline std::vector<std::string> dependent_columns(const Eigen::MatrixXd& X,
                                                  const std::vector<std::string>& names,
                                                  double rel_threshold = 1e-10) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(rel_threshold);
  Eigen::Index rank = qr.rank();
  std::vector<std::string> dep;
  if (rank >= X.cols()) return dep;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = rank; k < X.cols(); ++k) {
    Eigen::Index orig = perm[k];
    dep.push_back(orig < static_cast<Eigen::Index>(names.size()) ? names[orig]
                                                                 : cat("col", orig));
  }
  return dep;
}

inline OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::vector<std::string>& names) {
  require(X.rows() == y.size(), "ols: X has ", X.rows(), " rows but y has ", y.size());
  require(X.rows() >= X.cols(), "ols: ", X.rows(), " observations for ", X.cols(),
          " coefficients");
  auto dep = dependent_columns(X, names);
  if (!dep.empty()) {
    std::string msg = "ols: collinear design, dependent column(s):";
    for (const auto& n : dep) msg += " " + n;
    fail(msg);
  }

  Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LLT<Eigen::MatrixXd> llt(xtx);
  require(llt.info() == Eigen::Success, "ols: normal equations not positive definite");
  OlsFit fit;
  fit.names = names;
  fit.coef = llt.solve(X.transpose() * y);
  fit.residuals = y - X * fit.coef;
  double n = static_cast<double>(X.rows());
  double k = static_cast<double>(X.cols());
  double ssr = fit.residuals.squaredNorm();
  double dof = std::max(n - k, 1.0);
  fit.sigma = std::sqrt(ssr / dof);
  Eigen::MatrixXd xtx_inv = llt.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
  fit.se = (fit.sigma * fit.sigma * xtx_inv.diagonal()).cwiseSqrt();
  double tss = (y.array() - y.mean()).square().sum();
  fit.r2 = tss > 0 ? 1.0 - ssr / tss : 1.0;
  return fit;
}

}  // namespace wicsim
