#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wicsim/demand.hpp"
#include "wicsim/ols.hpp"
#include "wicsim/optim.hpp"
#include "wicsim/parallel.hpp"

namespace wicsim {

struct InstrumentSet {
  Eigen::MatrixXd cost_shifters;   // rows: (market, product) stacked in market order
  Eigen::MatrixXd blp_sums;
  Eigen::MatrixXd hausman_prices;
  std::vector<std::string> cost_names, blp_names, hausman_names;
};

inline int total_products(const std::vector<MarketConfig>& markets) {
  int n = 0;
  for (const auto& m : markets) n += m.n_products();
  return n;
}

// Cost shifters, rival characteristic sums, and same-product other-market
// average prices. Columns with no variation are dropped (a fixed product
// line-up makes some rival sums constant).
inline InstrumentSet build_instruments(const std::vector<MarketConfig>& markets) {
  require(!markets.empty(), "build_instruments: no markets");
  const int N = total_products(markets);
  const auto& m0 = markets.front();

  std::vector<std::string> zkeys;
  if (!m0.cost_shifters.empty())
    for (const auto& [k, v] : m0.cost_shifters.begin()->second) zkeys.push_back(k);
  InstrumentSet out;
  out.cost_shifters.resize(N, static_cast<Eigen::Index>(zkeys.size()));
  for (const auto& k : zkeys) out.cost_names.push_back("iv_cost_" + k);

  const auto& xnames = m0.characteristic_names;
  std::vector<int> xcols;
  for (std::size_t c = 0; c < xnames.size(); ++c)
    if (xnames[c] != "const") xcols.push_back(static_cast<int>(c));
  out.blp_sums.resize(N, static_cast<Eigen::Index>(xcols.size()));
  for (int c : xcols) out.blp_names.push_back("iv_blp_" + xnames[static_cast<std::size_t>(c)]);

  out.hausman_prices.resize(N, 1);
  out.hausman_names = {"iv_hausman_price"};

  // same-product average price over other markets
  std::map<ProductId, std::pair<double, int>> price_totals;
  for (const auto& m : markets)
    for (int j = 0; j < m.n_products(); ++j) {
      auto& agg = price_totals[m.products[static_cast<std::size_t>(j)].product_id];
      agg.first += m.prices(j);
      agg.second += 1;
    }

  int row = 0;
  for (const auto& m : markets) {
    for (int j = 0; j < m.n_products(); ++j, ++row) {
      const auto& p = m.products[static_cast<std::size_t>(j)];
      for (std::size_t k = 0; k < zkeys.size(); ++k)
        out.cost_shifters(row, static_cast<Eigen::Index>(k)) = m.cost_shifter(p.firm_id, zkeys[k]);
      for (std::size_t k = 0; k < xcols.size(); ++k) {
        double sum = 0.0;
        for (int r = 0; r < m.n_products(); ++r) {
          const auto& q = m.products[static_cast<std::size_t>(r)];
          if (q.firm_id != p.firm_id) sum += q.characteristics(xcols[k]);
        }
        out.blp_sums(row, static_cast<Eigen::Index>(k)) = sum;
      }
      const auto& agg = price_totals.at(p.product_id);
      out.hausman_prices(row, 0) =
          agg.second > 1 ? (agg.first - m.prices(j)) / (agg.second - 1) : 0.0;
    }
  }

  auto prune = [](Eigen::MatrixXd& mat, std::vector<std::string>& names) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < mat.cols(); ++c) {
      double sd = std::sqrt((mat.col(c).array() - mat.col(c).mean()).square().mean());
      if (sd > 1e-12) keep.push_back(c);
    }
    Eigen::MatrixXd pruned(mat.rows(), static_cast<Eigen::Index>(keep.size()));
    std::vector<std::string> kept_names;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      pruned.col(static_cast<Eigen::Index>(i)) = mat.col(keep[i]);
      kept_names.push_back(names[static_cast<std::size_t>(keep[i])]);
    }
    mat = std::move(pruned);
    names = std::move(kept_names);
  };
  prune(out.cost_shifters, out.cost_names);
  prune(out.blp_sums, out.blp_names);
  prune(out.hausman_prices, out.hausman_names);
  return out;
}

struct GmmOptions {
  bool fix_nonlinear = false;   // hold (sigma, pi_income) at their init values
  bool two_step = true;         // efficient weighting re-estimation
  int n_threads = 1;
  InvertOptions invert{1e-12, 2000};
  double nm_step = 0.05;
  double nm_xtol = 1e-7;
  double nm_ftol = 1e-13;
  int nm_max_iter = 600;
  double fd_step = 1e-4;        // for the moment Jacobian
};

struct DemandEstimate {
  DemandParams params;
  std::vector<std::string> param_names;
  Eigen::VectorXd estimates;    // [beta..., alpha, delta0, delta1, sigma_p, sigma_c, pi]
  Eigen::VectorXd std_errors;
  double objective = 0.0;
  std::vector<std::pair<std::pair<MarketId, ProductId>, double>> xi_table;
  std::vector<Eigen::VectorXd> xi_by_market;
  Eigen::MatrixXd weighting;
};

namespace gmm_detail {

struct Stacked {
  Eigen::MatrixXd W;  // linear regressors [x..., -p, win, wic_brand]
  Eigen::MatrixXd Z;  // instruments [x..., win, wic_brand, excluded IVs]
  std::vector<std::string> w_names, z_names;
  std::vector<int> offsets;  // row offset per market
};

inline Stacked stack_data(const std::vector<MarketConfig>& markets, const InstrumentSet& iv) {
  const int N = total_products(markets);
  const auto& m0 = markets.front();
  const int kx = static_cast<int>(m0.characteristic_names.size());
  Stacked st;
  st.w_names.reserve(static_cast<std::size_t>(kx) + 3);
  for (const auto& x : m0.characteristic_names) st.w_names.push_back("beta_" + x);
  st.w_names.push_back("alpha");
  st.w_names.push_back("delta0");
  st.w_names.push_back("delta1");
  st.W.resize(N, kx + 3);

  int n_iv = static_cast<int>(iv.cost_shifters.cols() + iv.blp_sums.cols() +
                              iv.hausman_prices.cols());
  require(iv.cost_shifters.rows() == N || iv.cost_shifters.cols() == 0,
          "gmm: cost shifter instrument rows (", iv.cost_shifters.rows(),
          ") not conformable with stacked products (", N, ")");
  require(iv.blp_sums.rows() == N || iv.blp_sums.cols() == 0,
          "gmm: BLP instrument rows not conformable");
  require(iv.hausman_prices.rows() == N || iv.hausman_prices.cols() == 0,
          "gmm: Hausman instrument rows not conformable");
  st.Z.resize(N, kx + 2 + n_iv);
  for (const auto& x : m0.characteristic_names) st.z_names.push_back("beta_" + x);
  st.z_names.push_back("delta0");
  st.z_names.push_back("delta1");
  for (const auto& n : iv.cost_names) st.z_names.push_back(n);
  for (const auto& n : iv.blp_names) st.z_names.push_back(n);
  for (const auto& n : iv.hausman_names) st.z_names.push_back(n);

  int row = 0;
  for (const auto& m : markets) {
    st.offsets.push_back(row);
    require(m.observed_shares.size() == m.n_products(),
            "gmm: market ", m.market_id, " has no observed shares");
    for (int j = 0; j < m.n_products(); ++j, ++row) {
      const auto& p = m.products[static_cast<std::size_t>(j)];
      bool win = m.winner && p.firm_id == *m.winner;
      bool wic = win && p.is_auction_brand;
      st.W.block(row, 0, 1, kx) = p.characteristics.transpose();
      st.W(row, kx) = -m.prices(j);
      st.W(row, kx + 1) = win ? 1.0 : 0.0;
      st.W(row, kx + 2) = wic ? 1.0 : 0.0;
      st.Z.block(row, 0, 1, kx) = p.characteristics.transpose();
      st.Z(row, kx) = win ? 1.0 : 0.0;
      st.Z(row, kx + 1) = wic ? 1.0 : 0.0;
      Eigen::Index c = kx + 2;
      if (iv.cost_shifters.cols() > 0) {
        st.Z.block(row, c, 1, iv.cost_shifters.cols()) = iv.cost_shifters.row(row);
        c += iv.cost_shifters.cols();
      }
      if (iv.blp_sums.cols() > 0) {
        st.Z.block(row, c, 1, iv.blp_sums.cols()) = iv.blp_sums.row(row);
        c += iv.blp_sums.cols();
      }
      if (iv.hausman_prices.cols() > 0)
        st.Z.block(row, c, 1, iv.hausman_prices.cols()) = iv.hausman_prices.row(row);
    }
  }
  return st;
}

// One inversion pass at the given nonlinear parameters; returns stacked delta.
inline Eigen::VectorXd stacked_delta(const std::vector<MarketConfig>& markets,
                                     const DemandParams& base, const Eigen::Vector3d& nl,
                                     const std::vector<ConsumerDraws>& draws,
                                     const Stacked& st, const GmmOptions& opts,
                                     std::vector<Eigen::VectorXd>& warm) {
  DemandParams p = base;
  p.sigma = Eigen::Vector2d(std::abs(nl(0)), std::abs(nl(1)));
  p.pi_income = nl(2);
  const int M = static_cast<int>(markets.size());
  std::vector<Eigen::VectorXd> deltas(static_cast<std::size_t>(M));
  parallel_for(M, opts.n_threads, [&](int mi) {
    deltas[static_cast<std::size_t>(mi)] = invert_shares(
        markets[static_cast<std::size_t>(mi)].observed_shares, p,
        markets[static_cast<std::size_t>(mi)], markets[static_cast<std::size_t>(mi)].winner,
        draws[static_cast<std::size_t>(mi)], opts.invert, &warm[static_cast<std::size_t>(mi)]);
  });
  Eigen::VectorXd delta(st.W.rows());
  for (int mi = 0; mi < M; ++mi)
    delta.segment(st.offsets[static_cast<std::size_t>(mi)],
                  deltas[static_cast<std::size_t>(mi)].size()) =
        deltas[static_cast<std::size_t>(mi)];
  return delta;
}

// Z' v assembled as per-market contributions and tree-reduced in fixed order,
// so the objective is bitwise identical for any thread count.
inline Eigen::VectorXd zt_times(const Stacked& st, const std::vector<MarketConfig>& markets,
                                const Eigen::VectorXd& v) {
  std::vector<Eigen::VectorXd> parts;
  parts.reserve(markets.size());
  for (std::size_t mi = 0; mi < markets.size(); ++mi) {
    int off = st.offsets[mi];
    int len = markets[mi].n_products();
    parts.push_back(st.Z.middleRows(off, len).transpose() * v.segment(off, len));
  }
  return tree_reduce(std::move(parts),
                     [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a + b; });
}

struct LinearSolve {
  Eigen::VectorXd theta_lin;
  Eigen::VectorXd xi;
  Eigen::VectorXd g;  // moment vector Z'xi / N
};

inline LinearSolve concentrate_linear(const Stacked& st, const std::vector<MarketConfig>& markets,
                                      const Eigen::VectorXd& delta,
                                      const Eigen::LDLT<Eigen::MatrixXd>& a_solver,
                                      const Eigen::MatrixXd& ztw) {
  const double N = static_cast<double>(st.W.rows());
  Eigen::VectorXd ztd = zt_times(st, markets, delta);
  Eigen::MatrixXd awz = a_solver.solve(ztw);           // A^{-1} Z'W
  Eigen::MatrixXd gram = ztw.transpose() * awz;        // W'Z A^{-1} Z'W
  Eigen::LDLT<Eigen::MatrixXd> gram_solver(gram);
  require(gram_solver.info() == Eigen::Success, "gmm: linear IV system is singular");
  LinearSolve out;
  out.theta_lin = gram_solver.solve(awz.transpose() * ztd);
  out.xi = delta - st.W * out.theta_lin;
  out.g = (ztd - ztw * out.theta_lin) / N;
  return out;
}

}  // namespace gmm_detail

// Two-step GMM with the linear parameters concentrated out via IV regression
// of delta on [x, -p, win, wic_brand]; the nonlinear search runs over
// (sigma_price, sigma_const, pi_income).
inline DemandEstimate gmm_estimate(const std::vector<MarketConfig>& markets,
                                   const InstrumentSet& instruments,
                                   const std::vector<ConsumerDraws>& draws,
                                   const DemandParams& init, const GmmOptions& opts = {}) {
  using namespace gmm_detail;
  require(!markets.empty(), "gmm_estimate: no markets");
  require(draws.size() == markets.size(), "gmm_estimate: need one draw set per market (got ",
          draws.size(), " for ", markets.size(), " markets)");
  Stacked st = stack_data(markets, instruments);
  const double N = static_cast<double>(st.W.rows());
  require(st.Z.cols() >= st.W.cols(), "gmm_estimate: ", st.Z.cols(), " instrument columns cannot identify ",
          st.W.cols(), " linear parameters");

  auto dep = dependent_columns(st.Z, st.z_names);
  if (!dep.empty()) {
    std::string msg = "gmm_estimate: rank-deficient instrument matrix, dependent column(s):";
    for (const auto& d : dep) msg += " " + d;
    fail(msg);
  }

  Eigen::MatrixXd ztw = st.Z.transpose() * st.W;
  std::vector<Eigen::VectorXd> warm(markets.size());

  Eigen::Vector3d nl_init(init.sigma(0), init.sigma(1), init.pi_income);

  // weighting matrices: 2SLS first step, efficient second step
  Eigen::MatrixXd A = (st.Z.transpose() * st.Z) / N;
  Eigen::LDLT<Eigen::MatrixXd> a_solver(A);
  require(a_solver.info() == Eigen::Success, "gmm_estimate: 2SLS weighting matrix is singular");

  auto objective = [&](const Eigen::Vector3d& nl,
                       const Eigen::LDLT<Eigen::MatrixXd>& solver) -> double {
    Eigen::VectorXd delta = stacked_delta(markets, init, nl, draws, st, opts, warm);
    LinearSolve lin = concentrate_linear(st, markets, delta, solver, ztw);
    return lin.g.dot(solver.solve(lin.g));
  };

  Eigen::Vector3d nl_hat = nl_init;
  auto optimize = [&](const Eigen::LDLT<Eigen::MatrixXd>& solver, const Eigen::Vector3d& start) {
    if (opts.fix_nonlinear) return start;
    auto fn = [&](const Eigen::VectorXd& x) {
      return objective(Eigen::Vector3d(x(0), x(1), x(2)), solver);
    };
    auto res = nelder_mead(fn, start, opts.nm_step, opts.nm_xtol, opts.nm_ftol, opts.nm_max_iter);
    return Eigen::Vector3d(std::abs(res.x(0)), std::abs(res.x(1)), res.x(2));
  };

  nl_hat = optimize(a_solver, nl_init);

  Eigen::VectorXd delta = stacked_delta(markets, init, nl_hat, draws, st, opts, warm);
  LinearSolve lin = concentrate_linear(st, markets, delta, a_solver, ztw);

  if (opts.two_step) {
    // efficient weighting at the first-step estimates
    std::vector<Eigen::MatrixXd> parts;
    for (std::size_t mi = 0; mi < markets.size(); ++mi) {
      int off = st.offsets[mi];
      int len = markets[mi].n_products();
      Eigen::MatrixXd zb = st.Z.middleRows(off, len);
      parts.push_back(zb.transpose() * lin.xi.segment(off, len).array().square().matrix().asDiagonal() * zb);
    }
    Eigen::MatrixXd B =
        tree_reduce(std::move(parts),
                    [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return a + b; }) /
        N;
    Eigen::LDLT<Eigen::MatrixXd> b_solver(B);
    require(b_solver.info() == Eigen::Success,
            "gmm_estimate: efficient weighting matrix is singular");
    nl_hat = optimize(b_solver, nl_hat);
    delta = stacked_delta(markets, init, nl_hat, draws, st, opts, warm);
    lin = concentrate_linear(st, markets, delta, b_solver, ztw);
    A = B;
    a_solver.compute(A);
  }

  DemandEstimate est;
  est.weighting = A;
  est.objective = lin.g.dot(a_solver.solve(lin.g));

  const int kx = static_cast<int>(markets.front().characteristic_names.size());
  est.params = init;
  est.params.beta = lin.theta_lin.head(kx);
  est.params.alpha = lin.theta_lin(kx);
  est.params.delta0 = lin.theta_lin(kx + 1);
  est.params.delta1 = lin.theta_lin(kx + 2);
  est.params.sigma = Eigen::Vector2d(std::abs(nl_hat(0)), std::abs(nl_hat(1)));
  est.params.pi_income = nl_hat(2);

  est.param_names = st.w_names;
  est.param_names.insert(est.param_names.end(), {"sigma_price", "sigma_const", "pi_income"});
  est.estimates.resize(st.W.cols() + 3);
  est.estimates << lin.theta_lin, est.params.sigma(0), est.params.sigma(1), est.params.pi_income;

  // sandwich standard errors; the nonlinear block of the moment Jacobian is
  // computed by central differences of the inversion
  const int kW = static_cast<int>(st.W.cols());
  const int n_nl = opts.fix_nonlinear ? 0 : 3;
  Eigen::MatrixXd G(st.Z.cols(), kW + n_nl);
  G.leftCols(kW) = -(st.Z.transpose() * st.W) / N;
  for (int k = 0; k < n_nl; ++k) {
    double h = opts.fd_step * std::max(1.0, std::abs(nl_hat(k)));
    Eigen::Vector3d up = nl_hat, dn = nl_hat;
    up(k) += h;
    dn(k) -= h;
    Eigen::VectorXd d_up = stacked_delta(markets, init, up, draws, st, opts, warm);
    Eigen::VectorXd d_dn = stacked_delta(markets, init, dn, draws, st, opts, warm);
    G.col(kW + k) = zt_times(st, markets, (d_up - d_dn) / (2.0 * h)) / N;
  }
  // moment variance at the estimate
  std::vector<Eigen::MatrixXd> bparts;
  for (std::size_t mi = 0; mi < markets.size(); ++mi) {
    int off = st.offsets[mi];
    int len = markets[mi].n_products();
    Eigen::MatrixXd zb = st.Z.middleRows(off, len);
    bparts.push_back(zb.transpose() * lin.xi.segment(off, len).array().square().matrix().asDiagonal() * zb);
  }
  Eigen::MatrixXd Bvar =
      tree_reduce(std::move(bparts),
                  [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return a + b; }) /
      N;
  Eigen::MatrixXd AG = a_solver.solve(G);
  Eigen::MatrixXd bread = G.transpose() * AG;  // G'A^{-1}G
  Eigen::LDLT<Eigen::MatrixXd> bread_solver(bread);
  require(bread_solver.info() == Eigen::Success, "gmm_estimate: singular GMM bread matrix");
  Eigen::MatrixXd meat = AG.transpose() * Bvar * AG;  // G'A^{-1} B A^{-1} G
  Eigen::MatrixXd V =
      bread_solver.solve(bread_solver.solve(meat).transpose()).transpose() / N;
  est.std_errors = Eigen::VectorXd::Zero(kW + 3);
  for (int k = 0; k < kW + n_nl; ++k)
    est.std_errors(k) = std::sqrt(std::max(0.0, V(k, k)));

  // xi at the optimum, keyed by (market_id, product_id)
  est.xi_by_market.resize(markets.size());
  for (std::size_t mi = 0; mi < markets.size(); ++mi) {
    int off = st.offsets[mi];
    int len = markets[mi].n_products();
    est.xi_by_market[mi] = lin.xi.segment(off, len);
    for (int j = 0; j < len; ++j)
      est.xi_table.push_back({{markets[mi].market_id,
                               markets[mi].products[static_cast<std::size_t>(j)].product_id},
                              lin.xi(off + j)});
  }
  return est;
}

}  // namespace wicsim
