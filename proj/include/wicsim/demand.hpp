#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "wicsim/rng.hpp"
#include "wicsim/types.hpp"

namespace wicsim {

// Preference parameters of the mixed-logit demand system.
//
// Indirect utility of consumer i for product j:
//   u_ij = x_j'beta - alpha_i p_j + delta0 1{j owned by winner}
//          + delta1 1{j is the winner's auction brand} + xi_j
//          + sigma_const v_i,const + eps_ij
// with individual price sensitivity
//   alpha_i = alpha - pi_income (income_i - mean income) - sigma_price v_i,price
// so a positive pi_income makes high-income consumers less price sensitive.
struct DemandParams {
  double alpha = 1.0;        // mean price sensitivity, > 0
  Eigen::VectorXd beta;      // mean tastes over characteristics (incl. const & firm dummies)
  double delta0 = 0.0;       // winner spillover, all winner brands
  double delta1 = 0.0;       // additional spillover on the WIC brand
  Eigen::Vector2d sigma = Eigen::Vector2d::Zero();  // [price, constant] heterogeneity loadings
  double pi_income = 0.0;    // price x demeaned-income interaction

  double sigma_price() const { return sigma(0); }
  double sigma_const() const { return sigma(1); }

  void validate(Eigen::Index n_chars) const {
    require(alpha > 0.0, "DemandParams: alpha must be > 0, got ", alpha);
    require(beta.size() == n_chars, "DemandParams: beta has ", beta.size(),
            " entries for ", n_chars, " characteristics");
    require(sigma(0) >= 0.0 && sigma(1) >= 0.0, "DemandParams: sigma loadings must be >= 0");
  }
};

struct IncomeDistribution {
  double meanlog = std::log(52.0);  // $1,000 units
  double sdlog = 0.25;
};

struct ConsumerDraws {
  Eigen::MatrixXd v;       // n_draws x 2 standard normals: [price, constant]
  Eigen::VectorXd income;  // n_draws
  Eigen::VectorXd weights; // n_draws, nonnegative, sums to 1

  int n_draws() const { return static_cast<int>(v.rows()); }

  double mean_income() const { return weights.dot(income); }

  void validate() const {
    require(v.cols() == 2, "ConsumerDraws: v must have 2 columns (price, constant)");
    require(income.size() == v.rows() && weights.size() == v.rows(),
            "ConsumerDraws: inconsistent draw counts");
    require((weights.array() >= 0.0).all(), "ConsumerDraws: weights must be nonnegative");
    require(std::abs(weights.sum() - 1.0) < 1e-12, "ConsumerDraws: weights sum to ",
            weights.sum(), ", expected 1 within 1e-12");
  }
};

// Pseudo-random draws by default; Halton (bases 2, 3, 5) behind the flag for
// variance reduction. Weights are uniform.
inline ConsumerDraws make_consumer_draws(int n_draws, std::uint64_t seed,
                                         const IncomeDistribution& income_dist = {},
                                         bool halton_draws = false) {
  require(n_draws > 0, "make_consumer_draws: n_draws must be > 0");
  ConsumerDraws d;
  d.v.resize(n_draws, 2);
  d.income.resize(n_draws);
  d.weights = Eigen::VectorXd::Constant(n_draws, 1.0 / n_draws);
  if (halton_draws) {
    for (int i = 0; i < n_draws; ++i) {
      std::uint64_t idx = static_cast<std::uint64_t>(i) + 10;  // skip the degenerate prefix
      d.v(i, 0) = inverse_normal_cdf(halton(idx, 2));
      d.v(i, 1) = inverse_normal_cdf(halton(idx, 3));
      d.income(i) = std::exp(income_dist.meanlog +
                             income_dist.sdlog * inverse_normal_cdf(halton(idx, 5)));
    }
  } else {
    Rng rng(seed);
    for (int i = 0; i < n_draws; ++i) {
      d.v(i, 0) = rng.normal();
      d.v(i, 1) = rng.normal();
      d.income(i) = rng.lognormal(income_dist.meanlog, income_dist.sdlog);
    }
  }
  d.validate();
  return d;
}

// Mean-utility residuals, one entry per product.
struct Xi {
  Eigen::VectorXd xi;
};

// delta0/delta1 winner terms as a per-product utility bonus. Counterfactual
// mechanisms with shared WIC provision build prorated bonuses directly.
inline Eigen::VectorXd spillover_bonus(const DemandParams& params, const MarketConfig& market,
                                       const std::optional<FirmId>& winner) {
  Eigen::VectorXd bonus = Eigen::VectorXd::Zero(market.n_products());
  if (!winner) return bonus;
  for (int j = 0; j < market.n_products(); ++j) {
    const auto& p = market.products[static_cast<std::size_t>(j)];
    if (p.firm_id == *winner) {
      bonus(j) += params.delta0;
      if (p.is_auction_brand) bonus(j) += params.delta1;
    }
  }
  return bonus;
}

// delta_j = x_j'beta - alpha p_j + spillovers + xi_j
inline Eigen::VectorXd mean_utility(const DemandParams& params, const MarketConfig& market,
                                    const Xi& xi, const std::optional<FirmId>& winner) {
  const int J = market.n_products();
  require(xi.xi.size() == J, "mean_utility: xi has ", xi.xi.size(), " entries for ", J,
          " products");
  params.validate(market.products.front().characteristics.size());
  Eigen::VectorXd delta = spillover_bonus(params, market, winner) + xi.xi;
  for (int j = 0; j < J; ++j)
    delta(j) += market.products[static_cast<std::size_t>(j)].characteristics.dot(params.beta) -
                params.alpha * market.prices(j);
  return delta;
}

// ---------------------------------------------------------------------------
// ShareEvaluator: one market bound to params/xi/bonus/draws. All share,
// derivative and surplus computations run through it. Utilities are guarded
// by max-subtraction, so extreme mean utilities produce 0/1 limits, not NaN.
class ShareEvaluator {
 public:
  ShareEvaluator(const DemandParams& params, const MarketConfig& market, const Xi& xi,
                 const Eigen::VectorXd& bonus, const ConsumerDraws& draws)
      : alpha_(params.alpha),
        market_prices_(market.prices),
        weights_(draws.weights) {
    const int J = market.n_products();
    require(xi.xi.size() == J, "ShareEvaluator: xi size mismatch (", xi.xi.size(), " vs ", J, ")");
    require(bonus.size() == J, "ShareEvaluator: bonus size mismatch");
    params.validate(market.products.front().characteristics.size());
    draws.validate();
    price_free_.resize(J);
    for (int j = 0; j < J; ++j)
      price_free_(j) = market.products[static_cast<std::size_t>(j)].characteristics.dot(params.beta) +
                       bonus(j) + xi.xi(j);
    const int n = draws.n_draws();
    double mean_inc = draws.mean_income();
    rc_price_ = params.sigma_price() * draws.v.col(0) +
                params.pi_income * (draws.income.array() - mean_inc).matrix();
    rc_const_ = params.sigma_const() * draws.v.col(1);
    alpha_i_ = Eigen::VectorXd::Constant(n, params.alpha) - rc_price_;
  }

  int n_products() const { return static_cast<int>(price_free_.size()); }
  int n_draws() const { return static_cast<int>(weights_.size()); }
  const Eigen::VectorXd& market_prices() const { return market_prices_; }
  const Eigen::VectorXd& alpha_i() const { return alpha_i_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::VectorXd& price_free_utility() const { return price_free_; }

  Eigen::VectorXd mean_delta(const Eigen::VectorXd& prices) const {
    return price_free_ - alpha_ * prices;
  }

  // mu_ij = delta_j + rc_price_i * p_j + rc_const_i   (note: -alpha_i = -alpha + rc_price)
  Eigen::MatrixXd draw_utilities(const Eigen::VectorXd& prices,
                                 const Eigen::VectorXd& delta) const {
    Eigen::MatrixXd mu = rc_price_ * prices.transpose();  // n x J
    mu.rowwise() += delta.transpose();
    mu.colwise() += rc_const_;
    return mu;
  }

  // Per-draw inside-good shares; outside share is the complement.
  static void draw_share_row(const Eigen::RowVectorXd& mu, Eigen::RowVectorXd& s) {
    double m = std::max(0.0, mu.maxCoeff());
    s = (mu.array() - m).exp().matrix();
    double denom = std::exp(-m) + s.sum();
    s /= denom;
  }

  Eigen::MatrixXd draw_shares(const Eigen::VectorXd& prices) const {
    Eigen::VectorXd delta = mean_delta(prices);
    Eigen::MatrixXd mu = draw_utilities(prices, delta);
    Eigen::MatrixXd s(mu.rows(), mu.cols());
    Eigen::RowVectorXd row(mu.cols());
    for (Eigen::Index i = 0; i < mu.rows(); ++i) {
      draw_share_row(mu.row(i), row);
      s.row(i) = row;
    }
    return s;
  }

  Eigen::VectorXd shares(const Eigen::VectorXd& prices) const {
    return draw_shares(prices).transpose() * weights_;
  }

  // jac(r, c) = d s_c / d p_r, aggregated over draws.
  void shares_and_jacobian(const Eigen::VectorXd& prices, Eigen::VectorXd& s,
                           Eigen::MatrixXd& jac) const {
    const int J = n_products();
    Eigen::MatrixXd si = draw_shares(prices);
    s = si.transpose() * weights_;
    jac = Eigen::MatrixXd::Zero(J, J);
    for (int i = 0; i < n_draws(); ++i) {
      double wa = weights_(i) * alpha_i_(i);
      Eigen::VectorXd srow = si.row(i).transpose();
      jac.noalias() += wa * (srow * srow.transpose());
      jac.diagonal() -= wa * srow;
    }
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& prices) const {
    Eigen::VectorXd s;
    Eigen::MatrixXd jac;
    shares_and_jacobian(prices, s, jac);
    return jac;
  }

  // Shares as a function of the mean utility vector, prices held at the
  // market's observed prices: the contraction-mapping kernel.
  Eigen::VectorXd shares_from_delta(const Eigen::VectorXd& delta) const {
    Eigen::MatrixXd mu = draw_utilities(market_prices_, delta);
    Eigen::RowVectorXd row(mu.cols());
    Eigen::VectorXd s = Eigen::VectorXd::Zero(delta.size());
    for (Eigen::Index i = 0; i < mu.rows(); ++i) {
      draw_share_row(mu.row(i), row);
      s += weights_(i) * row.transpose();
    }
    return s;
  }

  // Expected per-consumer surplus, E[ (1/alpha_i) log(1 + sum_j exp mu_ij) ].
  double expected_surplus(const Eigen::VectorXd& prices) const {
    Eigen::VectorXd delta = mean_delta(prices);
    Eigen::MatrixXd mu = draw_utilities(prices, delta);
    double total = 0.0;
    for (Eigen::Index i = 0; i < mu.rows(); ++i) {
      require(alpha_i_(i) > 0.0,
              "expected_surplus: individual price coefficient is nonpositive (draw ", i,
              ", alpha_i=", alpha_i_(i), ")");
      double m = std::max(0.0, mu.row(i).maxCoeff());
      double logsum = m + std::log(std::exp(-m) + (mu.row(i).array() - m).exp().sum());
      total += weights_(i) * logsum / alpha_i_(i);
    }
    return total;
  }

  // Price-free utilities for WIC consumers (price coefficient set to zero):
  // mu~_ij = price_free_j + rc_const_i on the available set.
  // Returns expected maximum utility (log-sum over taste shocks by default,
  // deterministic argmax otherwise) and the choice probabilities.
  struct WicChoice {
    double expected_max_utility = 0.0;       // per consumer, utility units
    Eigen::VectorXd choice_prob;             // over available products (sums with outside to 1)
    double outside_prob = 0.0;
  };

  WicChoice wic_choice(const std::vector<int>& available, bool deterministic) const {
    WicChoice out;
    out.choice_prob = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(available.size()));
    if (available.empty()) {
      out.expected_max_utility = 0.0;
      out.outside_prob = 1.0;
      return out;
    }
    for (int i = 0; i < n_draws(); ++i) {
      double base = rc_const_(i);
      if (deterministic) {
        // argmax over mean utilities; outside good gives 0
        double best = 0.0;
        int best_j = -1;
        for (std::size_t k = 0; k < available.size(); ++k) {
          double u = price_free_(available[k]) + base;
          if (u > best) {
            best = u;
            best_j = static_cast<int>(k);
          }
        }
        out.expected_max_utility += weights_(i) * best;
        if (best_j >= 0)
          out.choice_prob(best_j) += weights_(i);
        else
          out.outside_prob += weights_(i);
      } else {
        double m = 0.0;
        for (int j : available) m = std::max(m, price_free_(j) + base);
        double denom = std::exp(-m);
        Eigen::VectorXd e(static_cast<Eigen::Index>(available.size()));
        for (std::size_t k = 0; k < available.size(); ++k)
          e(static_cast<Eigen::Index>(k)) = std::exp(price_free_(available[k]) + base - m);
        denom += e.sum();
        out.expected_max_utility += weights_(i) * (m + std::log(denom));
        out.choice_prob += weights_(i) * e / denom;
        out.outside_prob += weights_(i) * std::exp(-m) / denom;
      }
    }
    return out;
  }

 private:
  double alpha_;
  Eigen::VectorXd price_free_;     // x'beta + bonus + xi
  Eigen::VectorXd market_prices_;
  Eigen::VectorXd rc_price_;       // sigma_p v_price + pi (income - mean)
  Eigen::VectorXd rc_const_;       // sigma_c v_const
  Eigen::VectorXd alpha_i_;        // alpha - rc_price
  Eigen::VectorXd weights_;
};

inline ShareEvaluator make_evaluator(const DemandParams& params, const MarketConfig& market,
                                     const Xi& xi, const std::optional<FirmId>& winner,
                                     const ConsumerDraws& draws) {
  return ShareEvaluator(params, market, xi, spillover_bonus(params, market, winner), draws);
}

inline Eigen::VectorXd market_shares(const DemandParams& params, const MarketConfig& market,
                                     const Xi& xi, const std::optional<FirmId>& winner,
                                     const ConsumerDraws& draws) {
  return make_evaluator(params, market, xi, winner, draws).shares(market.prices);
}

inline Xi xi_zero(int n) { return Xi{Eigen::VectorXd::Zero(n)}; }

// BLP contraction delta <- delta + log s_obs - log s(delta), sup-norm
// convergence on log shares.
struct InvertOptions {
  double tol = 1e-12;
  int max_iter = 2000;
};

inline Eigen::VectorXd invert_shares(const Eigen::VectorXd& observed_shares,
                                     const DemandParams& params, const MarketConfig& market,
                                     const std::optional<FirmId>& winner,
                                     const ConsumerDraws& draws, const InvertOptions& opts = {},
                                     Eigen::VectorXd* warm_start = nullptr) {
  const int J = market.n_products();
  require(observed_shares.size() == J, "invert_shares: share count mismatch");
  double total = 0.0;
  for (int j = 0; j < J; ++j) {
    require(observed_shares(j) > 0.0 && observed_shares(j) < 1.0,
            "invert_shares: share ", j, " = ", observed_shares(j), " outside (0,1)");
    total += observed_shares(j);
  }
  require(total < 1.0, "invert_shares: shares sum to ", total, ", no outside share left");

  ShareEvaluator eval = make_evaluator(params, market, xi_zero(J), winner, draws);
  // Inversion solves for the full mean utility delta; xi enters only through
  // delta, so a zero-xi evaluator is the right kernel here.
  Eigen::VectorXd log_obs = observed_shares.array().log();
  double outside = 1.0 - total;
  Eigen::VectorXd delta =
      (warm_start && warm_start->size() == J)
          ? *warm_start
          : (log_obs.array() - std::log(outside)).matrix().eval();
  double resid = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iter; ++it) {
    Eigen::VectorXd s = eval.shares_from_delta(delta);
    Eigen::VectorXd diff = log_obs - s.array().log().matrix();
    resid = diff.lpNorm<Eigen::Infinity>();
    if (resid < opts.tol) {
      if (warm_start) *warm_start = delta;
      return delta;
    }
    delta += diff;
  }
  fail("invert_shares: no convergence after ", opts.max_iter,
       " iterations; final log-share residual ", resid);
}

// E[i][j] = (p_j / s_i) ds_i/dp_j
inline Eigen::MatrixXd elasticity_matrix(const DemandParams& params, const MarketConfig& market,
                                         const Xi& xi, const std::optional<FirmId>& winner,
                                         const ConsumerDraws& draws) {
  ShareEvaluator eval = make_evaluator(params, market, xi, winner, draws);
  Eigen::VectorXd s;
  Eigen::MatrixXd jac;
  eval.shares_and_jacobian(market.prices, s, jac);
  const int J = market.n_products();
  Eigen::MatrixXd E(J, J);
  for (int i = 0; i < J; ++i) {
    // shares at or below the underflow floor carry no derivative information
    require(s(i) > 1e-300, "elasticity_matrix: share of product ", i, " is zero");
    for (int j = 0; j < J; ++j) E(i, j) = market.prices(j) / s(i) * jac(j, i);
  }
  return E;
}

}  // namespace wicsim
