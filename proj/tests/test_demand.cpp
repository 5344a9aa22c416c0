#include <catch2/catch_amalgamated.hpp>

#include "wicsim/demand.hpp"
#include "wicsim/market_data.hpp"

using namespace wicsim;

namespace {

// A small market: n firms x per_firm products with flat prices so closed
// forms are easy to state.
MarketConfig small_market(int n_firms = 3, int per_firm = 1, double price = 1.0) {
  SyntheticSpec spec;
  spec.n_markets = 1;
  spec.n_firms = n_firms;
  spec.products_per_firm = per_firm;
  auto m = generate_synthetic(spec, 11)[0];
  m.prices.setConstant(price);
  return m;
}

DemandParams plain_logit_params(const MarketConfig& m, double alpha) {
  DemandParams p;
  p.alpha = alpha;
  p.beta = Eigen::VectorXd::Zero(m.products[0].characteristics.size());
  return p;
}

ConsumerDraws one_draw() {
  ConsumerDraws d;
  d.v = Eigen::MatrixXd::Zero(1, 2);
  d.income = Eigen::VectorXd::Constant(1, 50.0);
  d.weights = Eigen::VectorXd::Constant(1, 1.0);
  return d;
}

DemandParams mixed_params(const MarketConfig& m) {
  DemandParams p;
  p.alpha = 2.0;
  p.beta = Eigen::VectorXd::Zero(m.products[0].characteristics.size());
  p.beta(0) = 0.5;  // const
  p.beta(3) = 1.0;  // auction dummy
  p.delta0 = 0.3;
  p.delta1 = 0.8;
  p.sigma = Eigen::Vector2d(0.4, 0.7);
  p.pi_income = 0.01;
  return p;
}

}  // namespace

TEST_CASE("mean utility winner indicators") {
  auto m = small_market(3, 2);
  Xi xi = xi_zero(m.n_products());
  auto params = plain_logit_params(m, 1.0);

  SECTION("zero spillovers make the winner irrelevant") {
    auto none = mean_utility(params, m, xi, std::nullopt);
    auto with_winner = mean_utility(params, m, xi, m.products[0].firm_id);
    CHECK((none - with_winner).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("indicator arithmetic: delta0 on winner brands, +delta1 on its auction brand") {
    DemandParams p = params;
    p.alpha = 1e-300;  // isolate the indicators (alpha must stay positive)
    p.delta0 = 1.0;
    p.delta1 = 2.0;
    FirmId winner = m.products[0].firm_id;
    auto u = mean_utility(p, m, xi, winner);
    for (int j = 0; j < m.n_products(); ++j) {
      const auto& prod = m.products[static_cast<std::size_t>(j)];
      double expected = prod.firm_id == winner ? (prod.is_auction_brand ? 3.0 : 1.0) : 0.0;
      CHECK_THAT(u(j), Catch::Matchers::WithinAbs(expected, 1e-290));
    }
  }

  SECTION("price perturbation moves mean utility by -alpha exactly") {
    auto params2 = plain_logit_params(m, 2.5);
    auto base = mean_utility(params2, m, xi, std::nullopt);
    auto m2 = m;
    m2.prices(1) += 1.0;
    auto bumped = mean_utility(params2, m2, xi, std::nullopt);
    CHECK_THAT(bumped(1) - base(1), Catch::Matchers::WithinAbs(-2.5, 1e-12));
    bumped(1) = base(1);
    CHECK((bumped - base).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("market shares: symmetry, guards and per-draw accounting") {
  SECTION("three products at mean utility zero each take a quarter") {
    auto m = small_market(3, 1, 1.0);
    DemandParams p = plain_logit_params(m, 1.0);
    Xi xi{Eigen::VectorXd::Constant(3, 1.0)};  // cancels the price term, delta = 0
    auto s = market_shares(p, m, xi, std::nullopt, one_draw());
    for (int j = 0; j < 3; ++j) CHECK_THAT(s(j), Catch::Matchers::WithinAbs(0.25, 1e-14));
  }

  SECTION("utterly dominated product: share goes to zero without overflow") {
    auto m = small_market(1, 1, 1.0);
    DemandParams p = plain_logit_params(m, 1.0);
    Xi xi{Eigen::VectorXd::Constant(1, -800.0)};
    auto s = market_shares(p, m, xi, std::nullopt, one_draw());
    CHECK(s(0) == 0.0);
    Xi xi_hi{Eigen::VectorXd::Constant(1, 800.0)};
    auto s_hi = market_shares(p, m, xi_hi, std::nullopt, one_draw());
    CHECK_THAT(s_hi(0), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(std::isfinite(s_hi(0)));
  }

  SECTION("per-draw inside+outside shares sum to one within 1e-12") {
    auto m = small_market(3, 2);
    auto p = mixed_params(m);
    Xi xi = xi_zero(m.n_products());
    auto draws = make_consumer_draws(64, 99);
    auto eval = make_evaluator(p, m, xi, m.products[0].firm_id, draws);
    auto si = eval.draw_shares(m.prices);
    Eigen::VectorXd delta = eval.mean_delta(m.prices);
    Eigen::MatrixXd mu = eval.draw_utilities(m.prices, delta);
    for (int i = 0; i < draws.n_draws(); ++i) {
      double inside = si.row(i).sum();
      CHECK(inside < 1.0);
      double maxmu = std::max(0.0, mu.row(i).maxCoeff());
      double outside =
          std::exp(-maxmu) / (std::exp(-maxmu) + (mu.row(i).array() - maxmu).exp().sum());
      CHECK_THAT(inside + outside, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
  }

  SECTION("mixed-logit shares match a 10^6-draw reference within Monte Carlo error") {
    auto m = small_market(2, 1);
    auto p = mixed_params(m);
    Xi xi = xi_zero(2);
    auto reference = market_shares(p, m, xi, std::nullopt, make_consumer_draws(1000000, 1234));
    auto estimate = market_shares(p, m, xi, std::nullopt, make_consumer_draws(200000, 777));
    // MC standard error of a share at 2e5 draws is below 0.0012
    CHECK((reference - estimate).lpNorm<Eigen::Infinity>() < 5e-3);
  }

  SECTION("plain logit: adding a constant shifts log odds exactly, shares change") {
    auto m = small_market(3, 1, 1.0);
    DemandParams p = plain_logit_params(m, 1.0);
    Xi xi{Eigen::VectorXd::LinSpaced(3, 0.2, 1.2)};
    auto d = one_draw();
    auto s = market_shares(p, m, xi, std::nullopt, d);
    double c = 0.7;
    Xi xi_shift{xi.xi.array() + c};
    auto s2 = market_shares(p, m, xi_shift, std::nullopt, d);
    CHECK((s - s2).lpNorm<Eigen::Infinity>() > 1e-3);
    for (int j = 0; j < 3; ++j) {
      double lo1 = std::log(s(j)) - std::log(1.0 - s.sum());
      double lo2 = std::log(s2(j)) - std::log(1.0 - s2.sum());
      CHECK_THAT(lo2 - lo1, Catch::Matchers::WithinAbs(c, 1e-10));
    }
  }

  SECTION("with no winner, shares are invariant to delta0/delta1") {
    auto m = small_market(3, 2);
    auto p = mixed_params(m);
    Xi xi = xi_zero(m.n_products());
    auto draws = make_consumer_draws(128, 5);
    auto s1 = market_shares(p, m, xi, std::nullopt, draws);
    p.delta0 = 9.0;
    p.delta1 = -3.0;
    auto s2 = market_shares(p, m, xi, std::nullopt, draws);
    CHECK((s1 - s2).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("share inversion") {
  SECTION("forward then invert recovers mean utilities to 1e-10") {
    Rng rng(2024);
    for (int rep = 0; rep < 10; ++rep) {
      auto m = small_market(3, 2);
      auto p = mixed_params(m);
      auto draws = make_consumer_draws(200, 31 + static_cast<std::uint64_t>(rep));
      Eigen::VectorXd delta_true(m.n_products());
      for (int j = 0; j < m.n_products(); ++j) delta_true(j) = rng.uniform(-2.0, 2.0);
      auto eval0 = make_evaluator(p, m, xi_zero(m.n_products()), std::nullopt, draws);
      Eigen::VectorXd s_obs = eval0.shares_from_delta(delta_true);
      auto delta_hat = invert_shares(s_obs, p, m, std::nullopt, draws, {1e-12, 2000});
      CHECK((delta_hat - delta_true).lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }

  SECTION("plain logit inverts in closed form") {
    auto m = small_market(3, 1, 1.0);
    DemandParams p = plain_logit_params(m, 1.5);
    Eigen::VectorXd s_obs(3);
    s_obs << 0.2, 0.3, 0.1;
    auto delta = invert_shares(s_obs, p, m, std::nullopt, one_draw());
    for (int j = 0; j < 3; ++j)
      CHECK_THAT(delta(j), Catch::Matchers::WithinAbs(std::log(s_obs(j)) - std::log(0.4), 1e-12));
  }

  SECTION("domain violations are rejected") {
    auto m = small_market(3, 1);
    DemandParams p = plain_logit_params(m, 1.0);
    Eigen::VectorXd bad(3);
    bad << 0.0, 0.3, 0.1;
    CHECK_THROWS_AS(invert_shares(bad, p, m, std::nullopt, one_draw()), Error);
    Eigen::VectorXd too_big(3);
    too_big << 0.5, 0.4, 0.2;
    CHECK_THROWS_AS(invert_shares(too_big, p, m, std::nullopt, one_draw()), Error);
  }
}

TEST_CASE("elasticities") {
  SECTION("plain logit closed forms") {
    // own: -alpha p (1-s); cross: alpha p_k s_k; three symmetric products at
    // delta = 0 give s = 0.25 each
    auto m = small_market(3, 1, 1.0);
    DemandParams p = plain_logit_params(m, 2.0);
    Xi xi{Eigen::VectorXd::Constant(3, 2.0)};  // delta = 2 - 2*1 = 0
    auto E = elasticity_matrix(p, m, xi, std::nullopt, one_draw());
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double expected = i == j ? -2.0 * 1.0 * 0.75 : 2.0 * 1.0 * 0.25;
        CHECK_THAT(E(i, j), Catch::Matchers::WithinAbs(expected, 1e-12));
      }
  }

  SECTION("mixed case matches central finite differences of market shares") {
    for (int rep = 0; rep < 5; ++rep) {
      auto m = small_market(3, 2);
      auto p = mixed_params(m);
      Xi xi = xi_zero(m.n_products());
      auto draws = make_consumer_draws(150, 400 + static_cast<std::uint64_t>(rep));
      FirmId winner = m.products[2].firm_id;
      auto E = elasticity_matrix(p, m, xi, winner, draws);
      auto eval = make_evaluator(p, m, xi, winner, draws);
      const double h = 1e-5;
      Eigen::VectorXd s = eval.shares(m.prices);
      for (int j = 0; j < m.n_products(); ++j) {
        Eigen::VectorXd up = m.prices, dn = m.prices;
        up(j) += h;
        dn(j) -= h;
        Eigen::VectorXd ds = (eval.shares(up) - eval.shares(dn)) / (2.0 * h);
        for (int i = 0; i < m.n_products(); ++i) {
          double fd = m.prices(j) / s(i) * ds(i);
          CHECK_THAT(E(i, j), Catch::Matchers::WithinRel(fd, 1e-4));
        }
      }
    }
  }

  SECTION("zero share errors") {
    auto m = small_market(2, 1);
    DemandParams p = plain_logit_params(m, 1.0);
    Xi xi{Eigen::VectorXd::Zero(2)};
    xi.xi(0) = -800.0;  // share underflows to exactly 0
    CHECK_THROWS_AS(elasticity_matrix(p, m, xi, std::nullopt, one_draw()), Error);
  }
}

TEST_CASE("consumer draws") {
  auto d = make_consumer_draws(500, 42);
  REQUIRE_NOTHROW(d.validate());
  auto d2 = make_consumer_draws(500, 42);
  CHECK(d.v == d2.v);
  CHECK(d.income == d2.income);

  SECTION("halton option produces valid weighted draws") {
    auto h = make_consumer_draws(256, 0, {}, true);
    REQUIRE_NOTHROW(h.validate());
    CHECK(std::abs(h.v.col(0).mean()) < 0.05);
  }
}
