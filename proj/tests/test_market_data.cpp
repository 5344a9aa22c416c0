#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <vector>

#include "wicsim/market_data.hpp"

using namespace wicsim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("wicsim_md_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<MarketConfig> two_markets() {
  SyntheticSpec spec;
  spec.n_markets = 2;
  return generate_synthetic(spec, 42);
}

void expect_equal(const std::vector<MarketConfig>& a, const std::vector<MarketConfig>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    CHECK(x.market_id == y.market_id);
    CHECK(x.month == y.month);
    CHECK(x.market_size == y.market_size);
    CHECK(x.wic_infants == y.wic_infants);
    CHECK(x.non_wic_infants == y.non_wic_infants);
    CHECK(x.demographics == y.demographics);
    CHECK(x.cost_shifters == y.cost_shifters);
    CHECK(x.wholesale_prices == y.wholesale_prices);
    CHECK(x.winner == y.winner);
    CHECK(x.characteristic_names == y.characteristic_names);
    REQUIRE(x.products.size() == y.products.size());
    for (std::size_t j = 0; j < x.products.size(); ++j) {
      CHECK(x.products[j].product_id == y.products[j].product_id);
      CHECK(x.products[j].firm_id == y.products[j].firm_id);
      CHECK(x.products[j].is_auction_brand == y.products[j].is_auction_brand);
      CHECK(x.products[j].characteristics == y.products[j].characteristics);
    }
    CHECK(x.prices == y.prices);
    CHECK(x.observed_shares == y.observed_shares);
  }
}

}  // namespace

TEST_CASE("markets round trip through csv and json") {
  TempDir tmp;
  auto markets = two_markets();

  write_markets_csv(tmp.file("m.csv"), markets);
  auto back_csv = load_markets(tmp.file("m.csv"), DataFormat::csv);
  expect_equal(markets, back_csv);

  write_markets_json(tmp.file("m.json"), markets);
  auto back_json = load_markets(tmp.file("m.json"), DataFormat::json);
  expect_equal(markets, back_json);

  SECTION("round trip preserves observed shares when present") {
    for (auto& m : markets) {
      m.observed_shares = Eigen::VectorXd::Constant(m.n_products(), 0.1);
      m.validate();
    }
    write_markets_csv(tmp.file("ms.csv"), markets);
    expect_equal(markets, load_markets(tmp.file("ms.csv"), DataFormat::csv));
    write_markets_json(tmp.file("ms.json"), markets);
    expect_equal(markets, load_markets(tmp.file("ms.json"), DataFormat::json));
  }
}

TEST_CASE("loader rejects invariant violations with named diagnostics") {
  TempDir tmp;
  auto markets = two_markets();

  SECTION("negative price names market and field") {
    markets[1].prices(0) = -1.0;
    write_markets_csv(tmp.file("bad.csv"), markets);
    try {
      load_markets(tmp.file("bad.csv"), DataFormat::csv);
      FAIL("expected an error");
    } catch (const Error& e) {
      std::string msg = e.what();
      CHECK(msg.find(markets[1].market_id) != std::string::npos);
      CHECK(msg.find("price") != std::string::npos);
    }
  }

  SECTION("winner naming an absent firm is rejected") {
    markets[0].winner = "NoSuchFirm";
    write_markets_csv(tmp.file("bad.csv"), markets);
    try {
      load_markets(tmp.file("bad.csv"), DataFormat::csv);
      FAIL("expected an error");
    } catch (const Error& e) {
      std::string msg = e.what();
      CHECK(msg.find("NoSuchFirm") != std::string::npos);
      CHECK(msg.find(markets[0].market_id) != std::string::npos);
    }
  }

  SECTION("missing column is a schema error naming the column") {
    write_markets_csv(tmp.file("m.csv"), markets);
    auto t = read_csv(tmp.file("m.csv"));
    // drop the wholesale column
    int c = t.require_col("wholesale", "m.csv");
    t.header.erase(t.header.begin() + c);
    for (auto& row : t.rows) row.erase(row.begin() + c);
    write_csv(tmp.file("nowholesale.csv"), t.header, t.rows);
    CHECK_THROWS_WITH(load_markets(tmp.file("nowholesale.csv"), DataFormat::csv),
                      Catch::Matchers::ContainsSubstring("wholesale"));
  }

  SECTION("malformed numeric field names row and field") {
    write_markets_csv(tmp.file("m.csv"), markets);
    auto t = read_csv(tmp.file("m.csv"));
    t.rows[3][static_cast<std::size_t>(t.require_col("price", "m.csv"))] = "oops";
    write_csv(tmp.file("badnum.csv"), t.header, t.rows);
    try {
      load_markets(tmp.file("badnum.csv"), DataFormat::csv);
      FAIL("expected an error");
    } catch (const Error& e) {
      std::string msg = e.what();
      CHECK(msg.find("row 5") != std::string::npos);
      CHECK(msg.find("price") != std::string::npos);
    }
  }
}

TEST_CASE("auction records round trip and validate") {
  TempDir tmp;
  std::vector<AuctionRecord> recs = {
      {"M1", "MJ", 1.053, 0.865, 3.0, false},
      {"M1", "Nestle", 0.993, 1.045, 3.0, true},  // rebate above wholesale is legal
      {"M1", "Abbott", 1.051, 0.837, 3.0, false},
  };
  write_auctions_csv(tmp.file("a.csv"), recs);
  auto back = load_auctions_csv(tmp.file("a.csv"));
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].market_id == recs[i].market_id);
    CHECK(back[i].firm_id == recs[i].firm_id);
    CHECK(back[i].wholesale == recs[i].wholesale);
    CHECK(back[i].rebate == recs[i].rebate);
    CHECK(back[i].contract_length == recs[i].contract_length);
    CHECK(back[i].won == recs[i].won);
  }
  AuctionRecord bad{"M1", "MJ", -0.5, 0.2, 3.0, false};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("synthetic generation is a pure function of spec and seed") {
  SyntheticSpec spec;
  spec.n_markets = 3;

  auto a = generate_synthetic(spec, 7);
  auto b = generate_synthetic(spec, 7);
  expect_equal(a, b);

  auto c = generate_synthetic(spec, 8);
  bool any_price_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].prices != c[i].prices) any_price_differs = true;
  CHECK(any_price_differs);

  SECTION("degenerate specs are rejected") {
    SyntheticSpec zero_products = spec;
    zero_products.products_per_firm = 0;
    CHECK_THROWS_AS(generate_synthetic(zero_products, 7), Error);
    SyntheticSpec zero_firms = spec;
    zero_firms.n_firms = 0;
    CHECK_THROWS_AS(generate_synthetic(zero_firms, 7), Error);
  }

  SECTION("generated markets satisfy all invariants") {
    for (const auto& m : a) {
      REQUIRE_NOTHROW(m.validate());
      for (const auto& f : m.firms()) CHECK(m.auction_brand_index(f) >= 0);
    }
  }
}

TEST_CASE("non_wic_sales implements the sales split") {
  CHECK_THAT(non_wic_sales(1000.0, 0.3, 50.0, 0.4, 100.0),
             Catch::Matchers::WithinAbs(1000.0 * (1.0 - 35.0 / 60.0), 1e-9));
  CHECK(non_wic_sales(1000.0, 0.25, 0.0, 0.25, 100.0) == 1000.0);
  CHECK(non_wic_sales(500.0, 0.0, 100.0, 0.0, 100.0) == 0.0);

  SECTION("ratio above 1 clamps to zero with a warning") {
    std::vector<std::string> warnings;
    set_warning_handler([&](const std::string& w) { warnings.push_back(w); });
    CHECK(non_wic_sales(800.0, 0.1, 95.0, 0.4, 100.0) == 0.0);
    REQUIRE(warnings.size() == 1);
    set_warning_handler([](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; });
  }

  SECTION("division errors") {
    CHECK_THROWS_AS(non_wic_sales(100.0, 0.3, 50.0, 1.0, 100.0), Error);
    CHECK_THROWS_AS(non_wic_sales(100.0, 0.3, 0.0, 0.3, 0.0), Error);
  }

  SECTION("linear in total sales, weakly decreasing in n_wic") {
    set_warning_handler([](const std::string&) {});  // clamp warnings expected here
    Rng rng(123);
    for (int rep = 0; rep < 50; ++rep) {
      double wic_bf = rng.uniform(0.0, 0.9);
      double all_bf = rng.uniform(0.0, 0.9);
      double n_all = rng.uniform(50.0, 500.0);
      double n_wic = rng.uniform(0.0, n_all);
      double total = rng.uniform(10.0, 1e4);
      double one = non_wic_sales(1.0, wic_bf, n_wic, all_bf, n_all);
      CHECK_THAT(non_wic_sales(total, wic_bf, n_wic, all_bf, n_all),
                 Catch::Matchers::WithinRel(total * one, 1e-12));
      double more_wic = std::min(n_all, n_wic * 1.5 + 1.0);
      CHECK(non_wic_sales(total, wic_bf, more_wic, all_bf, n_all) <=
            non_wic_sales(total, wic_bf, n_wic, all_bf, n_all) + 1e-12);
    }
    set_warning_handler([](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; });
  }
}
