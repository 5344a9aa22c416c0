#pragma once

#include <json.hpp>
#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wicsim/csv.hpp"
#include "wicsim/rng.hpp"
#include "wicsim/types.hpp"

namespace wicsim {

enum class DataFormat { csv, json };

// ---------------------------------------------------------------------------
// Appendix-style sales split: removes the WIC share of total brand sales.
// non_wic = (1 - ((1-wic_bf)*n_wic) / ((1-overall_bf)*n_all)) * total
// Clamped at zero with a warning when sampling noise pushes the ratio past 1.
inline double non_wic_sales(double total_sales, double wic_bf_rate, double n_wic,
                            double overall_bf_rate, double n_all) {
  require(wic_bf_rate >= 0.0 && wic_bf_rate < 1.0, "non_wic_sales: wic_bf_rate must be in [0,1), got ",
          wic_bf_rate);
  require(overall_bf_rate >= 0.0, "non_wic_sales: overall_bf_rate must be in [0,1), got ",
          overall_bf_rate);
  require(n_wic >= 0.0, "non_wic_sales: n_wic must be >= 0, got ", n_wic);
  if (overall_bf_rate >= 1.0 || n_all <= 0.0)
    fail("non_wic_sales: denominator (1-overall_bf_rate)*n_all is zero (overall_bf_rate=",
         overall_bf_rate, ", n_all=", n_all, ")");
  require(n_wic == 0.0 || n_all >= n_wic, "non_wic_sales: n_all (", n_all, ") < n_wic (", n_wic,
          ")");
  double ratio = ((1.0 - wic_bf_rate) * n_wic) / ((1.0 - overall_bf_rate) * n_all);
  if (ratio > 1.0) {
    warn("non_wic_sales: WIC ratio ", ratio, " exceeds 1; clamping non-WIC sales to 0");
    return 0.0;
  }
  return (1.0 - ratio) * total_sales;
}

// ---------------------------------------------------------------------------
// CSV / JSON writers.  Column layout of markets.csv (one row per product):
//   market_id, month, firm_id, product_id, is_auction_brand, price, x_*...,
//   market_size, wic_infants, non_wic_infants, d_*..., z_*..., wholesale,
//   winner [, share]
// The share column is written only when observed shares are present.

namespace detail {
inline std::vector<std::string> demographic_keys(const MarketConfig& m) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : m.demographics) keys.push_back(k);
  return keys;
}
inline std::vector<std::string> shifter_keys(const MarketConfig& m) {
  std::vector<std::string> keys;
  if (!m.cost_shifters.empty())
    for (const auto& [k, v] : m.cost_shifters.begin()->second) keys.push_back(k);
  return keys;
}
}  // namespace detail

inline void write_markets_csv(const std::string& path, const std::vector<MarketConfig>& markets) {
  require(!markets.empty(), "write_markets_csv: no markets");
  const auto& m0 = markets.front();
  auto dkeys = detail::demographic_keys(m0);
  auto zkeys = detail::shifter_keys(m0);
  bool with_shares = m0.observed_shares.size() > 0;

  std::vector<std::string> header = {"market_id", "month", "firm_id", "product_id",
                                     "is_auction_brand", "price"};
  for (const auto& x : m0.characteristic_names) header.push_back("x_" + x);
  header.insert(header.end(), {"market_size", "wic_infants", "non_wic_infants"});
  for (const auto& d : dkeys) header.push_back("d_" + d);
  for (const auto& z : zkeys) header.push_back("z_" + z);
  header.push_back("wholesale");
  header.push_back("winner");
  if (with_shares) header.push_back("share");

  std::vector<std::vector<std::string>> rows;
  for (const auto& m : markets) {
    require((m.observed_shares.size() > 0) == with_shares,
            "write_markets_csv: market ", m.market_id,
            " share presence differs from the first market");
    for (int j = 0; j < m.n_products(); ++j) {
      const auto& p = m.products[static_cast<std::size_t>(j)];
      std::vector<std::string> row = {m.market_id, cat(m.month), p.firm_id, p.product_id,
                                      p.is_auction_brand ? "1" : "0", format_double(m.prices(j))};
      for (Eigen::Index k = 0; k < p.characteristics.size(); ++k)
        row.push_back(format_double(p.characteristics(k)));
      row.push_back(format_double(m.market_size));
      row.push_back(format_double(m.wic_infants));
      row.push_back(format_double(m.non_wic_infants));
      for (const auto& d : dkeys) row.push_back(format_double(m.demographics.at(d)));
      for (const auto& z : zkeys) row.push_back(format_double(m.cost_shifters.at(p.firm_id).at(z)));
      row.push_back(format_double(m.wholesale_prices.at(p.firm_id)));
      row.push_back(m.winner ? *m.winner : "");
      if (with_shares) row.push_back(format_double(m.observed_shares(j)));
      rows.push_back(std::move(row));
    }
  }
  write_csv(path, header, rows);
}

inline nlohmann::ordered_json market_to_json(const MarketConfig& m) {
  nlohmann::ordered_json jm;
  jm["market_id"] = m.market_id;
  jm["month"] = m.month;
  jm["market_size"] = m.market_size;
  jm["wic_infants"] = m.wic_infants;
  jm["non_wic_infants"] = m.non_wic_infants;
  jm["demographics"] = m.demographics;
  jm["cost_shifters"] = m.cost_shifters;
  jm["wholesale_prices"] = m.wholesale_prices;
  if (m.winner)
    jm["winner"] = *m.winner;
  else
    jm["winner"] = nullptr;
  jm["characteristic_names"] = m.characteristic_names;
  auto products = nlohmann::ordered_json::array();
  for (int j = 0; j < m.n_products(); ++j) {
    const auto& p = m.products[static_cast<std::size_t>(j)];
    nlohmann::ordered_json jp;
    jp["product_id"] = p.product_id;
    jp["firm_id"] = p.firm_id;
    jp["is_auction_brand"] = p.is_auction_brand;
    jp["characteristics"] = std::vector<double>(p.characteristics.data(),
                                                p.characteristics.data() + p.characteristics.size());
    jp["price"] = m.prices(j);
    if (m.observed_shares.size() > 0) jp["share"] = m.observed_shares(j);
    products.push_back(std::move(jp));
  }
  jm["products"] = std::move(products);
  return jm;
}

inline void write_markets_json(const std::string& path, const std::vector<MarketConfig>& markets) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : markets) arr.push_back(market_to_json(m));
  std::ofstream out(path);
  require(out.good(), "cannot open file for writing: ", path);
  out << arr.dump(2) << "\n";
  require(out.good(), "write failed: ", path);
}

inline void write_markets(const std::string& path, const std::vector<MarketConfig>& markets,
                          DataFormat format) {
  if (format == DataFormat::csv)
    write_markets_csv(path, markets);
  else
    write_markets_json(path, markets);
}

// ---------------------------------------------------------------------------
// Loaders.  Every schema or invariant violation names the offending row/field
// or market.

inline std::vector<MarketConfig> load_markets_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  int c_market = t.require_col("market_id", path);
  int c_month = t.require_col("month", path);
  int c_firm = t.require_col("firm_id", path);
  int c_product = t.require_col("product_id", path);
  int c_auction = t.require_col("is_auction_brand", path);
  int c_price = t.require_col("price", path);
  int c_msize = t.require_col("market_size", path);
  int c_wic = t.require_col("wic_infants", path);
  int c_nonwic = t.require_col("non_wic_infants", path);
  int c_wholesale = t.require_col("wholesale", path);
  int c_winner = t.require_col("winner", path);
  int c_share = t.col("share");

  std::vector<int> xcols, dcols, zcols;
  std::vector<std::string> xnames, dnames, znames;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const auto& h = t.header[i];
    if (h.rfind("x_", 0) == 0) {
      xcols.push_back(static_cast<int>(i));
      xnames.push_back(h.substr(2));
    } else if (h.rfind("d_", 0) == 0) {
      dcols.push_back(static_cast<int>(i));
      dnames.push_back(h.substr(2));
    } else if (h.rfind("z_", 0) == 0) {
      zcols.push_back(static_cast<int>(i));
      znames.push_back(h.substr(2));
    }
  }
  require(!xcols.empty(), path, ": no characteristic columns (x_*) found");

  std::vector<MarketConfig> markets;
  std::map<MarketId, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto where = cat(path, ": row ", r + 2);
    const MarketId mid = t.at(r, c_market, path);
    require(!mid.empty(), where, ": field market_id is empty");
    if (!index.count(mid)) {
      index[mid] = markets.size();
      MarketConfig m;
      m.market_id = mid;
      m.month = static_cast<int>(parse_long(t.at(r, c_month, path), where + " field month"));
      m.market_size = parse_double(t.at(r, c_msize, path), where + " field market_size");
      m.wic_infants = parse_double(t.at(r, c_wic, path), where + " field wic_infants");
      m.non_wic_infants = parse_double(t.at(r, c_nonwic, path), where + " field non_wic_infants");
      for (std::size_t k = 0; k < dcols.size(); ++k)
        m.demographics[dnames[k]] =
            parse_double(t.at(r, dcols[k], path), where + " field d_" + dnames[k]);
      std::string w = t.at(r, c_winner, path);
      if (!w.empty()) m.winner = w;
      m.characteristic_names = xnames;
      markets.push_back(std::move(m));
    }
    MarketConfig& m = markets[index[mid]];

    Product p;
    p.firm_id = t.at(r, c_firm, path);
    p.product_id = t.at(r, c_product, path);
    require(!p.firm_id.empty(), where, ": field firm_id is empty");
    require(!p.product_id.empty(), where, ": field product_id is empty");
    const std::string& ab = t.at(r, c_auction, path);
    require(ab == "0" || ab == "1", where, ": field is_auction_brand must be 0 or 1, got '", ab,
            "'");
    p.is_auction_brand = ab == "1";
    p.characteristics.resize(static_cast<Eigen::Index>(xcols.size()));
    for (std::size_t k = 0; k < xcols.size(); ++k)
      p.characteristics(static_cast<Eigen::Index>(k)) =
          parse_double(t.at(r, xcols[k], path), where + " field x_" + xnames[k]);

    double price = parse_double(t.at(r, c_price, path), where + " field price");
    double wholesale = parse_double(t.at(r, c_wholesale, path), where + " field wholesale");
    std::map<std::string, double> shifters;
    for (std::size_t k = 0; k < zcols.size(); ++k)
      shifters[znames[k]] = parse_double(t.at(r, zcols[k], path), where + " field z_" + znames[k]);

    auto fit = m.cost_shifters.find(p.firm_id);
    if (fit == m.cost_shifters.end()) {
      m.cost_shifters[p.firm_id] = shifters;
      m.wholesale_prices[p.firm_id] = wholesale;
    }

    Eigen::Index j = m.prices.size();
    m.prices.conservativeResize(j + 1);
    m.prices(j) = price;
    if (c_share >= 0) {
      m.observed_shares.conservativeResize(j + 1);
      m.observed_shares(j) =
          parse_double(t.at(r, c_share, path), where + " field share");
    }
    m.products.push_back(std::move(p));
  }
  for (auto& m : markets) m.validate();
  return markets;
}

inline std::vector<MarketConfig> load_markets_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open file: ", path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    fail(path, ": invalid JSON: ", e.what());
  }
  require(doc.is_array(), path, ": expected a top-level array of market objects");
  std::vector<MarketConfig> markets;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& jm = doc[i];
    auto where = cat(path, ": market object ", i);
    try {
      MarketConfig m;
      m.market_id = jm.at("market_id").get<std::string>();
      m.month = jm.at("month").get<int>();
      m.market_size = jm.at("market_size").get<double>();
      m.wic_infants = jm.at("wic_infants").get<double>();
      m.non_wic_infants = jm.at("non_wic_infants").get<double>();
      m.demographics = jm.at("demographics").get<std::map<std::string, double>>();
      m.cost_shifters =
          jm.at("cost_shifters").get<std::map<FirmId, std::map<std::string, double>>>();
      m.wholesale_prices = jm.at("wholesale_prices").get<std::map<FirmId, double>>();
      if (!jm.at("winner").is_null()) m.winner = jm.at("winner").get<std::string>();
      m.characteristic_names = jm.at("characteristic_names").get<std::vector<std::string>>();
      const auto& jps = jm.at("products");
      require(jps.is_array() && !jps.empty(), where, ": products must be a non-empty array");
      m.prices.resize(static_cast<Eigen::Index>(jps.size()));
      bool with_share = jps[0].contains("share");
      if (with_share) m.observed_shares.resize(static_cast<Eigen::Index>(jps.size()));
      for (std::size_t k = 0; k < jps.size(); ++k) {
        const auto& jp = jps[k];
        Product p;
        p.product_id = jp.at("product_id").get<std::string>();
        p.firm_id = jp.at("firm_id").get<std::string>();
        p.is_auction_brand = jp.at("is_auction_brand").get<bool>();
        auto chars = jp.at("characteristics").get<std::vector<double>>();
        p.characteristics = Eigen::Map<Eigen::VectorXd>(chars.data(),
                                                        static_cast<Eigen::Index>(chars.size()));
        m.prices(static_cast<Eigen::Index>(k)) = jp.at("price").get<double>();
        if (with_share)
          m.observed_shares(static_cast<Eigen::Index>(k)) = jp.at("share").get<double>();
        m.products.push_back(std::move(p));
      }
      m.validate();
      markets.push_back(std::move(m));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      fail(where, ": ", e.what());
    }
  }
  return markets;
}

inline std::vector<MarketConfig> load_markets(const std::string& path, DataFormat format) {
  return format == DataFormat::csv ? load_markets_csv(path) : load_markets_json(path);
}

// ---------------------------------------------------------------------------
// Auction records.

inline void write_auctions_csv(const std::string& path, const std::vector<AuctionRecord>& recs) {
  std::vector<std::string> header = {"market_id", "firm_id",         "wholesale",
                                     "rebate",    "contract_length", "won"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : recs)
    rows.push_back({r.market_id, r.firm_id, format_double(r.wholesale), format_double(r.rebate),
                    format_double(r.contract_length), r.won ? "1" : "0"});
  write_csv(path, header, rows);
}

inline std::vector<AuctionRecord> load_auctions_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  int c_market = t.require_col("market_id", path);
  int c_firm = t.require_col("firm_id", path);
  int c_wholesale = t.require_col("wholesale", path);
  int c_rebate = t.require_col("rebate", path);
  int c_len = t.require_col("contract_length", path);
  int c_won = t.require_col("won", path);
  std::vector<AuctionRecord> recs;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto where = cat(path, ": row ", r + 2);
    AuctionRecord rec;
    rec.market_id = t.at(r, c_market, path);
    rec.firm_id = t.at(r, c_firm, path);
    rec.wholesale = parse_double(t.at(r, c_wholesale, path), where + " field wholesale");
    rec.rebate = parse_double(t.at(r, c_rebate, path), where + " field rebate");
    rec.contract_length = parse_double(t.at(r, c_len, path), where + " field contract_length");
    const std::string& w = t.at(r, c_won, path);
    require(w == "0" || w == "1", where, ": field won must be 0 or 1, got '", w, "'");
    rec.won = w == "1";
    rec.validate();
    recs.push_back(std::move(rec));
  }
  return recs;
}

// ---------------------------------------------------------------------------
// Synthetic covariate generation.  Pure function of (spec, seed); prices here
// are provisional draws — the model-consistent world builder re-solves them.

struct SyntheticSpec {
  int n_markets = 20;
  int n_firms = 3;
  int products_per_firm = 2;
  std::vector<FirmId> firm_names = {"MJ", "Nestle", "Abbott"};

  double price_lo = 0.9, price_hi = 1.4;
  double wholesale_lo = 0.95, wholesale_hi = 1.15;
  double market_size_lo = 20.0, market_size_hi = 60.0;  // thousands of infants
  double wic_ratio_lo = 0.5, wic_ratio_hi = 1.1;        // wic_infants / market_size
  double income_lo = 40.0, income_hi = 65.0;            // $1,000
  double women_labor_lo = 0.50, women_labor_hi = 0.62;
  double high_school_lo = 0.82, high_school_hi = 0.92;
  double white_lo = 0.55, white_hi = 0.90;
  double distance_lo = 0.4, distance_hi = 1.5;  // 1,000 miles
  double raw_milk_lo = 1.1, raw_milk_hi = 1.9;  // $/gal
  double electricity_lo = 0.05, electricity_hi = 0.11;  // $/kWh
  double spitup_prob = 0.25, prebiotics_prob = 0.4;
  bool set_winner = true;
};

inline std::vector<FirmId> synthetic_firm_ids(const SyntheticSpec& spec) {
  std::vector<FirmId> firms = spec.firm_names;
  for (int f = static_cast<int>(firms.size()); f < spec.n_firms; ++f)
    firms.push_back(cat("F", f + 1));
  firms.resize(static_cast<std::size_t>(spec.n_firms));
  return firms;
}

inline std::vector<std::string> synthetic_characteristic_names(const SyntheticSpec& spec) {
  std::vector<std::string> names = {"const", "spitup", "prebiotics", "auction"};
  auto firms = synthetic_firm_ids(spec);
  for (std::size_t f = 1; f < firms.size(); ++f) names.push_back("firm_" + firms[f]);
  return names;
}

inline std::vector<MarketConfig> generate_synthetic(const SyntheticSpec& spec,
                                                    std::uint64_t seed) {
  require(spec.n_markets > 0, "generate_synthetic: n_markets must be > 0, got ", spec.n_markets);
  require(spec.n_firms > 0, "generate_synthetic: n_firms must be > 0, got ", spec.n_firms);
  require(spec.products_per_firm > 0, "generate_synthetic: products_per_firm must be > 0, got ",
          spec.products_per_firm);
  auto firms = synthetic_firm_ids(spec);
  auto xnames = synthetic_characteristic_names(spec);
  const int n_chars = static_cast<int>(xnames.size());

  std::vector<MarketConfig> markets;
  for (int mi = 0; mi < spec.n_markets; ++mi) {
    Rng rng(derive_seed(seed, "synthetic-market", static_cast<std::uint64_t>(mi)));
    MarketConfig m;
    m.market_id = cat("M", mi + 1);
    m.month = 1 + mi % 12;
    m.market_size = rng.uniform(spec.market_size_lo, spec.market_size_hi);
    m.wic_infants = m.market_size * rng.uniform(spec.wic_ratio_lo, spec.wic_ratio_hi);
    m.non_wic_infants = m.market_size * rng.uniform(1.2, 1.8);
    m.demographics["median_income"] = rng.uniform(spec.income_lo, spec.income_hi);
    m.demographics["women_labor"] = rng.uniform(spec.women_labor_lo, spec.women_labor_hi);
    m.demographics["high_school"] = rng.uniform(spec.high_school_lo, spec.high_school_hi);
    m.demographics["white"] = rng.uniform(spec.white_lo, spec.white_hi);
    m.characteristic_names = xnames;

    double raw_milk = rng.uniform(spec.raw_milk_lo, spec.raw_milk_hi);
    double electricity = rng.uniform(spec.electricity_lo, spec.electricity_hi);
    for (const auto& f : firms) {
      m.cost_shifters[f]["distance"] = rng.uniform(spec.distance_lo, spec.distance_hi);
      m.cost_shifters[f]["raw_milk"] = raw_milk;
      m.cost_shifters[f]["electricity"] = electricity;
      m.wholesale_prices[f] = rng.uniform(spec.wholesale_lo, spec.wholesale_hi);
    }

    m.prices.resize(spec.n_firms * spec.products_per_firm);
    int j = 0;
    for (std::size_t f = 0; f < firms.size(); ++f) {
      for (int k = 0; k < spec.products_per_firm; ++k, ++j) {
        Product p;
        p.firm_id = firms[f];
        p.product_id = cat(firms[f], "_", k == 0 ? "A" : cat("P", k));
        p.is_auction_brand = (k == 0);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_chars);
        x(0) = 1.0;                                             // const
        x(1) = rng.bernoulli(spec.spitup_prob) ? 1.0 : 0.0;     // spitup
        x(2) = rng.bernoulli(spec.prebiotics_prob) ? 1.0 : 0.0; // prebiotics
        x(3) = p.is_auction_brand ? 1.0 : 0.0;                  // auction-brand dummy
        if (f >= 1) x(3 + static_cast<Eigen::Index>(f)) = 1.0;  // firm dummy
        p.characteristics = std::move(x);
        m.prices(j) = rng.uniform(spec.price_lo, spec.price_hi);
        m.products.push_back(std::move(p));
      }
    }
    if (spec.set_winner)
      m.winner = firms[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(firms.size()) - 1))];
    m.validate();
    markets.push_back(std::move(m));
  }
  return markets;
}

}  // namespace wicsim
