#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wicsim/common.hpp"

namespace wicsim {

using FirmId = std::string;
using ProductId = std::string;
using MarketId = std::string;

struct Product {
  ProductId product_id;
  FirmId firm_id;
  bool is_auction_brand = false;
  Eigen::VectorXd characteristics;
};

// One market = one (state, month) cell. Immutable after construction/load;
// safe to share across worker threads.
struct MarketConfig {
  MarketId market_id;
  int month = 0;
  std::vector<Product> products;
  std::vector<std::string> characteristic_names;
  Eigen::VectorXd prices;                      // $/oz, aligned with products
  Eigen::VectorXd observed_shares;             // optional (size 0 when absent)
  double market_size = 0.0;                    // formula-feeding non-WIC infants
  double wic_infants = 0.0;
  double non_wic_infants = 0.0;
  std::map<std::string, double> demographics;  // median_income, women_labor, ...
  std::map<FirmId, std::map<std::string, double>> cost_shifters;  // distance, raw_milk, electricity
  std::map<FirmId, double> wholesale_prices;
  std::optional<FirmId> winner;

  int n_products() const { return static_cast<int>(products.size()); }

  // Firms in order of first appearance among products.
  std::vector<FirmId> firms() const {
    std::vector<FirmId> out;
    for (const auto& p : products)
      if (std::find(out.begin(), out.end(), p.firm_id) == out.end()) out.push_back(p.firm_id);
    return out;
  }

  std::vector<int> firm_products(const FirmId& f) const {
    std::vector<int> out;
    for (int j = 0; j < n_products(); ++j)
      if (products[static_cast<std::size_t>(j)].firm_id == f) out.push_back(j);
    return out;
  }

  int auction_brand_index(const FirmId& f) const {
    for (int j = 0; j < n_products(); ++j) {
      const auto& p = products[static_cast<std::size_t>(j)];
      if (p.firm_id == f && p.is_auction_brand) return j;
    }
    return -1;
  }

  // The winning manufacturer's auction brand (the WIC brand), if a winner is set.
  std::optional<int> wic_brand_index() const {
    if (!winner) return std::nullopt;
    int j = auction_brand_index(*winner);
    if (j < 0) return std::nullopt;
    return j;
  }

  double demographic(const std::string& key) const {
    auto it = demographics.find(key);
    require(it != demographics.end(), "market ", market_id, ": missing demographic '", key, "'");
    return it->second;
  }

  double cost_shifter(const FirmId& f, const std::string& key) const {
    auto fit = cost_shifters.find(f);
    require(fit != cost_shifters.end(), "market ", market_id, ": no cost shifters for firm ", f);
    auto it = fit->second.find(key);
    require(it != fit->second.end(), "market ", market_id, ": missing cost shifter '", key,
            "' for firm ", f);
    return it->second;
  }

  double wholesale(const FirmId& f) const {
    auto it = wholesale_prices.find(f);
    require(it != wholesale_prices.end(), "market ", market_id, ": no wholesale price for firm ",
            f);
    return it->second;
  }

  void validate() const {
    require(!products.empty(), "market ", market_id, ": no products");
    require(prices.size() == n_products(), "market ", market_id, ": ", prices.size(),
            " prices for ", n_products(), " products");
    for (int j = 0; j < n_products(); ++j)
      require(prices(j) > 0.0, "market ", market_id, ": field price must be strictly positive for product ",
              products[static_cast<std::size_t>(j)].product_id, " (got ", prices(j), ")");
    require(market_size > 0.0, "market ", market_id, ": field market_size must be > 0 (got ",
            market_size, ")");
    require(wic_infants >= 0.0, "market ", market_id, ": field wic_infants must be >= 0 (got ",
            wic_infants, ")");
    const Eigen::Index dim = products.front().characteristics.size();
    require(dim == static_cast<Eigen::Index>(characteristic_names.size()), "market ", market_id,
            ": characteristic_names size mismatch");
    for (const auto& p : products)
      require(p.characteristics.size() == dim, "market ", market_id,
              ": characteristics length differs for product ", p.product_id);
    for (const auto& f : firms()) {
      int count = 0;
      for (const auto& p : products)
        if (p.firm_id == f && p.is_auction_brand) ++count;
      require(count == 1, "market ", market_id, ": firm ", f, " must have exactly one auction brand (has ",
              count, ")");
      require(wholesale_prices.count(f) == 1, "market ", market_id,
              ": firm ", f, " has no wholesale price entry");
      require(cost_shifters.count(f) == 1, "market ", market_id, ": firm ", f,
              " has no cost shifter entry");
    }
    if (winner) {
      auto fs = firms();
      require(std::find(fs.begin(), fs.end(), *winner) != fs.end(), "market ", market_id,
              ": winner '", *winner, "' owns no product in the market");
    }
    if (observed_shares.size() > 0) {
      require(observed_shares.size() == n_products(), "market ", market_id,
              ": observed share count mismatch");
      double total = 0.0;
      for (Eigen::Index j = 0; j < observed_shares.size(); ++j) {
        require(observed_shares(j) > 0.0 && observed_shares(j) < 1.0, "market ", market_id,
                ": field share out of (0,1) for product ",
                products[static_cast<std::size_t>(j)].product_id);
        total += observed_shares(j);
      }
      require(total < 1.0, "market ", market_id, ": observed shares sum to ", total,
              ", leaving no outside share");
    }
  }
};

struct AuctionRecord {
  MarketId market_id;
  FirmId firm_id;
  double wholesale = 0.0;    // $/oz
  double rebate = 0.0;       // $/oz; may exceed wholesale
  double contract_length = 0.0;  // years
  bool won = false;

  void validate() const {
    require(wholesale > 0.0, "auction record (", market_id, ", ", firm_id,
            "): field wholesale must be > 0 (got ", wholesale, ")");
    require(rebate >= 0.0, "auction record (", market_id, ", ", firm_id,
            "): field rebate must be >= 0 (got ", rebate, ")");
  }
};

}  // namespace wicsim
