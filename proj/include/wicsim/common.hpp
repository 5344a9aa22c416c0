#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>

namespace wicsim {

// All recoverable failures (bad input, non-convergence, singular systems)
// surface as wicsim::Error with a human-readable diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void cat_impl(std::ostringstream&) {}
template <class T, class... Ts>
void cat_impl(std::ostringstream& os, T&& v, Ts&&... rest) {
  os << std::forward<T>(v);
  cat_impl(os, std::forward<Ts>(rest)...);
}
}  // namespace detail

template <class... Ts>
std::string cat(Ts&&... vs) {
  std::ostringstream os;
  os.precision(17);
  detail::cat_impl(os, std::forward<Ts>(vs)...);
  return os.str();
}

template <class... Ts>
[[noreturn]] void fail(Ts&&... vs) {
  throw Error(cat(std::forward<Ts>(vs)...));
}

template <class... Ts>
void require(bool cond, Ts&&... vs) {
  if (!cond) fail(std::forward<Ts>(vs)...);
}

// Warnings go to a process-wide sink so tests can capture them.
using WarningHandler = std::function<void(const std::string&)>;

inline std::mutex& warn_mutex() {
  static std::mutex m;
  return m;
}

inline WarningHandler& warning_handler() {
  static WarningHandler h = [](const std::string& msg) {
    std::cerr << "warning: " << msg << "\n";
  };
  return h;
}

inline void set_warning_handler(WarningHandler h) {
  std::lock_guard<std::mutex> lock(warn_mutex());
  warning_handler() = std::move(h);
}

template <class... Ts>
void warn(Ts&&... vs) {
  std::lock_guard<std::mutex> lock(warn_mutex());
  if (warning_handler()) warning_handler()(cat(std::forward<Ts>(vs)...));
}

}  // namespace wicsim
