#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace consensus {

// Position of one agent: a scalar on the line or a point in the plane.
class State {
 public:
  State() = default;
  explicit State(double x) : v_{x, 0.0}, dim_(1) {}
  State(double x, double y) : v_{x, y}, dim_(2) {}

  static State zero(int dimension) {
    check_dimension(dimension);
    return dimension == 1 ? State(0.0) : State(0.0, 0.0);
  }

  static void check_dimension(int dimension) {
    if (dimension != 1 && dimension != 2)
      throw std::invalid_argument("state dimension must be 1 or 2, got " + std::to_string(dimension));
  }

  int dimension() const { return static_cast<int>(dim_); }
  double x() const { return v_[0]; }
  double y() const { return v_[1]; }
  double operator[](std::size_t axis) const { return v_[axis]; }
  double& operator[](std::size_t axis) { return v_[axis]; }
  std::span<const double> components() const { return {v_.data(), dim_}; }

  bool is_finite() const {
    return std::all_of(v_.begin(), v_.begin() + dim_, [](double c) { return std::isfinite(c); });
  }

  template <typename F>
  State map(F&& f) const {
    State out = *this;
    for (std::size_t a = 0; a < dim_; ++a) out.v_[a] = f(v_[a], a);
    return out;
  }

  friend State operator+(const State& a, const State& b) { return a.map([&](double v, std::size_t i) { return v + b[i]; }); }
  friend State operator-(const State& a, const State& b) { return a.map([&](double v, std::size_t i) { return v - b[i]; }); }
  friend State operator*(double s, const State& a) { return a.map([&](double v, std::size_t) { return s * v; }); }
  friend bool operator==(const State&, const State&) = default;

 private:
  std::array<double, 2> v_{};
  std::size_t dim_ = 1;
};

inline double distance(const State& a, const State& b) {
  double sq = 0.0;
  for (int i = 0; i < a.dimension(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

inline bool lexicographic_less(const State& a, const State& b) {
  for (int i = 0; i < a.dimension(); ++i)
    if (a[i] != b[i]) return a[i] < b[i];
  return false;
}

// Closed interval applied per component.
struct Bounds {
  double lo = 0.0;
  double hi = 100.0;

  bool contains(const State& s) const {
    return std::all_of(s.components().begin(), s.components().end(), [&](double c) { return c >= lo && c <= hi; });
  }
  State clamp(const State& s) const {
    return s.map([&](double c, std::size_t) { return std::clamp(c, lo, hi); });
  }
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

// Mean that depends only on the multiset of values, not their order: every
// agent averaging the same population gets a bit-identical result.
inline double order_independent_mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of empty set");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0, carry = 0.0;  // Neumaier
  for (double v : sorted) {
    const double t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  // Divide hi and lo separately so a set of identical values yields that value exactly.
  const double n = static_cast<double>(sorted.size());
  const double hi = sum + carry;
  const double lo = carry - (hi - sum);
  const double q = hi / n;
  const double r = std::fma(-q, n, hi);
  return q + (r + lo) / n;
}

inline State mean_state(std::span<const State> states) {
  if (states.empty()) throw std::invalid_argument("mean of empty state list");
  State out = State::zero(states.front().dimension());
  std::vector<double> axis(states.size());
  for (int a = 0; a < out.dimension(); ++a) {
    for (std::size_t i = 0; i < states.size(); ++i) axis[i] = states[i][a];
    out[a] = order_independent_mean(axis);
  }
  return out;
}

// Largest per-axis (max - min) over the population.
inline double spread(std::span<const State> states) {
  if (states.empty()) return 0.0;
  double worst = 0.0;
  for (int a = 0; a < states.front().dimension(); ++a) {
    auto [lo, hi] = std::minmax_element(states.begin(), states.end(),
                                        [a](const State& l, const State& r) { return l[a] < r[a]; });
    worst = std::max(worst, (*hi)[a] - (*lo)[a]);
  }
  return worst;
}

// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf.data(), end);
}

// "20" on the line, "[20, 30]" in the plane.
inline std::string format_state(const State& s) {
  if (s.dimension() == 1) return format_number(s.x());
  return "[" + format_number(s.x()) + ", " + format_number(s.y()) + "]";
}

inline std::string format_state_list(std::span<const State> states) {
  std::string out = "[";
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (i) out += ", ";
    out += format_state(states[i]);
  }
  return out + "]";
}

// Inverse of format_state, for exactly that syntax (surrounding blanks allowed).
inline std::optional<State> parse_state_text(std::string_view text, int dimension) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  auto number = [](std::string_view s) -> std::optional<double> {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  };
  text = trim(text);
  if (dimension == 1) {
    auto v = number(text);
    return v ? std::optional<State>(State(*v)) : std::nullopt;
  }
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') return std::nullopt;
  text = text.substr(1, text.size() - 2);
  const auto comma = text.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  auto x = number(trim(text.substr(0, comma)));
  auto y = number(trim(text.substr(comma + 1)));
  if (!x || !y) return std::nullopt;
  return State(*x, *y);
}

}  // namespace consensus
