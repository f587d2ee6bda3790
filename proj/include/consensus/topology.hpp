#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace consensus {

// Who observes whom. observes(i, j) means agent i can read agent j's state.
// The diagonal is always false: an agent's own state is passed separately.
// Immutable once built; builders return new matrices.
class ConnectivityMatrix {
 public:
  explicit ConnectivityMatrix(std::size_t n) : n_(n), cells_(n * n, 0) {
    if (n == 0) throw std::invalid_argument("connectivity matrix needs at least one agent");
  }

  // Row-major 0/1 grid. Rejects ragged rows and self-loops.
  static ConnectivityMatrix from_rows(const std::vector<std::vector<bool>>& rows) {
    ConnectivityMatrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size())
        throw std::invalid_argument("connectivity row " + std::to_string(i) + " has " +
                                    std::to_string(rows[i].size()) + " entries, expected " +
                                    std::to_string(rows.size()));
      for (std::size_t j = 0; j < rows.size(); ++j) {
        if (i == j && rows[i][j])
          throw std::invalid_argument("connectivity diagonal entry (" + std::to_string(i) + "," +
                                      std::to_string(i) + ") must be 0");
        m.set(i, j, rows[i][j]);
      }
    }
    return m;
  }

  std::size_t size() const { return n_; }

  bool observes(std::size_t i, std::size_t j) const {
    check_index(i);
    check_index(j);
    return cells_[i * n_ + j] != 0;
  }

  // Observed agents of i in ascending index order.
  std::vector<std::size_t> neighbors(std::size_t i) const {
    check_index(i);
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n_; ++j)
      if (cells_[i * n_ + j]) out.push_back(j);
    return out;
  }

  std::size_t edge_count() const {
    std::size_t count = 0;
    for (auto c : cells_) count += c;
    return count;
  }

  bool is_undirected() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if (cells_[i * n_ + j] != cells_[j * n_ + i]) return false;
    return true;
  }

  std::vector<std::vector<bool>> rows() const {
    std::vector<std::vector<bool>> out(n_, std::vector<bool>(n_, false));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) out[i][j] = cells_[i * n_ + j] != 0;
    return out;
  }

  friend bool operator==(const ConnectivityMatrix&, const ConnectivityMatrix&) = default;

 private:
  friend ConnectivityMatrix fully_connected(std::size_t);
  friend ConnectivityMatrix leader_follower(std::size_t, std::size_t);
  friend ConnectivityMatrix chain(std::size_t);
  friend ConnectivityMatrix remove_edge(const ConnectivityMatrix&, std::size_t, std::size_t, bool);

  void check_index(std::size_t i) const {
    if (i >= n_)
      throw std::out_of_range("agent index " + std::to_string(i) + " out of range for " + std::to_string(n_) +
                              " agents");
  }
  void set(std::size_t i, std::size_t j, bool v) { cells_[i * n_ + j] = v ? 1 : 0; }

  std::size_t n_;
  std::vector<std::uint8_t> cells_;
};

inline ConnectivityMatrix fully_connected(std::size_t n) {
  ConnectivityMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.set(i, j, i != j);
  return m;
}

// Every follower observes only the leader; the leader observes nobody.
inline ConnectivityMatrix leader_follower(std::size_t n, std::size_t leader) {
  ConnectivityMatrix m(n);
  m.check_index(leader);
  for (std::size_t i = 0; i < n; ++i)
    if (i != leader) m.set(i, leader, true);
  return m;
}

// Agent k+1 observes agent k.
inline ConnectivityMatrix chain(std::size_t n) {
  ConnectivityMatrix m(n);
  for (std::size_t k = 0; k + 1 < n; ++k) m.set(k + 1, k, true);
  return m;
}

inline ConnectivityMatrix remove_edge(const ConnectivityMatrix& m, std::size_t i, std::size_t j, bool symmetric) {
  m.check_index(i);
  m.check_index(j);
  if (i == j) throw std::invalid_argument("cannot remove self-edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
  ConnectivityMatrix out = m;
  out.set(i, j, false);
  if (symmetric) out.set(j, i, false);
  return out;
}

// Lowest index r whose state reaches every agent along observation edges,
// i.e. every agent has an observation path ending at r. nullopt if none.
inline std::optional<std::size_t> find_spanning_root(const ConnectivityMatrix& m) {
  const std::size_t n = m.size();
  for (std::size_t root = 0; root < n; ++root) {
    std::vector<bool> reached(n, false);
    std::vector<std::size_t> frontier{root};
    reached[root] = true;
    std::size_t count = 1;
    while (!frontier.empty()) {
      const std::size_t src = frontier.back();
      frontier.pop_back();
      for (std::size_t k = 0; k < n; ++k) {
        if (!reached[k] && m.observes(k, src)) {
          reached[k] = true;
          ++count;
          frontier.push_back(k);
        }
      }
    }
    if (count == n) return root;
  }
  return std::nullopt;
}

}  // namespace consensus
