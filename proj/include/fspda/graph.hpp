#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fspda {

// Static undirected graph over n agents. Edges are stored as (i, j) with
// i < j; an edge's id is its position in the list. Construction validates
// simplicity and connectivity.
class Topology {
 public:
  Topology(int n, std::vector<std::pair<int, int>> edges);

  int num_agents() const { return n_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  std::pair<int, int> edge(int id) const { return edges_[id]; }

  static Topology complete(int n);
  static Topology ring(int n);
  // Erdos-Renyi; resamples (bounded) until connected, deterministic in seed.
  static Topology erdos_renyi(int n, double p, std::uint64_t seed);
  // Plain-text edge list: first non-comment line `n`, then `i j` pairs.
  // Lines starting with `#` are comments.
  static Topology from_file(const std::string& path);

 private:
  int n_;
  std::vector<std::pair<int, int>> edges_;
};

// Signed incidence structure of a Topology: row e for edge (i, j), i < j,
// carries +1 at column i and -1 at column j. The per-agent block dimension d
// is carried alongside; the Kronecker expansion with I_d is never formed —
// everything downstream operates blockwise per coordinate.
struct IncidenceMatrix {
  int n = 0;
  int block_dim = 1;  // d
  std::vector<std::pair<int, int>> rows;  // (plus_col, minus_col) per edge

  int num_edges() const { return static_cast<int>(rows.size()); }
};

IncidenceMatrix build_incidence(const Topology& topology, int block_dim = 1);

}  // namespace fspda
