#include "fspda/graph.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fspda/rng.hpp"

namespace fspda {

namespace {

std::string edge_str(std::pair<int, int> e) {
  return "(" + std::to_string(e.first) + ", " + std::to_string(e.second) + ")";
}

}  // namespace

Topology::Topology(int n, std::vector<std::pair<int, int>> edges)
    : n_(n), edges_(std::move(edges)) {
  if (n_ < 1) throw std::invalid_argument("topology: agent count must be >= 1");
  std::set<std::pair<int, int>> seen;
  for (auto& e : edges_) {
    if (e.first > e.second) std::swap(e.first, e.second);
    if (e.first == e.second)
      throw std::invalid_argument("topology: self-loop at agent " +
                                  std::to_string(e.first));
    if (e.first < 0 || e.second >= n_)
      throw std::invalid_argument("topology: edge " + edge_str(e) +
                                  " out of range for n=" + std::to_string(n_));
    if (!seen.insert(e).second)
      throw std::invalid_argument("topology: duplicate edge " + edge_str(e));
  }
  // Connectivity (BFS from agent 0).
  std::vector<std::vector<int>> adj(n_);
  for (const auto& e : edges_) {
    adj[e.first].push_back(e.second);
    adj[e.second].push_back(e.first);
  }
  std::vector<char> visited(n_, 0);
  std::queue<int> q;
  q.push(0);
  visited[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!visited[v]) {
        visited[v] = 1;
        ++reached;
        q.push(v);
      }
  }
  if (reached != n_) {
    std::string stranded;
    for (int v = 0; v < n_; ++v)
      if (!visited[v]) {
        if (!stranded.empty()) stranded += ", ";
        stranded += std::to_string(v);
        if (stranded.size() > 40) {
          stranded += ", ...";
          break;
        }
      }
    throw std::invalid_argument(
        "topology: graph is disconnected; agents {" + stranded +
        "} unreachable from agent 0");
  }
}

Topology Topology::complete(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return Topology(n, std::move(edges));
}

Topology Topology::ring(int n) {
  if (n == 1) return Topology(1, {});
  if (n == 2) return Topology(2, {{0, 1}});
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) edges.emplace_back(std::min(i, (i + 1) % n),
                                                 std::max(i, (i + 1) % n));
  std::sort(edges.begin(), edges.end());
  return Topology(n, std::move(edges));
}

Topology Topology::erdos_renyi(int n, double p, std::uint64_t seed) {
  if (p <= 0.0 || p > 1.0)
    throw std::invalid_argument("topology: er probability must be in (0, 1]");
  for (int attempt = 0; attempt < 256; ++attempt) {
    auto rng = CounterRng::keyed(seed, 0xE2, static_cast<std::uint64_t>(attempt));
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.next_double() < p) edges.emplace_back(i, j);
    try {
      return Topology(n, std::move(edges));
    } catch (const std::invalid_argument&) {
      // disconnected draw; resample
    }
  }
  throw std::runtime_error(
      "topology: failed to draw a connected Erdos-Renyi graph after 256 "
      "attempts (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");
}

Topology Topology::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("topology: cannot open file " + path);
  std::string line;
  int n = -1;
  std::vector<std::pair<int, int>> edges;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    if (n < 0) {
      if (ls >> n) continue;
      continue;  // blank/comment before header
    }
    int i, j;
    if (ls >> i >> j) {
      edges.emplace_back(i, j);
    } else if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
      throw std::runtime_error("topology: malformed line " +
                               std::to_string(line_no) + " in " + path);
    }
  }
  if (n < 0) throw std::runtime_error("topology: missing agent count in " + path);
  return Topology(n, std::move(edges));
}

IncidenceMatrix build_incidence(const Topology& topology, int block_dim) {
  if (block_dim < 1)
    throw std::invalid_argument("incidence: block dimension must be >= 1");
  IncidenceMatrix inc;
  inc.n = topology.num_agents();
  inc.block_dim = block_dim;
  inc.rows.reserve(topology.num_edges());
  for (const auto& e : topology.edges())
    inc.rows.emplace_back(e.first, e.second);  // +1 at the smaller index
  return inc;
}

}  // namespace fspda
