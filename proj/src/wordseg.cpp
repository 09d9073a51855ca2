#include "pwrules/wordseg.hpp"

#include <algorithm>
#include <cmath>

#include "pwrules/errors.hpp"
#include "pwrules/util.hpp"

namespace pwrules::words {

AttentionGraph build_attention_graph(const std::vector<std::vector<double>>& attn,
                                     std::optional<double> edge_threshold, double percentile) {
  const size_t n = attn.size();
  for (const auto& row : attn)
    if (row.size() != n) throw Error(ErrorKind::Shape, "attention matrix not square");
  for (const auto& row : attn)
    for (double v : row)
      if (!std::isfinite(v) || v < 0.0)
        throw Error(ErrorKind::Value, "attention entries must be finite and non-negative");

  std::vector<double> weights;
  weights.reserve(n * (n - 1) / 2);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) weights.push_back((attn[i][j] + attn[j][i]) / 2.0);

  double thr;
  if (edge_threshold) {
    thr = *edge_threshold;
  } else if (weights.empty()) {
    thr = 0.0;
  } else {
    // nearest-rank percentile over off-diagonal symmetrized weights
    std::vector<double> sorted(weights);
    std::sort(sorted.begin(), sorted.end());
    size_t k = static_cast<size_t>(std::ceil(percentile * static_cast<double>(sorted.size())));
    if (k == 0) k = 1;
    thr = sorted[k - 1];
  }

  AttentionGraph g;
  g.n = static_cast<int>(n);
  size_t idx = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j, ++idx) {
      double w = weights[idx];
      if (w > 0.0 && w >= thr)
        g.edges.push_back({static_cast<int>(i), static_cast<int>(j), w});
    }
  return g;
}

double modularity(const AttentionGraph& g, const std::vector<int>& community_of) {
  double two_m = 0.0;
  std::vector<double> degree(g.n, 0.0);
  for (const auto& e : g.edges) {
    two_m += 2.0 * e.w;
    degree[e.i] += e.w;
    degree[e.j] += e.w;
  }
  if (two_m == 0.0) return 0.0;
  std::map<int, double> internal, total;
  for (const auto& e : g.edges)
    if (community_of[e.i] == community_of[e.j]) internal[community_of[e.i]] += e.w;
  for (int v = 0; v < g.n; ++v) total[community_of[v]] += degree[v];
  double q = 0.0;
  for (const auto& [c, tot] : total) {
    double in = internal.count(c) ? internal[c] : 0.0;
    q += 2.0 * in / two_m - (tot / two_m) * (tot / two_m);
  }
  return q;
}

namespace {

// one aggregation level: weighted adjacency with possible self-loops
struct LevelGraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // neighbor, weight
  std::vector<double> self_loop;
};

// local-move phase; returns community assignment and whether anything moved
bool local_moves(const LevelGraph& g, std::vector<int>& comm, Rng& rng) {
  const int n = g.n;
  std::vector<double> k(n, 0.0);  // weighted degree incl. self-loops (x2)
  double two_m = 0.0;
  for (int v = 0; v < n; ++v) {
    for (auto& [u, w] : g.adj[v]) {
      (void)u;
      k[v] += w;
    }
    k[v] += 2.0 * g.self_loop[v];
    two_m += k[v];
  }
  if (two_m == 0.0) return false;

  std::vector<double> sigma_tot(n, 0.0);  // by community id
  for (int v = 0; v < n; ++v) sigma_tot[comm[v]] += k[v];

  std::vector<int> order(n);
  for (int v = 0; v < n; ++v) order[v] = v;
  rng.shuffle(order);

  bool any_move = false;
  bool moved = true;
  while (moved) {
    moved = false;
    for (int v : order) {
      int old_c = comm[v];
      // weights from v to each neighboring community
      std::map<int, double> to_comm;
      to_comm[old_c] += 0.0;
      for (auto& [u, w] : g.adj[v]) to_comm[comm[u]] += w;

      sigma_tot[old_c] -= k[v];
      double base = to_comm[old_c] - k[v] * sigma_tot[old_c] / two_m;

      int best_c = old_c;
      double best_gain = 0.0;
      for (const auto& [c, w_vc] : to_comm) {
        if (c == old_c) continue;
        double gain = (w_vc - k[v] * sigma_tot[c] / two_m) - base;
        if (gain > best_gain + 1e-12 ||
            (gain > best_gain - 1e-12 && gain > 1e-12 && c < best_c)) {
          best_gain = gain;
          best_c = c;
        }
      }
      comm[v] = best_c;
      sigma_tot[best_c] += k[v];
      if (best_c != old_c) {
        moved = true;
        any_move = true;
      }
    }
  }
  return any_move;
}

LevelGraph aggregate(const LevelGraph& g, const std::vector<int>& comm, int n_comms) {
  LevelGraph out;
  out.n = n_comms;
  out.adj.resize(n_comms);
  out.self_loop.assign(n_comms, 0.0);
  std::map<std::pair<int, int>, double> agg;
  for (int v = 0; v < g.n; ++v) {
    out.self_loop[comm[v]] += g.self_loop[v];
    for (auto& [u, w] : g.adj[v]) {
      if (u < v) continue;  // each undirected edge once
      int a = comm[v], b = comm[u];
      if (a == b)
        out.self_loop[a] += w;
      else
        agg[{std::min(a, b), std::max(a, b)}] += w;
    }
  }
  for (const auto& [key, w] : agg) {
    out.adj[key.first].push_back({key.second, w});
    out.adj[key.second].push_back({key.first, w});
  }
  return out;
}

}  // namespace

std::vector<std::vector<int>> louvain(const AttentionGraph& g, uint64_t seed) {
  std::vector<int> node_comm(g.n);
  for (int v = 0; v < g.n; ++v) node_comm[v] = v;
  if (g.edges.empty()) {
    std::vector<std::vector<int>> singletons(g.n);
    for (int v = 0; v < g.n; ++v) singletons[v] = {v};
    return singletons;
  }

  LevelGraph level;
  level.n = g.n;
  level.adj.resize(g.n);
  level.self_loop.assign(g.n, 0.0);
  for (const auto& e : g.edges) {
    level.adj[e.i].push_back({e.j, e.w});
    level.adj[e.j].push_back({e.i, e.w});
  }

  Rng rng(seed);
  // node_comm maps original nodes to current level's node ids
  for (;;) {
    std::vector<int> comm(level.n);
    for (int v = 0; v < level.n; ++v) comm[v] = v;
    bool improved = local_moves(level, comm, rng);
    if (!improved) break;

    // renumber communities densely, smallest original id first
    std::map<int, int> renum;
    for (int v = 0; v < level.n; ++v)
      if (!renum.count(comm[v])) renum[comm[v]] = 0;
    int next = 0;
    for (auto& [c, id] : renum) id = next++;
    for (int v = 0; v < level.n; ++v) comm[v] = renum[comm[v]];

    for (int v = 0; v < g.n; ++v) node_comm[v] = comm[node_comm[v]];
    if (next == level.n) break;  // no aggregation happened
    level = aggregate(level, comm, next);
  }

  std::map<int, std::vector<int>> groups;
  for (int v = 0; v < g.n; ++v) groups[node_comm[v]].push_back(v);
  std::vector<std::vector<int>> out;
  out.reserve(groups.size());
  for (auto& [c, members] : groups) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ProteinWord> segment(const std::string& protein_id, const std::string& sequence,
                                 const std::vector<std::vector<double>>& attn, uint64_t seed,
                                 const SegmentConfig& cfg) {
  if (static_cast<int>(sequence.size()) > cfg.max_length)
    throw Error(ErrorKind::Length, "sequence exceeds " + std::to_string(cfg.max_length) +
                                       " residues: " + protein_id);
  if (attn.size() != sequence.size())
    throw Error(ErrorKind::Shape, "attention dimension != sequence length for " + protein_id);

  AttentionGraph g = build_attention_graph(attn, cfg.edge_threshold, cfg.percentile);
  std::vector<std::vector<int>> comms = louvain(g, seed);

  std::vector<ProteinWord> out;
  for (auto& members : comms) {
    int size = static_cast<int>(members.size());
    if (size < cfg.min_size || size > cfg.max_size) continue;  // discarded whole
    ProteinWord w;
    w.protein_id = protein_id;
    w.positions = members;  // already sorted ascending
    for (int p : members) w.key += sequence[p];
    out.push_back(std::move(w));
  }
  std::sort(out.begin(), out.end(), [](const ProteinWord& a, const ProteinWord& b) {
    return a.positions < b.positions;
  });
  return out;
}

std::vector<double> word_embedding(const ProteinWord& word,
                                   const std::vector<std::vector<double>>& residue_embeddings) {
  if (word.positions.empty()) throw Error(ErrorKind::Value, "empty word");
  for (int p : word.positions)
    if (p < 0 || p >= static_cast<int>(residue_embeddings.size()))
      throw Error(ErrorKind::Index, "word position " + std::to_string(p) + " out of range");
  const size_t dim = residue_embeddings[word.positions[0]].size();
  std::vector<double> mean(dim, 0.0);
  for (int p : word.positions) {
    if (residue_embeddings[p].size() != dim)
      throw Error(ErrorKind::Shape, "ragged residue embeddings");
    for (size_t d = 0; d < dim; ++d) mean[d] += residue_embeddings[p][d];
  }
  for (double& v : mean) v /= static_cast<double>(word.positions.size());
  return mean;
}

WordDictionary build_dictionary(const std::vector<ProteinWord>& words, long min_count) {
  if (min_count < 1) throw Error(ErrorKind::Value, "min_count must be >= 1");
  // a key counts once per protein
  std::map<std::string, std::vector<std::string>> protein_sets;
  for (const ProteinWord& w : words) protein_sets[w.key].push_back(w.protein_id);
  WordDictionary dict;
  dict.min_count = min_count;
  for (auto& [key, proteins] : protein_sets) {
    std::sort(proteins.begin(), proteins.end());
    proteins.erase(std::unique(proteins.begin(), proteins.end()), proteins.end());
    dict.counts[key] = static_cast<long>(proteins.size());
  }
  return dict;
}

std::vector<ProteinWord> filter_words(const std::vector<ProteinWord>& words,
                                      const WordDictionary& dict) {
  std::vector<ProteinWord> out;
  for (const ProteinWord& w : words) {
    auto it = dict.counts.find(w.key);
    if (it != dict.counts.end() && it->second >= dict.min_count) out.push_back(w);
  }
  return out;
}

}  // namespace pwrules::words
