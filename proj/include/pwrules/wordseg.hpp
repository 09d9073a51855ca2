#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pwrules::words {

struct AttentionGraph {
  struct Edge {
    int i = 0;
    int j = 0;  // i < j
    double w = 0.0;
  };
  int n = 0;
  std::vector<Edge> edges;
};

struct ProteinWord {
  std::string protein_id;
  std::vector<int> positions;  // strictly increasing, 0-based
  std::string key;             // one-letter codes in index order
  std::vector<double> embedding;
};

struct SegmentConfig {
  int min_size = 5;
  int max_size = 20;
  int max_length = 1024;
  // absent -> per-protein 90th percentile of off-diagonal symmetrized weights
  std::optional<double> edge_threshold;
  double percentile = 0.90;
};

// Symmetrizes attn and keeps edges with weight >= threshold (and > 0).
AttentionGraph build_attention_graph(const std::vector<std::vector<double>>& attn,
                                     std::optional<double> edge_threshold,
                                     double percentile = 0.90);

// Two-phase modularity maximization; node visit order is seeded, ties break
// toward the smallest community id, so output is deterministic per seed.
std::vector<std::vector<int>> louvain(const AttentionGraph& g, uint64_t seed);

double modularity(const AttentionGraph& g, const std::vector<int>& community_of);

std::vector<ProteinWord> segment(const std::string& protein_id, const std::string& sequence,
                                 const std::vector<std::vector<double>>& attn, uint64_t seed,
                                 const SegmentConfig& cfg = {});

std::vector<double> word_embedding(const ProteinWord& word,
                                   const std::vector<std::vector<double>>& residue_embeddings);

struct WordDictionary {
  std::map<std::string, long> counts;  // key -> number of distinct proteins
  long min_count = 2;
};

WordDictionary build_dictionary(const std::vector<ProteinWord>& words, long min_count = 2);

std::vector<ProteinWord> filter_words(const std::vector<ProteinWord>& words,
                                      const WordDictionary& dict);

}  // namespace pwrules::words
