#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pwrules/fragmenter.hpp"

namespace pwrules::data {

enum class AffinityType { Kd = 0, Ki = 1, IC50 = 2, EC50 = 3 };        // priority order
enum class Source { pdbbind = 0, bindingdb = 1, bindingnet = 2,        // priority order
                    chembl_binding = 3, chembl_functional = 4 };

AffinityType affinity_type_from_string(const std::string& s);
Source source_from_string(const std::string& s);
const char* to_string(AffinityType t);
const char* to_string(Source s);

struct AffinityRecord {
  std::string protein_id;
  std::string smiles;
  AffinityType type = AffinityType::Kd;
  double value_nm = 0.0;
  Source source = Source::pdbbind;
};

struct RejectedRecord {
  AffinityRecord record;
  std::string reason;
};

// deduplicated (protein, canonical ligand) measurement with activity call
struct PairRecord {
  std::string protein_id;
  std::string ligand_key;  // canonical SMILES
  AffinityType type = AffinityType::Kd;
  double value_nm = 0.0;
  Source source = Source::pdbbind;
  bool active = false;
};

struct IngestResult {
  std::vector<AffinityRecord> records;  // smiles canonicalized
  std::vector<RejectedRecord> rejects;
  long dropped_long_proteins = 0;
};

// Drops records for proteins longer than max_length; canonicalizes SMILES
// (largest component); unparseable SMILES go to rejects, unknown proteins
// are fatal.
IngestResult ingest(const std::vector<AffinityRecord>& records,
                    const std::map<std::string, std::string>& protein_sequences,
                    int max_length = 1024);

// source priority, then affinity-type priority, then median of survivors
AffinityRecord dedup(const std::vector<AffinityRecord>& group);

// groups by (protein, canonical ligand), dedups, binarizes
std::vector<PairRecord> dedup_all(const std::vector<AffinityRecord>& records);

bool binarize(double value_nm);

class LabelMatrix {
 public:
  std::vector<std::string> proteins;
  std::vector<std::string> fragment_ids;

  std::optional<int> label(const std::string& protein_id, const std::string& fragment_id) const;
  void set(const std::string& protein_id, const std::string& fragment_id, int value);
  // observed (protein, fragment, value) triples sorted by (protein, fragment)
  std::vector<std::tuple<std::string, std::string, int>> entries() const;
  size_t observed_count() const { return values_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, int> values_;
};

// Privileged = fragment in > 50% of a protein's active ligands (strict);
// 0 = occurs in some tested ligand but not privileged; absent = NA.
LabelMatrix label_matrix(const std::vector<PairRecord>& pairs, const frag::FragmentLibrary& lib,
                         const frag::FragConfig& frag_cfg = {}, int min_actives = 1);

enum class SplitMode { novel_protein, novel_ligand, novel_complex };

SplitMode split_mode_from_string(const std::string& s);
const char* to_string(SplitMode m);

struct SplitSpec {
  SplitMode mode = SplitMode::novel_protein;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  uint64_t seed = 0;
};

struct SplitResult {
  std::vector<size_t> train;
  std::vector<size_t> val;
  std::vector<size_t> test;
  std::vector<size_t> dropped;  // novel_complex cross pairs
};

SplitResult split(const std::vector<PairRecord>& pairs, const SplitSpec& spec);

}  // namespace pwrules::data
