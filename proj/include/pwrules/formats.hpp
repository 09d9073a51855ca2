#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pwrules/attribution.hpp"
#include "pwrules/classifier.hpp"
#include "pwrules/dataset.hpp"
#include "pwrules/fragmenter.hpp"
#include "pwrules/rulebase.hpp"
#include "pwrules/wordseg.hpp"

namespace pwrules::formats {

// ---- binary containers (little-endian f32 payloads) ----

// PWAT: magic "PWAT", u32 version=1, u32 L, then L*L f32 row-major
void write_pwat(const std::string& path, const std::vector<std::vector<double>>& matrix);
std::vector<std::vector<double>> read_pwat(const std::string& path);

// PWEB: magic "PWEB", u32 version=1, u32 rows, u32 dim, rows*dim f32
void write_pweb(const std::string& path, const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> read_pweb(const std::string& path);

// PWCK: versioned model checkpoint with config block and named f32 tensors
void write_checkpoint(const std::string& path, const model::ModelState& state,
                      uint64_t config_hash);
model::ModelState read_checkpoint(const std::string& path, uint64_t* config_hash = nullptr);

// PWDB: compiled rule index for direct word-key lookup
void write_ruledb(const std::string& path, const rules::RuleDB& db, uint64_t config_hash);
rules::RuleDB read_ruledb(const std::string& path, uint64_t* config_hash = nullptr);

// sniffs PWDB magic bytes vs rules.jsonl text
rules::RuleDB read_rules_any(const std::string& path);

// ---- text formats ----

// molecules.tsv: id<TAB>smiles
struct MoleculeRow {
  std::string id;
  std::string smiles;
};
std::vector<MoleculeRow> read_molecules_tsv(const std::string& path);

// descriptor provider: id<TAB>logp<TAB>tpsa
std::map<std::string, std::pair<double, double>> read_descriptor_provider(
    const std::string& path);

// fragments.jsonl: {"fragment_id","smiles","count","freq"}
void write_fragments_jsonl(const std::string& path, const frag::FragmentLibrary& lib,
                           const std::string& header_comment);
frag::FragmentLibrary read_fragments_jsonl(const std::string& path);

// words.jsonl: {"protein_id","key","positions":[...]}; embeddings ride in a
// parallel PWEB keyed by line order
void write_words_jsonl(const std::string& path, const std::vector<words::ProteinWord>& ws,
                       const std::string& header_comment);
std::vector<words::ProteinWord> read_words_jsonl(const std::string& path);

// proteins.jsonl: {"protein_id","sequence"}
std::map<std::string, std::string> read_proteins_jsonl(const std::string& path);

// affinity.jsonl: {"protein_id","smiles","type","value_nm","source"}
std::vector<data::AffinityRecord> read_affinity_jsonl(const std::string& path);

// records.jsonl: deduplicated pair records
void write_pairs_jsonl(const std::string& path, const std::vector<data::PairRecord>& pairs,
                       const std::string& header_comment);
std::vector<data::PairRecord> read_pairs_jsonl(const std::string& path);

// labels.tsv: protein_id<TAB>fragment_id<TAB>0|1 (NA omitted)
void write_labels_tsv(const std::string& path, const data::LabelMatrix& m,
                      const std::string& header_comment);
data::LabelMatrix read_labels_tsv(const std::string& path);

// rules.jsonl: {"word","fragment_id","pred_score","attr_score","rule_score","accuracy"}
void write_rules_jsonl(const std::string& path, const std::vector<attr::RuleRecord>& rs,
                       const std::string& header_comment);
std::vector<attr::RuleRecord> read_rules_jsonl(const std::string& path);

// splits.json
void write_splits_json(const std::string& path, const data::SplitResult& r,
                       const data::SplitSpec& spec, uint64_t config_hash);
data::SplitResult read_splits_json(const std::string& path);

// external score file: molecule_id<TAB>score
std::map<std::string, double> read_score_tsv(const std::string& path);

}  // namespace pwrules::formats
