#include "pwrules/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "pwrules/errors.hpp"
#include "pwrules/util.hpp"

namespace pwrules::data {

AffinityType affinity_type_from_string(const std::string& s) {
  if (s == "Kd") return AffinityType::Kd;
  if (s == "Ki") return AffinityType::Ki;
  if (s == "IC50") return AffinityType::IC50;
  if (s == "EC50") return AffinityType::EC50;
  throw Error(ErrorKind::Value, "unknown affinity type '" + s + "'");
}

Source source_from_string(const std::string& s) {
  if (s == "pdbbind") return Source::pdbbind;
  if (s == "bindingdb") return Source::bindingdb;
  if (s == "bindingnet") return Source::bindingnet;
  if (s == "chembl_binding") return Source::chembl_binding;
  if (s == "chembl_functional") return Source::chembl_functional;
  throw Error(ErrorKind::Value, "unknown source '" + s + "'");
}

const char* to_string(AffinityType t) {
  switch (t) {
    case AffinityType::Kd: return "Kd";
    case AffinityType::Ki: return "Ki";
    case AffinityType::IC50: return "IC50";
    case AffinityType::EC50: return "EC50";
  }
  return "?";
}

const char* to_string(Source s) {
  switch (s) {
    case Source::pdbbind: return "pdbbind";
    case Source::bindingdb: return "bindingdb";
    case Source::bindingnet: return "bindingnet";
    case Source::chembl_binding: return "chembl_binding";
    case Source::chembl_functional: return "chembl_functional";
  }
  return "?";
}

namespace {

// canonical key of the largest component (desalting)
std::string canonical_ligand_key(const std::string& smiles) {
  std::vector<chem::Molecule> comps = chem::parse_components(smiles);
  size_t best = 0;
  for (size_t i = 1; i < comps.size(); ++i)
    if (comps[i].heavy_atom_count() > comps[best].heavy_atom_count()) best = i;
  return chem::canonical_key(comps[best]);
}

}  // namespace

IngestResult ingest(const std::vector<AffinityRecord>& records,
                    const std::map<std::string, std::string>& protein_sequences, int max_length) {
  IngestResult out;
  for (const AffinityRecord& r : records) {
    auto it = protein_sequences.find(r.protein_id);
    if (it == protein_sequences.end())
      throw Error(ErrorKind::UnknownProtein, "no sequence for protein '" + r.protein_id + "'");
    if (static_cast<int>(it->second.size()) > max_length) {
      ++out.dropped_long_proteins;
      continue;
    }
    if (!(r.value_nm > 0.0) || !std::isfinite(r.value_nm)) {
      out.rejects.push_back({r, "non-positive affinity value"});
      continue;
    }
    try {
      AffinityRecord c = r;
      c.smiles = canonical_ligand_key(r.smiles);
      out.records.push_back(std::move(c));
    } catch (const Error& e) {
      out.rejects.push_back({r, e.what()});
    }
  }
  return out;
}

AffinityRecord dedup(const std::vector<AffinityRecord>& group) {
  if (group.empty()) throw Error(ErrorKind::Value, "empty dedup group");
  // highest-priority source present
  Source best_source = group[0].source;
  for (const auto& r : group) best_source = std::min(best_source, r.source);
  std::vector<AffinityRecord> by_source;
  for (const auto& r : group)
    if (r.source == best_source) by_source.push_back(r);
  // then highest-priority affinity type among those
  AffinityType best_type = by_source[0].type;
  for (const auto& r : by_source) best_type = std::min(best_type, r.type);
  std::vector<double> values;
  for (const auto& r : by_source)
    if (r.type == best_type) values.push_back(r.value_nm);
  std::sort(values.begin(), values.end());
  double median;
  size_t n = values.size();
  if (n % 2 == 1)
    median = values[n / 2];
  else
    median = (values[n / 2 - 1] + values[n / 2]) / 2.0;

  AffinityRecord out = by_source[0];
  out.type = best_type;
  out.value_nm = median;
  return out;
}

bool binarize(double value_nm) {
  if (!(value_nm > 0.0)) throw Error(ErrorKind::Value, "affinity must be positive");
  return value_nm < 10000.0;  // < 10 uM
}

std::vector<PairRecord> dedup_all(const std::vector<AffinityRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::vector<AffinityRecord>> groups;
  for (const AffinityRecord& r : records) groups[{r.protein_id, r.smiles}].push_back(r);
  std::vector<PairRecord> out;
  out.reserve(groups.size());
  for (const auto& [key, group] : groups) {
    AffinityRecord d = dedup(group);
    PairRecord p;
    p.protein_id = key.first;
    p.ligand_key = key.second;
    p.type = d.type;
    p.value_nm = d.value_nm;
    p.source = d.source;
    p.active = binarize(d.value_nm);
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<int> LabelMatrix::label(const std::string& protein_id,
                                      const std::string& fragment_id) const {
  auto it = values_.find({protein_id, fragment_id});
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void LabelMatrix::set(const std::string& protein_id, const std::string& fragment_id, int value) {
  if (value != 0 && value != 1) throw Error(ErrorKind::Value, "label must be 0 or 1");
  values_[{protein_id, fragment_id}] = value;
}

std::vector<std::tuple<std::string, std::string, int>> LabelMatrix::entries() const {
  std::vector<std::tuple<std::string, std::string, int>> out;
  out.reserve(values_.size());
  for (const auto& [key, v] : values_) out.emplace_back(key.first, key.second, v);
  return out;
}

LabelMatrix label_matrix(const std::vector<PairRecord>& pairs, const frag::FragmentLibrary& lib,
                         const frag::FragConfig& frag_cfg, int min_actives) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "no pairs");

  // fragment each distinct ligand once, keep only library fragments
  std::map<std::string, std::set<std::string>> ligand_frags;  // ligand key -> fragment ids
  for (const PairRecord& p : pairs) {
    if (ligand_frags.count(p.ligand_key)) continue;
    std::set<std::string> ids;
    for (const std::string& key : frag::fragment_keys(chem::parse_smiles(p.ligand_key), frag_cfg)) {
      const frag::Fragment* f = lib.by_key(key);
      if (f) ids.insert(f->fragment_id);
    }
    ligand_frags[p.ligand_key] = std::move(ids);
  }

  // group ligands per protein; a ligand tested several ways is already deduped
  std::map<std::string, std::vector<const PairRecord*>> by_protein;
  for (const PairRecord& p : pairs) by_protein[p.protein_id].push_back(&p);

  LabelMatrix m;
  for (const frag::Fragment& f : lib.fragments) m.fragment_ids.push_back(f.fragment_id);

  for (const auto& [protein, plist] : by_protein) {
    m.proteins.push_back(protein);
    std::set<std::string> observed;  // fragments in any tested ligand
    std::map<std::string, long> active_counts;
    long n_active = 0;
    for (const PairRecord* p : plist) {
      const auto& frags = ligand_frags[p->ligand_key];
      observed.insert(frags.begin(), frags.end());
      if (p->active) {
        ++n_active;
        for (const std::string& f : frags) ++active_counts[f];
      }
    }
    std::set<std::string> privileged;
    if (n_active >= std::max(1, min_actives)) {
      for (const auto& [f, c] : active_counts)
        if (static_cast<double>(c) > 0.5 * static_cast<double>(n_active)) privileged.insert(f);
    }
    for (const std::string& f : observed) m.set(protein, f, privileged.count(f) ? 1 : 0);
  }
  return m;
}

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "novel_protein") return SplitMode::novel_protein;
  if (s == "novel_ligand") return SplitMode::novel_ligand;
  if (s == "novel_complex") return SplitMode::novel_complex;
  throw Error(ErrorKind::Value, "unknown split mode '" + s + "'");
}

const char* to_string(SplitMode m) {
  switch (m) {
    case SplitMode::novel_protein: return "novel_protein";
    case SplitMode::novel_ligand: return "novel_ligand";
    case SplitMode::novel_complex: return "novel_complex";
  }
  return "?";
}

namespace {

enum class Bucket { train = 0, val = 1, test = 2 };

// 8:1:1-style entity partition: seeded shuffle of the sorted entity list
std::map<std::string, Bucket> partition_entities(std::vector<std::string> entities,
                                                 const SplitSpec& spec, uint64_t salt) {
  std::sort(entities.begin(), entities.end());
  entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
  const size_t n = entities.size();
  size_t n_val = static_cast<size_t>(std::floor(spec.val_ratio * static_cast<double>(n)));
  size_t n_test = static_cast<size_t>(std::floor(spec.test_ratio * static_cast<double>(n)));
  if (n_val < 1 || n_test < 1 || n_val + n_test >= n)
    throw Error(ErrorKind::InsufficientEntities,
                "need more distinct entities for an " + std::to_string(n) + "-entity split");
  Rng rng(spec.seed ^ salt);
  rng.shuffle(entities);
  std::map<std::string, Bucket> out;
  size_t n_train = n - n_val - n_test;
  for (size_t i = 0; i < n; ++i) {
    Bucket b = i < n_train ? Bucket::train : (i < n_train + n_val ? Bucket::val : Bucket::test);
    out[entities[i]] = b;
  }
  return out;
}

}  // namespace

SplitResult split(const std::vector<PairRecord>& pairs, const SplitSpec& spec) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "no pairs to split");
  if (std::abs(spec.train_ratio + spec.val_ratio + spec.test_ratio - 1.0) > 1e-9)
    throw Error(ErrorKind::Value, "split ratios must sum to 1");

  SplitResult out;
  auto push = [&](Bucket b, size_t i) {
    if (b == Bucket::train)
      out.train.push_back(i);
    else if (b == Bucket::val)
      out.val.push_back(i);
    else
      out.test.push_back(i);
  };

  if (spec.mode == SplitMode::novel_protein || spec.mode == SplitMode::novel_ligand) {
    std::vector<std::string> entities;
    for (const PairRecord& p : pairs)
      entities.push_back(spec.mode == SplitMode::novel_protein ? p.protein_id : p.ligand_key);
    auto buckets = partition_entities(entities, spec, 0);
    for (size_t i = 0; i < pairs.size(); ++i) {
      const std::string& e =
          spec.mode == SplitMode::novel_protein ? pairs[i].protein_id : pairs[i].ligand_key;
      push(buckets.at(e), i);
    }
    return out;
  }

  // novel_complex: proteins AND ligands split independently; a pair is kept
  // only when both entities land in the same bucket, so every val/test
  // protein and ligand is unseen in train pairs
  std::vector<std::string> prots, ligs;
  for (const PairRecord& p : pairs) {
    prots.push_back(p.protein_id);
    ligs.push_back(p.ligand_key);
  }
  auto pb = partition_entities(prots, spec, 0x70726f74ull);
  auto lb = partition_entities(ligs, spec, 0x6c696761ull);
  for (size_t i = 0; i < pairs.size(); ++i) {
    Bucket a = pb.at(pairs[i].protein_id), b = lb.at(pairs[i].ligand_key);
    if (a == b)
      push(a, i);
    else
      out.dropped.push_back(i);
  }
  return out;
}

}  // namespace pwrules::data
