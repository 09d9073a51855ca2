#include "pwrules/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pwrules/attribution.hpp"
#include "pwrules/chemgraph.hpp"
#include "pwrules/classifier.hpp"
#include "pwrules/dataset.hpp"
#include "pwrules/errors.hpp"
#include "pwrules/formats.hpp"
#include "pwrules/fragmenter.hpp"
#include "pwrules/rulebase.hpp"
#include "pwrules/screening.hpp"
#include "pwrules/structval.hpp"
#include "pwrules/util.hpp"
#include "pwrules/wordseg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pwrules::cli {

namespace {

struct Globals {
  uint64_t seed = 0;
  int threads = 1;
  bool dry_run = false;
  uint64_t config_hash = 0;

  std::string header() const { return "config_hash=" + to_hex(config_hash); }
};

void require_inputs(const std::vector<std::string>& paths) {
  for (const std::string& p : paths) {
    if (p.empty()) continue;
    if (!fs::exists(p)) throw Error(ErrorKind::Config, "input path does not exist: " + p);
  }
}

// deterministic chunked map: out[i] = fn(i), any thread count
template <typename Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  int t = std::min<int>(threads, static_cast<int>(n));
  for (int k = 0; k < t; ++k) {
    pool.emplace_back([&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

// ---- shared loaders ----

std::vector<chem::Molecule> load_molecules(const std::string& path,
                                           std::vector<std::string>* ids_out,
                                           long* skipped_out) {
  std::vector<chem::Molecule> mols;
  long skipped = 0;
  for (const auto& row : formats::read_molecules_tsv(path)) {
    try {
      std::vector<chem::Molecule> comps = chem::parse_components(row.smiles);
      size_t best = 0;
      for (size_t i = 1; i < comps.size(); ++i)
        if (comps[i].heavy_atom_count() > comps[best].heavy_atom_count()) best = i;
      mols.push_back(std::move(comps[best]));
      if (ids_out) ids_out->push_back(row.id);
    } catch (const Error& e) {
      ++skipped;
      std::cerr << "skipping molecule " << row.id << ": " << e.what() << "\n";
    }
  }
  if (skipped_out) *skipped_out = skipped;
  return mols;
}

// words.jsonl + optional parallel PWEB, grouped per protein in file order
struct WordSet {
  std::vector<std::string> protein_order;
  std::map<std::string, std::vector<words::ProteinWord>> by_protein;
};

WordSet load_words(const std::string& words_path, const std::string& pweb_path) {
  WordSet out;
  std::vector<words::ProteinWord> ws = formats::read_words_jsonl(words_path);
  std::vector<std::vector<double>> embs;
  if (!pweb_path.empty()) {
    embs = formats::read_pweb(pweb_path);
    if (embs.size() != ws.size())
      throw Error(ErrorKind::Shape, pweb_path + " row count does not match " + words_path);
  }
  for (size_t i = 0; i < ws.size(); ++i) {
    if (!embs.empty()) ws[i].embedding = embs[i];
    if (!out.by_protein.count(ws[i].protein_id)) out.protein_order.push_back(ws[i].protein_id);
    out.by_protein[ws[i].protein_id].push_back(ws[i]);
  }
  return out;
}

// label matrix joined with word embeddings into classifier samples
std::vector<model::Sample> build_samples(const data::LabelMatrix& labels, const WordSet& words,
                                         const std::vector<std::string>& fragment_ids) {
  std::map<std::string, int> frag_index;
  for (size_t i = 0; i < fragment_ids.size(); ++i)
    frag_index[fragment_ids[i]] = static_cast<int>(i);

  std::map<std::string, model::Sample> samples;
  for (const auto& [protein, fragment, value] : labels.entries()) {
    auto wit = words.by_protein.find(protein);
    if (wit == words.by_protein.end()) continue;  // no word input for this protein
    auto fit = frag_index.find(fragment);
    if (fit == frag_index.end()) continue;        // labels from a stale library
    model::Sample& s = samples[protein];
    if (s.words.empty()) {
      s.protein_id = protein;
      for (const words::ProteinWord& w : wit->second) s.words.push_back(w.embedding);
      s.labels.assign(fragment_ids.size(), 0.0);
      s.observed.assign(fragment_ids.size(), 0);
    }
    s.labels[fit->second] = value;
    s.observed[fit->second] = 1;
  }
  std::vector<model::Sample> out;
  out.reserve(samples.size());
  for (auto& [pid, s] : samples) out.push_back(std::move(s));
  return out;
}

std::vector<std::string> library_fragment_ids(const frag::FragmentLibrary& lib) {
  std::vector<std::string> ids;
  ids.reserve(lib.fragments.size());
  for (const auto& f : lib.fragments) ids.push_back(f.fragment_id);
  return ids;
}

void write_json_file(const std::string& path, const json& j) {
  AtomicWriter w(path);
  w.stream() << j.dump(2) << "\n";
  w.commit();
}

// screen TSV: rank<TAB>molecule_id<TAB>pwscore<TAB>covered(comma-sep)
void write_screen_tsv(const std::string& path, const std::vector<screen::ScreeningResult>& ranked,
                      const std::string& header) {
  AtomicWriter w(path);
  w.stream() << "# " << header << "\n";
  for (size_t i = 0; i < ranked.size(); ++i) {
    w.stream() << (i + 1) << "\t" << ranked[i].molecule_id << "\t"
               << fmt_double(ranked[i].pwscore) << "\t";
    for (size_t k = 0; k < ranked[i].covered.size(); ++k) {
      if (k) w.stream() << ",";
      w.stream() << ranked[i].covered[k].fragment_id;
    }
    w.stream() << "\n";
  }
  w.commit();
}

// ranking file reader: accepts 4-column screen TSV or 2-column id<TAB>score
std::map<std::string, double> read_ranking_scores(const std::string& path,
                                                  std::vector<std::string>* order) {
  std::map<std::string, double> scores;
  std::vector<std::string> ids;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> cols = split(line, '\t');
    try {
      if (cols.size() >= 3) {
        scores[cols[1]] = std::stod(cols[2]);
        ids.push_back(cols[1]);
      } else if (cols.size() == 2) {
        scores[cols[0]] = std::stod(cols[1]);
        ids.push_back(cols[0]);
      } else {
        throw std::invalid_argument("short line");
      }
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": bad ranking row");
    }
  });
  if (order) *order = ids;
  return scores;
}

// ---- subcommand implementations ----

struct FragmentsBuildArgs {
  std::string molecules, out, descriptors, ro3_out;
  double min_freq = 0.001;
  int max_blocks = 3, max_heavy = 25, min_heavy_atoms = 3;
  double flex_ratio = 1.0 / 3.0;
};

void cmd_fragments_build(const FragmentsBuildArgs& a, const Globals& g) {
  require_inputs({a.molecules, a.descriptors});
  if (g.dry_run) return;
  long skipped = 0;
  std::vector<chem::Molecule> corpus = load_molecules(a.molecules, nullptr, &skipped);
  frag::FilterConfig filter;
  filter.min_freq = a.min_freq;
  filter.min_heavy_atoms = a.min_heavy_atoms;
  filter.flexibility_ratio = a.flex_ratio;
  frag::FragConfig fc;
  fc.max_blocks = a.max_blocks;
  fc.max_heavy = a.max_heavy;
  frag::FragmentLibrary lib = frag::build_library(corpus, filter, fc);
  formats::write_fragments_jsonl(a.out, lib, g.header());
  std::cerr << "library: " << lib.fragments.size() << " fragments from " << corpus.size()
            << " molecules (" << skipped << " skipped)\n";

  if (!a.ro3_out.empty()) {
    // Rule-of-Three compliance over the library; logp/tpsa come from the
    // provider table when present (keyed by fragment key), else stay absent
    std::map<std::string, std::pair<double, double>> provider;
    if (!a.descriptors.empty()) provider = formats::read_descriptor_provider(a.descriptors);
    long pass = 0;
    for (const frag::Fragment& f : lib.fragments) {
      auto it = provider.find(f.key);
      std::optional<std::pair<double, double>> values;
      if (it != provider.end()) values = it->second;
      if (chem::rule_of_three(chem::descriptors(chem::parse_smiles(f.key), values))) ++pass;
    }
    write_json_file(a.ro3_out,
                    json{{"config_hash", to_hex(g.config_hash)},
                         {"n_fragments", lib.fragments.size()},
                         {"n_pass", pass},
                         {"fraction", static_cast<double>(pass) /
                                          static_cast<double>(lib.fragments.size())}});
  }
}

struct FragmentsCoverageArgs {
  std::string library, probe, out;
};

void cmd_fragments_coverage(const FragmentsCoverageArgs& a, const Globals& g) {
  require_inputs({a.library, a.probe});
  if (g.dry_run) return;
  frag::FragmentLibrary lib = formats::read_fragments_jsonl(a.library);
  long skipped = 0;
  std::vector<chem::Molecule> probe = load_molecules(a.probe, nullptr, &skipped);
  double frac = frag::coverage(lib, probe);
  write_json_file(a.out, json{{"config_hash", to_hex(g.config_hash)},
                              {"n_probe", probe.size()},
                              {"skipped", skipped},
                              {"coverage", frac}});
}

struct WordsSegmentArgs {
  std::string proteins, attn_dir, emb_dir, out, emb_out;
  double edge_threshold = -1.0;  // <0 -> percentile rule
  double percentile = 0.90;
  int min_size = 5, max_size = 20, max_length = 1024;
};

void cmd_words_segment(const WordsSegmentArgs& a, const Globals& g) {
  require_inputs({a.proteins, a.attn_dir});
  if (!a.emb_out.empty() && a.emb_dir.empty())
    throw Error(ErrorKind::Config, "--emb-out requires --emb-dir");
  if (g.dry_run) return;
  std::map<std::string, std::string> seqs = formats::read_proteins_jsonl(a.proteins);

  words::SegmentConfig cfg;
  cfg.min_size = a.min_size;
  cfg.max_size = a.max_size;
  cfg.max_length = a.max_length;
  cfg.percentile = a.percentile;
  if (a.edge_threshold >= 0.0) cfg.edge_threshold = a.edge_threshold;

  std::vector<words::ProteinWord> all;
  std::vector<std::vector<double>> embeddings;
  long skipped_long = 0;
  for (const auto& [pid, seq] : seqs) {  // std::map: sorted by protein id
    if (static_cast<int>(seq.size()) > a.max_length) {
      ++skipped_long;
      std::cerr << "skipping " << pid << ": sequence longer than " << a.max_length << "\n";
      continue;
    }
    std::string attn_path = a.attn_dir + "/" + pid + ".pwat";
    if (!fs::exists(attn_path)) throw Error(ErrorKind::Config, "missing " + attn_path);
    auto attn = formats::read_pwat(attn_path);
    std::vector<words::ProteinWord> ws = words::segment(pid, seq, attn, g.seed, cfg);
    if (!a.emb_dir.empty()) {
      auto res_emb = formats::read_pweb(a.emb_dir + "/" + pid + ".pweb");
      for (words::ProteinWord& w : ws) {
        w.embedding = words::word_embedding(w, res_emb);
        embeddings.push_back(w.embedding);
      }
    }
    for (words::ProteinWord& w : ws) all.push_back(std::move(w));
  }
  formats::write_words_jsonl(a.out, all, g.header());
  if (!a.emb_out.empty()) formats::write_pweb(a.emb_out, embeddings);
  std::cerr << "segmented " << all.size() << " words from " << seqs.size() << " proteins ("
            << skipped_long << " skipped)\n";
}

struct WordsDictArgs {
  std::string words, out, filtered_out, emb, filtered_emb;
  long min_count = 2;
};

void cmd_words_dict(const WordsDictArgs& a, const Globals& g) {
  require_inputs({a.words, a.emb});
  if (!a.filtered_emb.empty() && a.emb.empty())
    throw Error(ErrorKind::Config, "--filtered-emb requires --emb");
  if (g.dry_run) return;
  std::vector<words::ProteinWord> ws = formats::read_words_jsonl(a.words);
  std::vector<std::vector<double>> embs;
  if (!a.emb.empty()) {
    embs = formats::read_pweb(a.emb);
    if (embs.size() != ws.size())
      throw Error(ErrorKind::Shape, "embedding rows do not match words file");
  }
  words::WordDictionary dict = words::build_dictionary(ws, a.min_count);
  json counts = json::object();
  for (const auto& [key, count] : dict.counts) counts[key] = count;
  write_json_file(a.out, json{{"config_hash", to_hex(g.config_hash)},
                              {"min_count", a.min_count},
                              {"counts", counts}});
  if (!a.filtered_out.empty()) {
    std::vector<words::ProteinWord> kept;
    std::vector<std::vector<double>> kept_emb;
    for (size_t i = 0; i < ws.size(); ++i) {
      auto it = dict.counts.find(ws[i].key);
      if (it == dict.counts.end() || it->second < dict.min_count) continue;
      kept.push_back(ws[i]);
      if (!embs.empty()) kept_emb.push_back(embs[i]);
    }
    formats::write_words_jsonl(a.filtered_out, kept, g.header());
    if (!a.filtered_emb.empty()) formats::write_pweb(a.filtered_emb, kept_emb);
  }
}

struct DataIngestArgs {
  std::string affinity, proteins, out, rejects;
  int max_length = 1024;
};

void cmd_data_ingest(const DataIngestArgs& a, const Globals& g) {
  require_inputs({a.affinity, a.proteins});
  if (g.dry_run) return;
  std::vector<data::AffinityRecord> records = formats::read_affinity_jsonl(a.affinity);
  std::map<std::string, std::string> seqs = formats::read_proteins_jsonl(a.proteins);
  data::IngestResult r = data::ingest(records, seqs, a.max_length);
  std::vector<data::PairRecord> pairs = data::dedup_all(r.records);
  formats::write_pairs_jsonl(a.out, pairs, g.header());
  if (!a.rejects.empty()) {
    AtomicWriter w(a.rejects);
    w.stream() << "# " << g.header() << "\n";
    for (const auto& rej : r.rejects) {
      json j{{"protein_id", rej.record.protein_id},
             {"smiles", rej.record.smiles},
             {"reason", rej.reason}};
      w.stream() << j.dump() << "\n";
    }
    w.commit();
  }
  std::cerr << "ingested " << pairs.size() << " pairs; dropped " << r.dropped_long_proteins
            << " long-protein records; rejected " << r.rejects.size() << "\n";
}

struct DataLabelArgs {
  std::string records, library, out, set_name;
  std::vector<std::string> subsets;
  int min_actives = 1;
  int max_blocks = 3, max_heavy = 25;
};

void cmd_data_label(const DataLabelArgs& a, const Globals& g) {
  require_inputs({a.records, a.library});
  for (const std::string& s : a.subsets) require_inputs({s});
  if (!a.subsets.empty() && a.set_name.empty())
    throw Error(ErrorKind::Config, "--subset requires --set train|val|test");
  if (g.dry_run) return;
  std::vector<data::PairRecord> pairs = formats::read_pairs_jsonl(a.records);
  if (!a.subsets.empty()) {
    // per file: union over the requested sets; across files: intersection
    std::set<size_t> kept_idx;
    bool first = true;
    for (const std::string& path : a.subsets) {
      data::SplitResult split = formats::read_splits_json(path);
      std::set<size_t> here;
      for (const std::string& name : pwrules::split(a.set_name, ',')) {
        const std::vector<size_t>* idx = nullptr;
        if (name == "train")
          idx = &split.train;
        else if (name == "val")
          idx = &split.val;
        else if (name == "test")
          idx = &split.test;
        else
          throw Error(ErrorKind::Config, "--set entries must be train|val|test");
        here.insert(idx->begin(), idx->end());
      }
      if (first) {
        kept_idx = std::move(here);
        first = false;
      } else {
        std::set<size_t> merged;
        std::set_intersection(kept_idx.begin(), kept_idx.end(), here.begin(), here.end(),
                              std::inserter(merged, merged.begin()));
        kept_idx = std::move(merged);
      }
    }
    std::vector<data::PairRecord> kept;
    for (size_t i : kept_idx) {
      if (i >= pairs.size()) throw Error(ErrorKind::Value, "split index out of range");
      kept.push_back(pairs[i]);
    }
    pairs = std::move(kept);
  }
  frag::FragmentLibrary lib = formats::read_fragments_jsonl(a.library);
  frag::FragConfig fc;
  fc.max_blocks = a.max_blocks;
  fc.max_heavy = a.max_heavy;
  data::LabelMatrix m = data::label_matrix(pairs, lib, fc, a.min_actives);
  formats::write_labels_tsv(a.out, m, g.header());
  std::cerr << "labeled " << m.observed_count() << " observed entries\n";
}

struct DataSplitArgs {
  std::string records, mode = "novel_protein", out;
};

void cmd_data_split(const DataSplitArgs& a, const Globals& g) {
  require_inputs({a.records});
  if (g.dry_run) return;
  std::vector<data::PairRecord> pairs = formats::read_pairs_jsonl(a.records);
  data::SplitSpec spec;
  spec.mode = data::split_mode_from_string(a.mode);
  spec.seed = g.seed;
  data::SplitResult r = data::split(pairs, spec);
  formats::write_splits_json(a.out, r, spec, g.config_hash);
  std::cerr << "split " << pairs.size() << " pairs: " << r.train.size() << " train, "
            << r.val.size() << " val, " << r.test.size() << " test, " << r.dropped.size()
            << " dropped\n";
}

struct ModelTrainArgs {
  std::string train_labels, words, emb, fragments, checkpoint, log;
  std::vector<std::string> val_labels;
  int embed_dim = 32, n_layers = 2, n_heads = 4, ff_dim = 128, max_words = 64;
  double dropout = 0.1;
  double lr = 1e-3, min_lr = 0.0, weight_decay = 1e-5, threshold = 0.5;
  int batch_size = 256, t_max = 20, max_epochs = 600, patience = 60;
};

void cmd_model_train(const ModelTrainArgs& a, const Globals& g) {
  require_inputs({a.train_labels, a.words, a.emb, a.fragments});
  for (const std::string& v : a.val_labels) require_inputs({v});
  if (g.dry_run) return;

  frag::FragmentLibrary lib = formats::read_fragments_jsonl(a.fragments);
  std::vector<std::string> frag_ids = library_fragment_ids(lib);
  WordSet words = load_words(a.words, a.emb);

  model::ModelConfig cfg;
  cfg.embed_dim = a.embed_dim;
  cfg.n_layers = a.n_layers;
  cfg.n_heads = a.n_heads;
  cfg.ff_dim = a.ff_dim;
  cfg.n_fragments = static_cast<int>(frag_ids.size());
  cfg.max_words = a.max_words;
  cfg.dropout = a.dropout;
  cfg.seed = g.seed;

  std::vector<model::Sample> train_set =
      build_samples(formats::read_labels_tsv(a.train_labels), words, frag_ids);
  std::vector<std::vector<model::Sample>> val_sets;
  for (const std::string& v : a.val_labels)
    val_sets.push_back(build_samples(formats::read_labels_tsv(v), words, frag_ids));

  model::TrainConfig tcfg;
  tcfg.lr = a.lr;
  tcfg.min_lr = a.min_lr;
  tcfg.weight_decay = a.weight_decay;
  tcfg.batch_size = a.batch_size;
  tcfg.t_max = a.t_max;
  tcfg.max_epochs = a.max_epochs;
  tcfg.patience = a.patience;
  tcfg.threshold = a.threshold;

  model::TrainResult r = model::train(train_set, val_sets, cfg, tcfg);
  formats::write_checkpoint(a.checkpoint, r.best, g.config_hash);
  if (!a.log.empty()) {
    AtomicWriter w(a.log);
    w.stream() << "# " << g.header() << "\n";
    w.stream() << "epoch\tlr\ttrain_loss";
    for (size_t i = 0; i < val_sets.size(); ++i) w.stream() << "\tval_mcc_" << (i + 1);
    w.stream() << "\n";
    for (const model::EpochLog& e : r.log) {
      w.stream() << e.epoch << "\t" << fmt_double(e.lr) << "\t" << fmt_double(e.train_loss);
      for (double m : e.val_mcc) w.stream() << "\t" << fmt_double(m);
      w.stream() << "\n";
    }
    w.commit();
  }
  std::cerr << "trained " << r.log.size() << " epochs; best mean MCC "
            << fmt_double(r.best_mcc) << " at epoch " << r.best_epoch << "\n";
}

struct ModelPredictArgs {
  std::string checkpoint, words, emb, fragments, out;
};

void cmd_model_predict(const ModelPredictArgs& a, const Globals& g) {
  require_inputs({a.checkpoint, a.words, a.emb, a.fragments});
  if (g.dry_run) return;
  model::ModelState state = formats::read_checkpoint(a.checkpoint);
  frag::FragmentLibrary lib = formats::read_fragments_jsonl(a.fragments);
  std::vector<std::string> frag_ids = library_fragment_ids(lib);
  if (static_cast<int>(frag_ids.size()) != state.cfg.n_fragments)
    throw Error(ErrorKind::Shape, "library size does not match checkpoint fragment count");
  WordSet words = load_words(a.words, a.emb);

  AtomicWriter w(a.out);
  w.stream() << "# " << g.header() << "\n";
  for (const std::string& pid : words.protein_order) {
    std::vector<std::vector<double>> embs;
    for (const auto& pw : words.by_protein.at(pid)) embs.push_back(pw.embedding);
    std::vector<double> probs = model::predict(state, embs);
    for (size_t f = 0; f < frag_ids.size(); ++f)
      w.stream() << pid << "\t" << frag_ids[f] << "\t" << fmt_double(probs[f]) << "\n";
  }
  w.commit();
}

struct RulesExtractArgs {
  std::string checkpoint, words, emb, labels, fragments, out;
  int ig_steps = 50;
  double pred_threshold = 0.5;
};

void cmd_rules_extract(const RulesExtractArgs& a, const Globals& g) {
  require_inputs({a.checkpoint, a.words, a.emb, a.labels, a.fragments});
  if (g.dry_run) return;
  model::ModelState state = formats::read_checkpoint(a.checkpoint);
  frag::FragmentLibrary lib = formats::read_fragments_jsonl(a.fragments);
  std::vector<std::string> frag_ids = library_fragment_ids(lib);
  if (static_cast<int>(frag_ids.size()) != state.cfg.n_fragments)
    throw Error(ErrorKind::Shape, "library size does not match checkpoint fragment count");
  WordSet words = load_words(a.words, a.emb);
  data::LabelMatrix labels = formats::read_labels_tsv(a.labels);

  std::map<std::string, int> frag_index;
  for (size_t i = 0; i < frag_ids.size(); ++i) frag_index[frag_ids[i]] = static_cast<int>(i);

  attr::AttributionConfig acfg;
  acfg.ig_steps = a.ig_steps;
  acfg.pred_threshold = a.pred_threshold;

  std::vector<attr::RuleRecord> all;
  for (const std::string& pid : words.protein_order) {
    const auto& pws = words.by_protein.at(pid);
    std::vector<std::string> keys;
    std::vector<std::vector<double>> embs;
    for (const auto& w : pws) {
      keys.push_back(w.key);
      embs.push_back(w.embedding);
    }
    std::vector<double> lab(frag_ids.size(), 0.0);
    std::vector<uint8_t> obs(frag_ids.size(), 0);
    bool any = false;
    for (size_t f = 0; f < frag_ids.size(); ++f) {
      auto v = labels.label(pid, frag_ids[f]);
      if (v) {
        lab[f] = *v;
        obs[f] = 1;
        any = true;
      }
    }
    if (!any) continue;
    std::vector<attr::RuleRecord> rs =
        attr::extract_rules(state, keys, embs, frag_ids, lab, obs, acfg);
    all.insert(all.end(), rs.begin(), rs.end());
  }
  formats::write_rules_jsonl(a.out, all, g.header());
  std::cerr << "extracted " << all.size() << " rule records\n";
}

struct RulesAccuracyArgs {
  std::string rules, words, labels, out;
};

void cmd_rules_accuracy(const RulesAccuracyArgs& a, const Globals& g) {
  require_inputs({a.rules, a.words, a.labels});
  if (g.dry_run) return;
  rules::RuleDB db = formats::read_rules_any(a.rules);
  rules::ReferenceSet ref;
  for (const auto& w : formats::read_words_jsonl(a.words))
    ref.protein_words[w.protein_id].insert(w.key);
  ref.labels = formats::read_labels_tsv(a.labels);
  rules::RuleDB out = rules::compute_accuracies(db, ref);
  formats::write_rules_jsonl(a.out, out.records(), g.header());
  std::cerr << "scored " << out.size() << " rules against " << ref.protein_words.size()
            << " reference proteins\n";
}

struct RulesFilterArgs {
  std::string rules, out;
  double min_accuracy = 0.5;
};

void cmd_rules_filter(const RulesFilterArgs& a, const Globals& g) {
  require_inputs({a.rules});
  if (g.dry_run) return;
  rules::RuleDB db = formats::read_rules_any(a.rules);
  rules::RuleDB kept = rules::filter_rules(db, a.min_accuracy);
  formats::write_rules_jsonl(a.out, kept.records(), g.header());
  std::cerr << "kept " << kept.size() << " of " << db.size() << " rules\n";
}

struct RulesCompileArgs {
  std::string rules, out;
};

void cmd_rules_compile(const RulesCompileArgs& a, const Globals& g) {
  require_inputs({a.rules});
  if (g.dry_run) return;
  rules::RuleDB db = formats::read_rules_any(a.rules);
  formats::write_ruledb(a.out, db, g.config_hash);
  std::cerr << "compiled " << db.size() << " rules\n";
}

struct PredictFragmentsArgs {
  std::string rules, words, out, method = "joint", protein;
  double threshold = 0.5;
};

std::vector<std::string> query_keys_for(const WordSet& words, const std::string& protein) {
  if (!protein.empty()) {
    auto it = words.by_protein.find(protein);
    if (it == words.by_protein.end())
      throw Error(ErrorKind::UnknownProtein, "protein '" + protein + "' not in words file");
    std::vector<std::string> keys;
    for (const auto& w : it->second) keys.push_back(w.key);
    return keys;
  }
  if (words.protein_order.size() > 1)
    throw Error(ErrorKind::Config, "words file holds several proteins; pass --protein");
  std::vector<std::string> keys;
  for (const auto& [pid, ws] : words.by_protein)
    for (const auto& w : ws) keys.push_back(w.key);
  return keys;
}

void cmd_predict_fragments(const PredictFragmentsArgs& a, const Globals& g) {
  require_inputs({a.rules, a.words});
  if (g.dry_run) return;
  rules::RuleDB db = formats::read_rules_any(a.rules);
  WordSet words = load_words(a.words, "");
  std::vector<std::string> keys = query_keys_for(words, a.protein);
  auto preds = rules::predict_privileged(keys, db, rules::aggregation_from_string(a.method),
                                         a.threshold);
  AtomicWriter w(a.out);
  w.stream() << "# " << g.header() << "\n";
  for (const auto& p : preds) {
    json j{{"fragment_id", p.fragment_id},
           {"score", p.score},
           {"n_matched", p.n_matched},
           {"called", p.called}};
    w.stream() << j.dump() << "\n";
  }
  w.commit();
}

struct ScreenScoreArgs {
  std::string rules, query_words, library, fragments, out, method = "joint", protein;
  double conf_threshold = 0.5;
  int cap = 10;
};

void cmd_screen_score(const ScreenScoreArgs& a, const Globals& g) {
  require_inputs({a.rules, a.query_words, a.library, a.fragments});
  if (g.dry_run) return;
  rules::RuleDB db = formats::read_rules_any(a.rules);
  frag::FragmentLibrary lib = formats::read_fragments_jsonl(a.fragments);
  WordSet words = load_words(a.query_words, "");
  std::vector<std::string> keys = query_keys_for(words, a.protein);

  auto preds = rules::predict_privileged(keys, db, rules::aggregation_from_string(a.method), 0.5);
  std::vector<screen::ScoredFragment> frags =
      screen::score_fragments(preds, lib, a.conf_threshold);
  std::map<std::string, chem::Molecule> patterns;
  for (const auto& sf : frags)
    patterns[sf.fragment_id] = chem::parse_smiles(lib.by_id(sf.fragment_id)->key);

  std::vector<std::string> ids;
  long skipped = 0;
  std::vector<chem::Molecule> mols = load_molecules(a.library, &ids, &skipped);
  std::vector<screen::ScreeningResult> results(mols.size());
  parallel_for(mols.size(), g.threads, [&](size_t i) {
    results[i] = screen::pwscore(ids[i], mols[i], frags, patterns, a.cap);
  });
  std::sort(results.begin(), results.end(),
            [](const screen::ScreeningResult& x, const screen::ScreeningResult& y) {
              if (x.pwscore != y.pwscore) return x.pwscore > y.pwscore;
              return x.molecule_id < y.molecule_id;
            });
  write_screen_tsv(a.out, results, g.header());
  std::cerr << "scored " << results.size() << " molecules with " << frags.size()
            << " target fragments\n";
}

struct ScreenFuseArgs {
  std::string a_path, b_path, out;
  std::string orientation_a = "higher", orientation_b = "higher";
};

void cmd_screen_fuse(const ScreenFuseArgs& a, const Globals& g) {
  require_inputs({a.a_path, a.b_path});
  if (g.dry_run) return;
  auto parse_orient = [](const std::string& s) {
    if (s == "higher") return screen::Orientation::higher_better;
    if (s == "lower") return screen::Orientation::lower_better;
    throw Error(ErrorKind::Config, "orientation must be higher|lower");
  };
  std::map<std::string, double> sa = read_ranking_scores(a.a_path, nullptr);
  std::map<std::string, double> sb = read_ranking_scores(a.b_path, nullptr);
  std::map<std::string, double> fused =
      screen::zscore_fuse(sa, sb, parse_orient(a.orientation_a), parse_orient(a.orientation_b));
  std::vector<std::string> ranked = screen::rank_by_score(fused);
  AtomicWriter w(a.out);
  w.stream() << "# " << g.header() << "\n";
  for (size_t i = 0; i < ranked.size(); ++i)
    w.stream() << (i + 1) << "\t" << ranked[i] << "\t" << fmt_double(fused[ranked[i]]) << "\n";
  w.commit();
}

struct ScreenMetricsArgs {
  std::string ranking, actives, out;
  std::vector<double> ef_percents{0.5, 1.0, 5.0};
  double threshold = 0.5;
};

void cmd_screen_metrics(const ScreenMetricsArgs& a, const Globals& g) {
  require_inputs({a.ranking, a.actives});
  if (g.dry_run) return;
  std::vector<std::string> order;
  std::map<std::string, double> scores = read_ranking_scores(a.ranking, &order);
  std::set<std::string> actives;
  for_each_data_line(a.actives, [&](const std::string& line, size_t) {
    actives.insert(strip(line));
  });

  // deterministic ranking: score desc, ties by id
  std::vector<std::string> ranked = screen::rank_by_score(scores);

  screen::MetricReport report;
  report.n_total = static_cast<long>(ranked.size());
  for (const std::string& id : ranked)
    if (actives.count(id)) ++report.n_actives;
  for (double x : a.ef_percents) report.ef[x] = screen::enrichment_factor(ranked, actives, x);

  std::vector<uint8_t> calls, truth;
  std::vector<double> score_vec;
  for (const std::string& id : ranked) {
    calls.push_back(scores[id] >= a.threshold ? 1 : 0);
    truth.push_back(actives.count(id) ? 1 : 0);
    score_vec.push_back(scores[id]);
  }
  screen::binary_metrics(calls, truth, &report.precision, &report.mcc);
  report.auc = screen::rank_auc(score_vec, truth);

  json ef = json::object();
  for (const auto& [x, v] : report.ef) ef["ef_" + fmt_double(x) + "pct"] = v;
  json j{{"config_hash", to_hex(g.config_hash)},
         {"n_total", report.n_total},
         {"n_actives", report.n_actives},
         {"ef", ef},
         {"precision", report.precision},
         {"mcc", report.mcc},
         {"call_threshold", a.threshold}};
  if (report.auc)
    j["auc"] = *report.auc;
  else
    j["auc"] = nullptr;
  write_json_file(a.out, j);
  for (const auto& [x, v] : report.ef)
    std::cout << "ef_" << fmt_double(x) << "pct = " << fmt_double(v) << "\n";
}

struct StructvalArgs {
  std::string manifest, rules, fragments, out_distances, out_stats;
  long n_random = -1;  // default: same as the number of rule distances
};

void cmd_structval_run(const StructvalArgs& a, const Globals& g) {
  require_inputs({a.manifest, a.rules, a.fragments});
  if (g.dry_run) return;
  rules::RuleDB db = formats::read_rules_any(a.rules);
  frag::FragmentLibrary lib = formats::read_fragments_jsonl(a.fragments);

  fs::path base = fs::path(a.manifest).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  std::vector<structval::ComplexModel> complexes;
  std::vector<std::string> ligand_smiles;
  for_each_data_line(a.manifest, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() < 4)
      throw Error(ErrorKind::Parse, a.manifest + ":" + std::to_string(lineno) +
                                        ": need complex_id<TAB>pdb<TAB>mol<TAB>smiles");
    structval::ComplexModel cm;
    cm.complex_id = strip(cols[0]);
    cm.chains = structval::parse_pdb_file(resolve(strip(cols[1])));
    cm.ligand = structval::parse_mol_file(resolve(strip(cols[2])));
    complexes.push_back(std::move(cm));
    ligand_smiles.push_back(strip(cols[3]));
  });

  // ligand SMILES column cross-checks the connection table
  for (size_t i = 0; i < complexes.size(); ++i) {
    try {
      auto comps = chem::parse_components(ligand_smiles[i]);
      size_t best = 0;
      for (size_t k = 1; k < comps.size(); ++k)
        if (comps[k].heavy_atom_count() > comps[best].heavy_atom_count()) best = k;
      if (chem::canonical_key(comps[best]) != chem::canonical_key(complexes[i].ligand.mol))
        std::cerr << "warning: " << complexes[i].complex_id
                  << ": manifest SMILES does not match the mol file graph\n";
    } catch (const Error& e) {
      std::cerr << "warning: " << complexes[i].complex_id << ": bad manifest SMILES: " << e.what()
                << "\n";
    }
  }

  // fragment patterns referenced by rules (library first, key fallback)
  std::map<std::string, chem::Molecule> patterns;
  for (const auto& r : db.records()) {
    if (patterns.count(r.fragment_id)) continue;
    const frag::Fragment* f = lib.by_id(r.fragment_id);
    if (!f) throw Error(ErrorKind::UnknownFragment, "rule fragment '" + r.fragment_id +
                                                        "' missing from the library");
    patterns[r.fragment_id] = chem::parse_smiles(f->key);
  }

  std::vector<structval::PairDistance> rows;
  for (size_t ci = 0; ci < complexes.size(); ++ci) {
    for (const auto& r : db.records()) {
      auto d = structval::pair_distance(r.word_key, complexes[ci].chains,
                                        patterns.at(r.fragment_id), complexes[ci].ligand);
      if (!d) continue;
      rows.push_back({r.word_key, r.fragment_id, *d, "rule"});
    }
  }

  size_t n_random = a.n_random >= 0 ? static_cast<size_t>(a.n_random) : rows.size();
  std::vector<std::string> word_pool;
  for (const auto& r : db.records()) word_pool.push_back(r.word_key);
  std::sort(word_pool.begin(), word_pool.end());
  word_pool.erase(std::unique(word_pool.begin(), word_pool.end()), word_pool.end());
  auto draws = structval::random_control(complexes, word_pool, patterns, n_random, g.seed);
  for (const auto& d : draws) {
    auto dist = structval::pair_distance(d.word_key, complexes[d.complex_index].chains,
                                         patterns.at(d.fragment_id),
                                         complexes[d.complex_index].ligand);
    if (dist) rows.push_back({d.word_key, d.fragment_id, *dist, "random"});
  }

  AtomicWriter w(a.out_distances);
  w.stream() << "# " << g.header() << "\n";
  w.stream() << "word\tfragment_id\tdistance\tsource\n";
  std::vector<double> rule_d, random_d;
  for (const auto& r : rows) {
    w.stream() << r.word_key << "\t" << r.fragment_id << "\t" << fmt_double(r.distance) << "\t"
               << r.source << "\n";
    (r.source == "rule" ? rule_d : random_d).push_back(r.distance);
  }
  w.commit();

  auto median = [](std::vector<double> v) -> double {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  };
  auto frac_within = [](const std::vector<double>& v, double thr) -> double {
    if (v.empty()) return 0.0;
    long c = 0;
    for (double d : v)
      if (d <= thr) ++c;
    return static_cast<double>(c) / static_cast<double>(v.size());
  };

  json stats{{"config_hash", to_hex(g.config_hash)},
             {"n_rule_pairs", rule_d.size()},
             {"n_random_pairs", random_d.size()},
             {"median_rule", median(rule_d)},
             {"median_random", median(random_d)},
             {"frac_within_15A_rule", frac_within(rule_d, 15.0)},
             {"frac_within_15A_random", frac_within(random_d, 15.0)}};
  if (!rule_d.empty() && !random_d.empty()) {
    structval::MannWhitneyResult mwu = structval::mann_whitney_u(rule_d, random_d);
    stats["u_rule"] = mwu.u_a;
    stats["u_random"] = mwu.u_b;
    stats["p_two_sided"] = mwu.p_two_sided;
    stats["p_rule_closer"] = mwu.p_less;
    stats["exact"] = mwu.exact;
  }
  write_json_file(a.out_stats, stats);
  std::cerr << "measured " << rule_d.size() << " rule pairs and " << random_d.size()
            << " random pairs\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"protein word / fragment pairing rules pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file");

  Globals g;
  app.add_option("--seed", g.seed, "global random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "max worker threads")->capture_default_str();
  app.add_flag("--dry-run", g.dry_run, "validate inputs and exit without writing");

  FragmentsBuildArgs fb;
  FragmentsCoverageArgs fc;
  WordsSegmentArgs wsg;
  WordsDictArgs wd;
  DataIngestArgs di;
  DataLabelArgs dl;
  DataSplitArgs ds;
  ModelTrainArgs mt;
  ModelPredictArgs mp;
  RulesExtractArgs re;
  RulesAccuracyArgs ra;
  RulesFilterArgs rf;
  RulesCompileArgs rc;
  PredictFragmentsArgs pf;
  ScreenScoreArgs ss;
  ScreenFuseArgs sf;
  ScreenMetricsArgs sm;
  StructvalArgs sv;

  CLI::App* fragments = app.add_subcommand("fragments", "fragment library operations");
  fragments->require_subcommand(1);
  CLI::App* c_fb = fragments->add_subcommand("build", "build the fragment library");
  c_fb->add_option("--molecules", fb.molecules)->required();
  c_fb->add_option("--out", fb.out)->required();
  c_fb->add_option("--descriptors", fb.descriptors, "optional logp/tpsa provider table");
  c_fb->add_option("--ro3-out", fb.ro3_out, "rule-of-three compliance report");
  c_fb->add_option("--min-freq", fb.min_freq)->capture_default_str();
  c_fb->add_option("--max-blocks", fb.max_blocks)->capture_default_str();
  c_fb->add_option("--max-heavy", fb.max_heavy)->capture_default_str();
  c_fb->add_option("--min-heavy-atoms", fb.min_heavy_atoms)->capture_default_str();
  c_fb->add_option("--flex-ratio", fb.flex_ratio)->capture_default_str();

  CLI::App* c_fc = fragments->add_subcommand("coverage", "library coverage of a probe set");
  c_fc->add_option("--library", fc.library)->required();
  c_fc->add_option("--probe", fc.probe)->required();
  c_fc->add_option("--out", fc.out)->required();

  CLI::App* words_cmd = app.add_subcommand("words", "protein word operations");
  words_cmd->require_subcommand(1);
  CLI::App* c_ws = words_cmd->add_subcommand("segment", "segment proteins into words");
  c_ws->add_option("--proteins", wsg.proteins)->required();
  c_ws->add_option("--attn-dir", wsg.attn_dir)->required();
  c_ws->add_option("--emb-dir", wsg.emb_dir);
  c_ws->add_option("--out", wsg.out)->required();
  c_ws->add_option("--emb-out", wsg.emb_out);
  c_ws->add_option("--edge-threshold", wsg.edge_threshold);
  c_ws->add_option("--edge-percentile", wsg.percentile)->capture_default_str();
  c_ws->add_option("--min-size", wsg.min_size)->capture_default_str();
  c_ws->add_option("--max-size", wsg.max_size)->capture_default_str();
  c_ws->add_option("--max-length", wsg.max_length)->capture_default_str();

  CLI::App* c_wd = words_cmd->add_subcommand("dict", "build and apply the word dictionary");
  c_wd->add_option("--words", wd.words)->required();
  c_wd->add_option("--out", wd.out)->required();
  c_wd->add_option("--min-count", wd.min_count)->capture_default_str();
  c_wd->add_option("--filtered-out", wd.filtered_out);
  c_wd->add_option("--emb", wd.emb);
  c_wd->add_option("--filtered-emb", wd.filtered_emb);

  CLI::App* data_cmd = app.add_subcommand("data", "dataset operations");
  data_cmd->require_subcommand(1);
  CLI::App* c_di = data_cmd->add_subcommand("ingest", "validate, dedup and binarize affinities");
  c_di->add_option("--affinity", di.affinity)->required();
  c_di->add_option("--proteins", di.proteins)->required();
  c_di->add_option("--out", di.out)->required();
  c_di->add_option("--rejects", di.rejects);
  c_di->add_option("--max-length", di.max_length)->capture_default_str();

  CLI::App* c_dl = data_cmd->add_subcommand("label", "build the privileged-fragment label matrix");
  c_dl->add_option("--records", dl.records)->required();
  c_dl->add_option("--library", dl.library)->required();
  c_dl->add_option("--out", dl.out)->required();
  c_dl->add_option("--subset", dl.subsets)->delimiter(',');
  c_dl->add_option("--set", dl.set_name);
  c_dl->add_option("--min-actives", dl.min_actives)->capture_default_str();
  c_dl->add_option("--max-blocks", dl.max_blocks)->capture_default_str();
  c_dl->add_option("--max-heavy", dl.max_heavy)->capture_default_str();

  CLI::App* c_ds = data_cmd->add_subcommand("split", "split pairs into train/val/test");
  c_ds->add_option("--records", ds.records)->required();
  c_ds->add_option("--mode", ds.mode)->capture_default_str();
  c_ds->add_option("--out", ds.out)->required();

  CLI::App* model_cmd = app.add_subcommand("model", "classifier operations");
  model_cmd->require_subcommand(1);
  CLI::App* c_mt = model_cmd->add_subcommand("train", "train the multi-label classifier");
  c_mt->add_option("--train-labels", mt.train_labels)->required();
  c_mt->add_option("--val-labels", mt.val_labels)->delimiter(',');
  c_mt->add_option("--words", mt.words)->required();
  c_mt->add_option("--emb", mt.emb)->required();
  c_mt->add_option("--fragments", mt.fragments)->required();
  c_mt->add_option("--checkpoint", mt.checkpoint)->required();
  c_mt->add_option("--log", mt.log);
  c_mt->add_option("--embed-dim", mt.embed_dim)->capture_default_str();
  c_mt->add_option("--layers", mt.n_layers)->capture_default_str();
  c_mt->add_option("--heads", mt.n_heads)->capture_default_str();
  c_mt->add_option("--ff-dim", mt.ff_dim)->capture_default_str();
  c_mt->add_option("--max-words", mt.max_words)->capture_default_str();
  c_mt->add_option("--dropout", mt.dropout)->capture_default_str();
  c_mt->add_option("--lr", mt.lr)->capture_default_str();
  c_mt->add_option("--min-lr", mt.min_lr)->capture_default_str();
  c_mt->add_option("--weight-decay", mt.weight_decay)->capture_default_str();
  c_mt->add_option("--batch-size", mt.batch_size)->capture_default_str();
  c_mt->add_option("--t-max", mt.t_max)->capture_default_str();
  c_mt->add_option("--max-epochs", mt.max_epochs)->capture_default_str();
  c_mt->add_option("--patience", mt.patience)->capture_default_str();
  c_mt->add_option("--threshold", mt.threshold)->capture_default_str();

  CLI::App* c_mp = model_cmd->add_subcommand("predict", "fragment probabilities per protein");
  c_mp->add_option("--checkpoint", mp.checkpoint)->required();
  c_mp->add_option("--words", mp.words)->required();
  c_mp->add_option("--emb", mp.emb)->required();
  c_mp->add_option("--fragments", mp.fragments)->required();
  c_mp->add_option("--out", mp.out)->required();

  CLI::App* rules_cmd = app.add_subcommand("rules", "pairing rule operations");
  rules_cmd->require_subcommand(1);
  CLI::App* c_re = rules_cmd->add_subcommand("extract", "mine rules with integrated gradients");
  c_re->add_option("--checkpoint", re.checkpoint)->required();
  c_re->add_option("--words", re.words)->required();
  c_re->add_option("--emb", re.emb)->required();
  c_re->add_option("--labels", re.labels)->required();
  c_re->add_option("--fragments", re.fragments)->required();
  c_re->add_option("--out", re.out)->required();
  c_re->add_option("--ig-steps", re.ig_steps)->capture_default_str();
  c_re->add_option("--pred-threshold", re.pred_threshold)->capture_default_str();

  CLI::App* c_ra = rules_cmd->add_subcommand("accuracy", "score rules against reference labels");
  c_ra->add_option("--rules", ra.rules)->required();
  c_ra->add_option("--words", ra.words)->required();
  c_ra->add_option("--labels", ra.labels)->required();
  c_ra->add_option("--out", ra.out)->required();

  CLI::App* c_rf = rules_cmd->add_subcommand("filter", "drop rules below the accuracy floor");
  c_rf->add_option("--rules", rf.rules)->required();
  c_rf->add_option("--out", rf.out)->required();
  c_rf->add_option("--min-accuracy", rf.min_accuracy)->capture_default_str();

  CLI::App* c_rc = rules_cmd->add_subcommand("compile", "compile rules into a binary index");
  c_rc->add_option("--rules", rc.rules)->required();
  c_rc->add_option("--out", rc.out)->required();

  CLI::App* c_pf = app.add_subcommand("predict-fragments", "privileged fragments for a query");
  c_pf->add_option("--rules", pf.rules)->required();
  c_pf->add_option("--words", pf.words)->required();
  c_pf->add_option("--out", pf.out)->required();
  c_pf->add_option("--method", pf.method)->capture_default_str();
  c_pf->add_option("--threshold", pf.threshold)->capture_default_str();
  c_pf->add_option("--protein", pf.protein);

  CLI::App* screen_cmd = app.add_subcommand("screen", "virtual screening");
  screen_cmd->require_subcommand(1);
  CLI::App* c_ss = screen_cmd->add_subcommand("score", "rank a library by PWScore");
  c_ss->add_option("--rules", ss.rules)->required();
  c_ss->add_option("--query-words", ss.query_words)->required();
  c_ss->add_option("--library", ss.library)->required();
  c_ss->add_option("--fragments", ss.fragments)->required();
  c_ss->add_option("--out", ss.out)->required();
  c_ss->add_option("--method", ss.method)->capture_default_str();
  c_ss->add_option("--conf-threshold", ss.conf_threshold)->capture_default_str();
  c_ss->add_option("--cap", ss.cap)->capture_default_str();
  c_ss->add_option("--protein", ss.protein);

  CLI::App* c_sf = screen_cmd->add_subcommand("fuse", "z-score fusion of two rankings");
  c_sf->add_option("--a", sf.a_path)->required();
  c_sf->add_option("--b", sf.b_path)->required();
  c_sf->add_option("--out", sf.out)->required();
  c_sf->add_option("--orientation-a", sf.orientation_a)->capture_default_str();
  c_sf->add_option("--orientation-b", sf.orientation_b)->capture_default_str();

  CLI::App* c_sm = screen_cmd->add_subcommand("metrics", "enrichment and ranking metrics");
  c_sm->add_option("--ranking", sm.ranking)->required();
  c_sm->add_option("--actives", sm.actives)->required();
  c_sm->add_option("--out", sm.out)->required();
  c_sm->add_option("--ef", sm.ef_percents)->delimiter(',')->capture_default_str();
  c_sm->add_option("--threshold", sm.threshold)->capture_default_str();

  CLI::App* structval_cmd = app.add_subcommand("structval", "structural validation");
  structval_cmd->require_subcommand(1);
  CLI::App* c_sv = structval_cmd->add_subcommand("run", "centroid distances and statistics");
  c_sv->add_option("--manifest", sv.manifest)->required();
  c_sv->add_option("--rules", sv.rules)->required();
  c_sv->add_option("--fragments", sv.fragments)->required();
  c_sv->add_option("--out-distances", sv.out_distances)->required();
  c_sv->add_option("--out-stats", sv.out_stats)->required();
  c_sv->add_option("--n-random", sv.n_random)->capture_default_str();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help and friends
      std::cout << app.help() << "\n";
      return 0;
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  // effective configuration fingerprint, embedded in every output header
  g.config_hash = fnv1a64(app.config_to_str(true, false) + "|seed=" + std::to_string(g.seed));

  try {
    if (c_fb->parsed()) cmd_fragments_build(fb, g);
    if (c_fc->parsed()) cmd_fragments_coverage(fc, g);
    if (c_ws->parsed()) cmd_words_segment(wsg, g);
    if (c_wd->parsed()) cmd_words_dict(wd, g);
    if (c_di->parsed()) cmd_data_ingest(di, g);
    if (c_dl->parsed()) cmd_data_label(dl, g);
    if (c_ds->parsed()) cmd_data_split(ds, g);
    if (c_mt->parsed()) cmd_model_train(mt, g);
    if (c_mp->parsed()) cmd_model_predict(mp, g);
    if (c_re->parsed()) cmd_rules_extract(re, g);
    if (c_ra->parsed()) cmd_rules_accuracy(ra, g);
    if (c_rf->parsed()) cmd_rules_filter(rf, g);
    if (c_rc->parsed()) cmd_rules_compile(rc, g);
    if (c_pf->parsed()) cmd_predict_fragments(pf, g);
    if (c_ss->parsed()) cmd_screen_score(ss, g);
    if (c_sf->parsed()) cmd_screen_fuse(sf, g);
    if (c_sm->parsed()) cmd_screen_metrics(sm, g);
    if (c_sv->parsed()) cmd_structval_run(sv, g);
  } catch (const Error& e) {
    std::cerr << error_kind_name(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Io ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pwrules::cli
