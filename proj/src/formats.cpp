#include "pwrules/formats.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pwrules/errors.hpp"
#include "pwrules/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace pwrules::formats {

using nlohmann::json;

namespace {

void put_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_bytes(std::istream& in, void* p, size_t n, const std::string& what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw Error(ErrorKind::Parse, "truncated " + what);
}

template <typename T>
void put(std::ostream& out, T v) {
  put_bytes(out, &v, sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  get_bytes(in, &v, sizeof v, what);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<uint16_t>(out, static_cast<uint16_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

std::string get_string(std::istream& in, const std::string& what) {
  uint16_t n = get<uint16_t>(in, what);
  std::string s(n, '\0');
  get_bytes(in, s.data(), n, what);
  return s;
}

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
  char buf[4];
  get_bytes(in, buf, 4, path);
  if (std::memcmp(buf, magic, 4) != 0)
    throw Error(ErrorKind::Parse, path + " is not a " + magic + " file");
}

json parse_json_line(const std::string& line, const std::string& path, size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded())
    throw Error(ErrorKind::Parse, "bad JSON at " + path + ":" + std::to_string(lineno));
  return j;
}

}  // namespace

void write_pwat(const std::string& path, const std::vector<std::vector<double>>& matrix) {
  const uint32_t n = static_cast<uint32_t>(matrix.size());
  for (const auto& row : matrix)
    if (row.size() != n) throw Error(ErrorKind::Shape, "attention matrix not square");
  AtomicWriter w(path);
  put_bytes(w.stream(), "PWAT", 4);
  put<uint32_t>(w.stream(), 1);
  put<uint32_t>(w.stream(), n);
  for (const auto& row : matrix)
    for (double v : row) put<float>(w.stream(), static_cast<float>(v));
  w.commit();
}

std::vector<std::vector<double>> read_pwat(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  expect_magic(in, "PWAT", path);
  uint32_t version = get<uint32_t>(in, path);
  if (version != 1) throw Error(ErrorKind::Parse, "unsupported PWAT version");
  uint32_t n = get<uint32_t>(in, path);
  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j = 0; j < n; ++j) m[i][j] = get<float>(in, path);
  return m;
}

void write_pweb(const std::string& path, const std::vector<std::vector<double>>& rows) {
  const uint32_t r = static_cast<uint32_t>(rows.size());
  const uint32_t d = r == 0 ? 0 : static_cast<uint32_t>(rows[0].size());
  for (const auto& row : rows)
    if (row.size() != d) throw Error(ErrorKind::Shape, "ragged embedding rows");
  AtomicWriter w(path);
  put_bytes(w.stream(), "PWEB", 4);
  put<uint32_t>(w.stream(), 1);
  put<uint32_t>(w.stream(), r);
  put<uint32_t>(w.stream(), d);
  for (const auto& row : rows)
    for (double v : row) put<float>(w.stream(), static_cast<float>(v));
  w.commit();
}

std::vector<std::vector<double>> read_pweb(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  expect_magic(in, "PWEB", path);
  uint32_t version = get<uint32_t>(in, path);
  if (version != 1) throw Error(ErrorKind::Parse, "unsupported PWEB version");
  uint32_t r = get<uint32_t>(in, path);
  uint32_t d = get<uint32_t>(in, path);
  std::vector<std::vector<double>> rows(r, std::vector<double>(d));
  for (uint32_t i = 0; i < r; ++i)
    for (uint32_t j = 0; j < d; ++j) rows[i][j] = get<float>(in, path);
  return rows;
}

void write_checkpoint(const std::string& path, const model::ModelState& state,
                      uint64_t config_hash) {
  AtomicWriter w(path);
  std::ostream& out = w.stream();
  put_bytes(out, "PWCK", 4);
  put<uint32_t>(out, 1);
  put<uint64_t>(out, config_hash);
  const model::ModelConfig& c = state.cfg;
  put<uint32_t>(out, static_cast<uint32_t>(c.embed_dim));
  put<uint32_t>(out, static_cast<uint32_t>(c.n_layers));
  put<uint32_t>(out, static_cast<uint32_t>(c.n_heads));
  put<uint32_t>(out, static_cast<uint32_t>(c.ff_dim));
  put<uint32_t>(out, static_cast<uint32_t>(c.n_fragments));
  put<uint32_t>(out, static_cast<uint32_t>(c.max_words));
  put<double>(out, c.dropout);
  put<uint64_t>(out, c.seed);
  put<uint32_t>(out, static_cast<uint32_t>(state.epoch));
  put<uint64_t>(out, state.adam_step);

  auto write_group = [&](const std::map<std::string, std::vector<double>>& tensors) {
    put<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, v] : tensors) {
      put_string(out, name);
      put<uint32_t>(out, static_cast<uint32_t>(v.size()));
      for (double x : v) put<float>(out, static_cast<float>(x));
    }
  };
  write_group(state.tensors);
  write_group(state.adam_m);
  write_group(state.adam_v);
  w.commit();
}

model::ModelState read_checkpoint(const std::string& path, uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  expect_magic(in, "PWCK", path);
  uint32_t version = get<uint32_t>(in, path);
  if (version != 1) throw Error(ErrorKind::Parse, "unsupported PWCK version");
  uint64_t hash = get<uint64_t>(in, path);
  if (config_hash) *config_hash = hash;
  model::ModelState s;
  s.cfg.embed_dim = static_cast<int>(get<uint32_t>(in, path));
  s.cfg.n_layers = static_cast<int>(get<uint32_t>(in, path));
  s.cfg.n_heads = static_cast<int>(get<uint32_t>(in, path));
  s.cfg.ff_dim = static_cast<int>(get<uint32_t>(in, path));
  s.cfg.n_fragments = static_cast<int>(get<uint32_t>(in, path));
  s.cfg.max_words = static_cast<int>(get<uint32_t>(in, path));
  s.cfg.dropout = get<double>(in, path);
  s.cfg.seed = get<uint64_t>(in, path);
  s.epoch = static_cast<int>(get<uint32_t>(in, path));
  s.adam_step = get<uint64_t>(in, path);

  auto read_group = [&](std::map<std::string, std::vector<double>>& tensors) {
    uint32_t n = get<uint32_t>(in, path);
    for (uint32_t i = 0; i < n; ++i) {
      std::string name = get_string(in, path);
      uint32_t count = get<uint32_t>(in, path);
      std::vector<double> v(count);
      for (uint32_t k = 0; k < count; ++k) v[k] = get<float>(in, path);
      tensors[name] = std::move(v);
    }
  };
  read_group(s.tensors);
  read_group(s.adam_m);
  read_group(s.adam_v);
  return s;
}

void write_ruledb(const std::string& path, const rules::RuleDB& db, uint64_t config_hash) {
  AtomicWriter w(path);
  std::ostream& out = w.stream();
  put_bytes(out, "PWDB", 4);
  put<uint32_t>(out, 1);
  put<uint64_t>(out, config_hash);
  put<uint32_t>(out, static_cast<uint32_t>(db.size()));
  for (const auto& r : db.records()) {
    put_string(out, r.word_key);
    put_string(out, r.fragment_id);
    put<double>(out, r.pred_score);
    put<double>(out, r.attr_score);
    put<double>(out, r.rule_score);
    put<uint8_t>(out, r.accuracy ? 1 : 0);
    put<double>(out, r.accuracy ? *r.accuracy : 0.0);
    put<uint8_t>(out, r.accuracy_flagged ? 1 : 0);
  }
  w.commit();
}

rules::RuleDB read_ruledb(const std::string& path, uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  expect_magic(in, "PWDB", path);
  uint32_t version = get<uint32_t>(in, path);
  if (version != 1) throw Error(ErrorKind::Parse, "unsupported PWDB version");
  uint64_t hash = get<uint64_t>(in, path);
  if (config_hash) *config_hash = hash;
  uint32_t n = get<uint32_t>(in, path);
  std::vector<attr::RuleRecord> rs;
  rs.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    attr::RuleRecord r;
    r.word_key = get_string(in, path);
    r.fragment_id = get_string(in, path);
    r.pred_score = get<double>(in, path);
    r.attr_score = get<double>(in, path);
    r.rule_score = get<double>(in, path);
    uint8_t has_acc = get<uint8_t>(in, path);
    double acc = get<double>(in, path);
    if (has_acc) r.accuracy = acc;
    r.accuracy_flagged = get<uint8_t>(in, path) != 0;
    rs.push_back(std::move(r));
  }
  return rules::RuleDB(std::move(rs));
}

rules::RuleDB read_rules_any(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();
  if (std::memcmp(magic, "PWDB", 4) == 0) return read_ruledb(path);
  return rules::RuleDB(read_rules_jsonl(path));
}

std::vector<MoleculeRow> read_molecules_tsv(const std::string& path) {
  std::vector<MoleculeRow> out;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() < 2)
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": need id<TAB>smiles");
    out.push_back({strip(cols[0]), strip(cols[1])});
  });
  return out;
}

std::map<std::string, std::pair<double, double>> read_descriptor_provider(
    const std::string& path) {
  std::map<std::string, std::pair<double, double>> out;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() < 3)
      throw Error(ErrorKind::Parse,
                  path + ":" + std::to_string(lineno) + ": need id<TAB>logp<TAB>tpsa");
    try {
      out[strip(cols[0])] = {std::stod(cols[1]), std::stod(cols[2])};
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": bad number");
    }
  });
  return out;
}

void write_fragments_jsonl(const std::string& path, const frag::FragmentLibrary& lib,
                           const std::string& header_comment) {
  AtomicWriter w(path);
  if (!header_comment.empty()) w.stream() << "# " << header_comment << "\n";
  for (const frag::Fragment& f : lib.fragments) {
    json j{{"fragment_id", f.fragment_id},
           {"smiles", f.key},
           {"count", f.count},
           {"freq", f.freq}};
    w.stream() << j.dump() << "\n";
  }
  w.commit();
}

frag::FragmentLibrary read_fragments_jsonl(const std::string& path) {
  frag::FragmentLibrary lib;
  long max_count = 0;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    json j = parse_json_line(line, path, lineno);
    frag::Fragment f;
    f.fragment_id = j.at("fragment_id").get<std::string>();
    f.key = j.at("smiles").get<std::string>();
    f.count = j.at("count").get<long>();
    f.freq = j.at("freq").get<double>();
    f.heavy_atoms = chem::parse_smiles(f.key).heavy_atom_count();
    max_count = std::max(max_count, f.count);
    lib.fragments.push_back(std::move(f));
  });
  if (lib.fragments.empty()) throw Error(ErrorKind::EmptyLibrary, path + " holds no fragments");
  // corpus size is not stored; recover a consistent value from count/freq
  const frag::Fragment& f0 = lib.fragments.front();
  lib.corpus_size = f0.freq > 0 ? static_cast<long>(std::lround(f0.count / f0.freq)) : max_count;
  lib.rebuild_index();
  return lib;
}

void write_words_jsonl(const std::string& path, const std::vector<words::ProteinWord>& ws,
                       const std::string& header_comment) {
  AtomicWriter w(path);
  if (!header_comment.empty()) w.stream() << "# " << header_comment << "\n";
  for (const words::ProteinWord& pw : ws) {
    json j{{"protein_id", pw.protein_id}, {"key", pw.key}, {"positions", pw.positions}};
    w.stream() << j.dump() << "\n";
  }
  w.commit();
}

std::vector<words::ProteinWord> read_words_jsonl(const std::string& path) {
  std::vector<words::ProteinWord> out;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    json j = parse_json_line(line, path, lineno);
    words::ProteinWord w;
    w.protein_id = j.at("protein_id").get<std::string>();
    w.key = j.at("key").get<std::string>();
    w.positions = j.at("positions").get<std::vector<int>>();
    out.push_back(std::move(w));
  });
  return out;
}

std::map<std::string, std::string> read_proteins_jsonl(const std::string& path) {
  std::map<std::string, std::string> out;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    json j = parse_json_line(line, path, lineno);
    out[j.at("protein_id").get<std::string>()] = j.at("sequence").get<std::string>();
  });
  return out;
}

std::vector<data::AffinityRecord> read_affinity_jsonl(const std::string& path) {
  std::vector<data::AffinityRecord> out;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    json j = parse_json_line(line, path, lineno);
    data::AffinityRecord r;
    r.protein_id = j.at("protein_id").get<std::string>();
    r.smiles = j.at("smiles").get<std::string>();
    r.type = data::affinity_type_from_string(j.at("type").get<std::string>());
    r.value_nm = j.at("value_nm").get<double>();
    r.source = data::source_from_string(j.at("source").get<std::string>());
    out.push_back(std::move(r));
  });
  return out;
}

void write_pairs_jsonl(const std::string& path, const std::vector<data::PairRecord>& pairs,
                       const std::string& header_comment) {
  AtomicWriter w(path);
  if (!header_comment.empty()) w.stream() << "# " << header_comment << "\n";
  for (const data::PairRecord& p : pairs) {
    json j{{"protein_id", p.protein_id}, {"ligand", p.ligand_key},
           {"type", data::to_string(p.type)}, {"value_nm", p.value_nm},
           {"source", data::to_string(p.source)}, {"active", p.active}};
    w.stream() << j.dump() << "\n";
  }
  w.commit();
}

std::vector<data::PairRecord> read_pairs_jsonl(const std::string& path) {
  std::vector<data::PairRecord> out;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    json j = parse_json_line(line, path, lineno);
    data::PairRecord p;
    p.protein_id = j.at("protein_id").get<std::string>();
    p.ligand_key = j.at("ligand").get<std::string>();
    p.type = data::affinity_type_from_string(j.at("type").get<std::string>());
    p.value_nm = j.at("value_nm").get<double>();
    p.source = data::source_from_string(j.at("source").get<std::string>());
    p.active = j.at("active").get<bool>();
    out.push_back(std::move(p));
  });
  return out;
}

void write_labels_tsv(const std::string& path, const data::LabelMatrix& m,
                      const std::string& header_comment) {
  AtomicWriter w(path);
  if (!header_comment.empty()) w.stream() << "# " << header_comment << "\n";
  for (const auto& [protein, fragment, value] : m.entries())
    w.stream() << protein << "\t" << fragment << "\t" << value << "\n";
  w.commit();
}

data::LabelMatrix read_labels_tsv(const std::string& path) {
  data::LabelMatrix m;
  std::set<std::string> proteins, fragments;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() < 3)
      throw Error(ErrorKind::Parse,
                  path + ":" + std::to_string(lineno) + ": need protein<TAB>fragment<TAB>label");
    int v = 0;
    if (cols[2] == "0")
      v = 0;
    else if (cols[2] == "1")
      v = 1;
    else
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": label must be 0|1");
    m.set(cols[0], cols[1], v);
    proteins.insert(cols[0]);
    fragments.insert(cols[1]);
  });
  m.proteins.assign(proteins.begin(), proteins.end());
  m.fragment_ids.assign(fragments.begin(), fragments.end());
  return m;
}

void write_rules_jsonl(const std::string& path, const std::vector<attr::RuleRecord>& rs,
                       const std::string& header_comment) {
  AtomicWriter w(path);
  if (!header_comment.empty()) w.stream() << "# " << header_comment << "\n";
  for (const attr::RuleRecord& r : rs) {
    json j{{"word", r.word_key},
           {"fragment_id", r.fragment_id},
           {"pred_score", r.pred_score},
           {"attr_score", r.attr_score},
           {"rule_score", r.rule_score}};
    if (r.accuracy)
      j["accuracy"] = *r.accuracy;
    else
      j["accuracy"] = nullptr;
    if (r.accuracy_flagged) j["accuracy_flagged"] = true;
    w.stream() << j.dump() << "\n";
  }
  w.commit();
}

std::vector<attr::RuleRecord> read_rules_jsonl(const std::string& path) {
  std::vector<attr::RuleRecord> out;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    json j = parse_json_line(line, path, lineno);
    attr::RuleRecord r;
    r.word_key = j.at("word").get<std::string>();
    r.fragment_id = j.at("fragment_id").get<std::string>();
    r.pred_score = j.at("pred_score").get<double>();
    r.attr_score = j.at("attr_score").get<double>();
    r.rule_score = j.at("rule_score").get<double>();
    if (j.contains("accuracy") && !j.at("accuracy").is_null())
      r.accuracy = j.at("accuracy").get<double>();
    if (j.contains("accuracy_flagged")) r.accuracy_flagged = j.at("accuracy_flagged").get<bool>();
    out.push_back(std::move(r));
  });
  return out;
}

void write_splits_json(const std::string& path, const data::SplitResult& r,
                       const data::SplitSpec& spec, uint64_t config_hash) {
  json j{{"config_hash", to_hex(config_hash)},
         {"mode", data::to_string(spec.mode)},
         {"seed", spec.seed},
         {"train", r.train},
         {"val", r.val},
         {"test", r.test},
         {"dropped", r.dropped}};
  AtomicWriter w(path);
  w.stream() << j.dump(2) << "\n";
  w.commit();
}

data::SplitResult read_splits_json(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::Parse, "bad JSON in " + path);
  data::SplitResult r;
  r.train = j.at("train").get<std::vector<size_t>>();
  r.val = j.at("val").get<std::vector<size_t>>();
  r.test = j.at("test").get<std::vector<size_t>>();
  if (j.contains("dropped")) r.dropped = j.at("dropped").get<std::vector<size_t>>();
  return r;
}

std::map<std::string, double> read_score_tsv(const std::string& path) {
  std::map<std::string, double> out;
  for_each_data_line(path, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() < 2)
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": need id<TAB>score");
    try {
      out[strip(cols[0])] = std::stod(cols[1]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": bad score");
    }
  });
  return out;
}

}  // namespace pwrules::formats
