#include "vocabforge/corpus.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vocabforge/kernels.hpp"

#include "binio.hpp"

namespace vocabforge {

using nlohmann::json;

namespace {

constexpr char kFeatureMagic[4] = {'V', 'C', 'D', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

using binio::ByteReader;
using binio::put_f32;
using binio::put_u16;
using binio::put_u32;
using binio::read_file;
using binio::write_file;

void check_rows(const FeatureMatrix& m, const std::string& path) {
  std::unordered_map<ImageId, std::size_t> seen;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (m.ids[r].empty()) throw Error(path + ": empty image id at row " + std::to_string(r));
    if (!seen.emplace(m.ids[r], r).second)
      throw Error(path + ": duplicate id \"" + m.ids[r] + "\" at row " + std::to_string(r));
    for (float v : m.row(r)) {
      if (!std::isfinite(v))
        throw Error(path + ": non-finite value at row " + std::to_string(r) + " (id \"" +
                    m.ids[r] + "\")");
    }
  }
}

}  // namespace

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::unordered_map<ImageId, std::size_t> id_index(const FeatureMatrix& m) {
  std::unordered_map<ImageId, std::size_t> idx;
  idx.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) idx.emplace(m.ids[r], r);
  return idx;
}

FeatureMatrix subset(const FeatureMatrix& m, const std::vector<ImageId>& ids) {
  const auto idx = id_index(m);
  FeatureMatrix out;
  out.dim = m.dim;
  out.ids.reserve(ids.size());
  out.data.reserve(ids.size() * m.dim);
  for (const auto& id : ids) {
    auto it = idx.find(id);
    if (it == idx.end()) throw Error("subset: unknown image id \"" + id + "\"");
    out.ids.push_back(id);
    const auto row = m.row(it->second);
    out.data.insert(out.data.end(), row.begin(), row.end());
  }
  return out;
}

const std::vector<float>* EmbeddingTable::find(const std::string& word) const {
  auto it = entries.find(lowercase(word));
  return it == entries.end() ? nullptr : &it->second;
}

FeatureMatrix load_features(const std::string& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0)
    throw Error(path + ": malformed header (bad magic, expected VCDF)");
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kFeatureVersion)
    throw Error(path + ": malformed header (unsupported version " + std::to_string(version) + ")");
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim == 0) throw Error(path + ": malformed header (dim must be positive)");

  FeatureMatrix m;
  m.dim = dim;
  m.ids.reserve(count);
  m.data.reserve(static_cast<std::size_t>(count) * dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t idlen = r.u16();
    m.ids.push_back(r.str(idlen));
    for (std::uint32_t d = 0; d < dim; ++d) m.data.push_back(r.f32());
  }
  if (!r.exhausted()) throw Error(path + ": dimension mismatch (trailing bytes after payload)");
  check_rows(m, path);
  return m;
}

void write_features(const std::string& path, const FeatureMatrix& m) {
  if (m.data.size() != m.rows() * m.dim) throw Error("write_features: inconsistent matrix shape");
  std::string out;
  out.reserve(16 + m.data.size() * 4);
  out.append(kFeatureMagic, 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.dim));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (m.ids[r].size() > 0xffff) throw Error("write_features: id too long");
    put_u16(out, static_cast<std::uint16_t>(m.ids[r].size()));
    out.append(m.ids[r]);
    for (float v : m.row(r)) put_f32(out, v);
  }
  write_file(path, out);
}

FeatureMatrix import_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open file");
  FeatureMatrix m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) throw Error(path + ": malformed record at line " + std::to_string(lineno));
    m.ids.push_back(cell);
    std::size_t d = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        m.data.push_back(std::stof(cell));
      } catch (const std::exception&) {
        throw Error(path + ": bad number at line " + std::to_string(lineno));
      }
      ++d;
    }
    if (m.dim == 0) {
      if (d == 0) throw Error(path + ": row without values at line " + std::to_string(lineno));
      m.dim = d;
    } else if (d != m.dim) {
      throw Error(path + ": dimension mismatch at line " + std::to_string(lineno) + " (got " +
                  std::to_string(d) + ", expected " + std::to_string(m.dim) + ")");
    }
  }
  check_rows(m, path);
  return m;
}

FeatureMatrix l2_normalize(FeatureMatrix m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double norm = std::sqrt(kernels::sumsq(std::span<const float>(row)));
    if (norm == 0.0) throw Error("l2_normalize: zero row for image \"" + m.ids[r] + "\"");
    kernels::scale(row, static_cast<float>(1.0 / norm));
  }
  return m;
}

std::vector<ParsedSentence> load_sentences(const std::string& path,
                                           const std::set<ImageId>* known_ids) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open file");
  std::vector<ParsedSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ": malformed record at line " + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(where + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("image") || !rec["image"].is_string())
      throw Error(where + ": missing image id");
    ParsedSentence s;
    s.image = rec["image"].get<std::string>();
    if (known_ids != nullptr && known_ids->count(s.image) == 0)
      throw Error(path + ": unknown image id \"" + s.image + "\" at line " + std::to_string(lineno));

    std::set<std::string> lemmas;
    for (const auto& tok : rec.value("tokens", json::array())) {
      if (!tok.is_array() || tok.size() != 3) throw Error(where + ": token is not a triple");
      Token t{tok[0].get<std::string>(), lowercase(tok[1].get<std::string>()),
              lowercase(tok[2].get<std::string>())};
      if (t.lemma.empty() || t.lemma.find(' ') != std::string::npos)
        throw Error(where + ": bad lemma \"" + t.lemma + "\"");
      lemmas.insert(t.lemma);
      s.tokens.push_back(std::move(t));
    }
    for (const auto& dep : rec.value("deps", json::array())) {
      if (!dep.is_array() || dep.size() != 3) throw Error(where + ": dependency is not a triple");
      SentenceDependency d{dep[0].get<std::string>(), lowercase(dep[1].get<std::string>()),
                           lowercase(dep[2].get<std::string>())};
      for (char c : d.label) {
        if (static_cast<unsigned char>(c) > 0x7f)
          throw Error(where + ": non-ASCII relation label");
      }
      d.label = lowercase(d.label);
      if (lemmas.count(d.governor) == 0)
        throw Error(where + ": dependency references absent lemma \"" + d.governor + "\"");
      if (lemmas.count(d.dependent) == 0)
        throw Error(where + ": dependency references absent lemma \"" + d.dependent + "\"");
      s.deps.push_back(std::move(d));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_sentences(const std::string& path, std::span<const ParsedSentence> sentences) {
  std::string out;
  for (const auto& s : sentences) {
    json rec;
    rec["image"] = s.image;
    json tokens = json::array();
    for (const auto& t : s.tokens) tokens.push_back(json::array({t.surface, t.lemma, t.pos}));
    rec["tokens"] = tokens;
    json deps = json::array();
    for (const auto& d : s.deps) deps.push_back(json::array({d.label, d.governor, d.dependent}));
    rec["deps"] = deps;
    out += rec.dump();
    out += '\n';
  }
  write_file(path, out);
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open file");
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string word;
    ss >> word;
    if (word.empty()) continue;
    std::vector<float> vec;
    double v;
    while (ss >> v) vec.push_back(static_cast<float>(v));
    if (vec.empty()) throw Error(path + ": no values at line " + std::to_string(lineno));
    if (table.dim == 0) {
      table.dim = vec.size();
    } else if (vec.size() != table.dim) {
      throw Error(path + ": inconsistent dimension at line " + std::to_string(lineno) + " (got " +
                  std::to_string(vec.size()) + ", expected " + std::to_string(table.dim) + ")");
    }
    // duplicates keep the first occurrence
    if (!table.entries.emplace(lowercase(word), std::move(vec)).second) ++table.duplicates_ignored;
  }
  if (table.entries.empty()) throw Error(path + ": empty embedding file");
  return table;
}

void write_embeddings(const std::string& path, const EmbeddingTable& table) {
  // sorted for reproducible output
  std::vector<std::string> words;
  words.reserve(table.entries.size());
  for (const auto& [w, _] : table.entries) words.push_back(w);
  std::sort(words.begin(), words.end());
  std::ostringstream out;
  out.precision(9);
  for (const auto& w : words) {
    out << w;
    for (float v : table.entries.at(w)) out << ' ' << v;
    out << '\n';
  }
  write_file(path, out.str());
}

CorpusSplit load_manifest(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": invalid manifest JSON: " + e.what());
  }
  CorpusSplit split;
  auto read_split = [&](const char* key, std::set<ImageId>& dst) {
    for (const auto& id : doc.value(key, json::array())) dst.insert(id.get<std::string>());
  };
  read_split("train", split.train);
  read_split("validation", split.validation);
  read_split("test", split.test);
  auto check_disjoint = [&](const std::set<ImageId>& a, const std::set<ImageId>& b,
                            const char* an, const char* bn) {
    for (const auto& id : a) {
      if (b.count(id))
        throw Error(path + ": splits " + an + " and " + bn + " overlap on \"" + id + "\"");
    }
  };
  check_disjoint(split.train, split.validation, "train", "validation");
  check_disjoint(split.train, split.test, "train", "test");
  check_disjoint(split.validation, split.test, "validation", "test");
  return split;
}

void write_manifest(const std::string& path, const CorpusSplit& split) {
  json doc;
  doc["train"] = split.train;
  doc["validation"] = split.validation;
  doc["test"] = split.test;
  write_file(path, doc.dump(2) + "\n");
}

}  // namespace vocabforge
