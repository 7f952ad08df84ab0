#include "kcn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kcn::corpus {

namespace {

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": " + what);
}

std::size_t parse_size(const std::string& s, std::size_t line_no, const char* field) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    parse_fail(line_no, std::string("field '") + field + "' is not a non-negative integer: " + s);
  }
}

std::vector<std::string> split_concepts(const std::string& field, std::size_t line_no) {
  std::vector<std::string> ids = split(field, '|');
  for (const std::string& id : ids)
    if (id.empty()) parse_fail(line_no, "empty concept id in '" + field + "'");
  return ids;
}

void validate_document(Document& doc) {
  const std::string text = doc.text();
  std::set<std::string> concept_ids;
  for (const Mention& m : doc.mentions) {
    if (m.begin >= m.end)
      throw std::runtime_error("document " + doc.doc_id + ": mention span [" +
                               std::to_string(m.begin) + "," + std::to_string(m.end) +
                               ") is empty or inverted");
    if (m.end > text.size())
      throw std::runtime_error("document " + doc.doc_id + ": mention span [" +
                               std::to_string(m.begin) + "," + std::to_string(m.end) +
                               ") outside text of length " + std::to_string(text.size()));
    for (const std::string& id : m.concept_ids) concept_ids.insert(id);
  }
  std::sort(doc.gold_relations.begin(), doc.gold_relations.end());
  doc.gold_relations.erase(std::unique(doc.gold_relations.begin(), doc.gold_relations.end()),
                           doc.gold_relations.end());
  for (const GoldRelation& r : doc.gold_relations) {
    if (!concept_ids.count(r.chemical_id) || !concept_ids.count(r.disease_id))
      throw std::runtime_error("document " + doc.doc_id + ": relation (" + r.chemical_id +
                               ", " + r.disease_id + ") names a concept with no mention");
  }
}

}  // namespace

std::size_t DependencyGraph::root() const {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].head == 0) return i + 1;
  throw std::logic_error("dependency graph has no root");
}

bool MeshHierarchy::is_ancestor(const std::string& a, const std::string& b) const {
  if (a == b) return false;
  static const std::vector<std::string> kNoParents;
  // colored DFS upward from b: an edge into a node still on the stack is a cycle
  std::map<std::string, int> color;  // 1 = on stack, 2 = done
  std::vector<std::pair<std::string, std::size_t>> stack;
  stack.emplace_back(b, 0);
  color[b] = 1;
  while (!stack.empty()) {
    const std::string node = stack.back().first;
    const std::size_t next = stack.back().second;
    auto it = parents.find(node);
    const std::vector<std::string>& ps = it == parents.end() ? kNoParents : it->second;
    if (next == ps.size()) {
      color[node] = 2;
      stack.pop_back();
      continue;
    }
    stack.back().second += 1;
    const std::string& p = ps[next];
    if (p == a) return true;
    auto cit = color.find(p);
    if (cit != color.end() && cit->second == 1)
      throw std::runtime_error("hierarchy cycle detected through concept " + p);
    if (cit == color.end()) {
      color[p] = 1;
      stack.emplace_back(p, 0);
    }
  }
  return false;
}

const std::vector<double>& WordEmbeddingTable::lookup(const std::string& word) const {
  auto it = vectors.find(lowercase(word));
  return it == vectors.end() ? unk_vector : it->second;
}

const std::vector<double>* WordEmbeddingTable::find_exact(const std::string& key) const {
  auto it = vectors.find(key);
  return it == vectors.end() ? nullptr : &it->second;
}

std::vector<Document> parse_pubtator(std::istream& in) {
  std::vector<Document> docs;
  Document cur;
  bool in_block = false;
  std::string line;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (!in_block) return;
    if (cur.title.empty() && cur.abstract.empty())
      throw std::runtime_error("document " + cur.doc_id + " has no title or abstract line");
    validate_document(cur);
    docs.push_back(std::move(cur));
    cur = Document{};
    in_block = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    // title/abstract lines use '|' separators and always have >= 2 pipes
    const std::size_t p1 = line.find('|');
    const std::size_t p2 = p1 == std::string::npos ? std::string::npos : line.find('|', p1 + 1);
    if (line.find('\t') == std::string::npos) {
      if (p2 == std::string::npos) parse_fail(line_no, "expected id|t|title or id|a|abstract");
      const std::string id = line.substr(0, p1);
      const std::string tag = line.substr(p1 + 1, p2 - p1 - 1);
      const std::string body = line.substr(p2 + 1);
      if (in_block && id != cur.doc_id)
        parse_fail(line_no, "doc id changed from " + cur.doc_id + " to " + id +
                                " without a blank separator line");
      cur.doc_id = id;
      in_block = true;
      if (tag == "t")
        cur.title = body;
      else if (tag == "a")
        cur.abstract = body;
      else
        parse_fail(line_no, "unknown section tag '" + tag + "'");
      continue;
    }

    const std::vector<std::string> f = split(line, '\t');
    if (!in_block) parse_fail(line_no, "annotation line before any title line");
    if (f[0] != cur.doc_id)
      parse_fail(line_no, "annotation doc id " + f[0] + " does not match block " + cur.doc_id);
    if (f.size() == 4 && f[1] == "CID") {
      cur.gold_relations.push_back({f[2], f[3]});
    } else if (f.size() == 6) {
      Mention m;
      m.begin = parse_size(f[1], line_no, "start");
      m.end = parse_size(f[2], line_no, "end");
      if (m.end <= m.begin) parse_fail(line_no, "mention end <= start");
      m.surface = f[3];
      if (f[4] == "Chemical")
        m.kind = MentionKind::Chemical;
      else if (f[4] == "Disease")
        m.kind = MentionKind::Disease;
      else
        parse_fail(line_no, "unknown mention type '" + f[4] + "'");
      m.concept_ids = split_concepts(f[5], line_no);
      cur.mentions.push_back(std::move(m));
    } else {
      parse_fail(line_no, "expected 6-field mention line or 4-field CID line, got " +
                              std::to_string(f.size()) + " fields");
    }
  }
  flush();
  return docs;
}

void write_pubtator(std::ostream& out, const std::vector<Document>& docs) {
  for (const Document& d : docs) {
    out << d.doc_id << "|t|" << d.title << "\n";
    out << d.doc_id << "|a|" << d.abstract << "\n";
    for (const Mention& m : d.mentions) {
      out << d.doc_id << '\t' << m.begin << '\t' << m.end << '\t' << m.surface << '\t'
          << (m.kind == MentionKind::Chemical ? "Chemical" : "Disease") << '\t';
      for (std::size_t i = 0; i < m.concept_ids.size(); ++i) {
        if (i) out << '|';
        out << m.concept_ids[i];
      }
      out << "\n";
    }
    for (const GoldRelation& r : d.gold_relations)
      out << d.doc_id << "\tCID\t" << r.chemical_id << '\t' << r.disease_id << "\n";
    out << "\n";
  }
}

namespace {

void validate_tree(const DependencyGraph& g, std::size_t line_no) {
  const std::size_t n = g.tokens.size();
  std::size_t roots = 0;
  for (const DepToken& t : g.tokens) {
    if (t.head > n)
      parse_fail(line_no, "head index " + std::to_string(t.head) + " out of range [0," +
                              std::to_string(n) + "]");
    if (t.head == 0) ++roots;
  }
  if (roots != 1)
    parse_fail(line_no, "sentence must have exactly one root token, found " +
                            std::to_string(roots));
  for (std::size_t start = 1; start <= n; ++start) {
    std::size_t cur = start, steps = 0;
    while (cur != 0) {
      cur = g.tokens[cur - 1].head;
      if (++steps > n) parse_fail(line_no, "cyclic head chain involving token " +
                                               std::to_string(start));
    }
  }
}

}  // namespace

std::map<std::string, std::vector<DependencyGraph>> parse_conll(std::istream& in) {
  std::map<std::string, std::vector<DependencyGraph>> out;
  std::string cur_doc;
  DependencyGraph sent;
  std::string line;
  std::size_t line_no = 0, sent_first_line = 0;

  auto flush_sentence = [&] {
    if (sent.tokens.empty()) return;
    if (cur_doc.empty()) parse_fail(sent_first_line, "token rows before any #doc line");
    validate_tree(sent, sent_first_line);
    sent.sentence_index = out[cur_doc].size();
    out[cur_doc].push_back(std::move(sent));
    sent = DependencyGraph{};
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush_sentence();
      continue;
    }
    if (line[0] == '#') {
      flush_sentence();
      std::istringstream hs(line.substr(1));
      std::string tag, id;
      hs >> tag >> id;
      if (tag != "doc" || id.empty()) parse_fail(line_no, "expected '#doc <id>' comment");
      cur_doc = id;
      out[cur_doc];  // a document may legitimately have zero sentences
      continue;
    }
    const std::vector<std::string> f = split(line, '\t');
    if (f.size() != 4 && f.size() != 6)
      parse_fail(line_no, "expected 4 or 6 tab-separated fields, got " +
                              std::to_string(f.size()));
    if (sent.tokens.empty()) sent_first_line = line_no;
    const std::size_t idx = parse_size(f[0], line_no, "index");
    if (idx != sent.tokens.size() + 1)
      parse_fail(line_no, "token index " + f[0] + " is not sequential");
    DepToken t;
    t.surface = f[1];
    t.head = parse_size(f[2], line_no, "head");
    t.label = f[3];
    if (f.size() == 6) {
      t.char_begin = parse_size(f[4], line_no, "begin");
      t.char_end = parse_size(f[5], line_no, "end");
      if (t.char_end <= t.char_begin) parse_fail(line_no, "token end <= start");
    }
    sent.tokens.push_back(std::move(t));
  }
  flush_sentence();
  return out;
}

void derive_char_spans(const Document& doc, std::vector<DependencyGraph>& parses) {
  const std::string text = lowercase(doc.text());
  std::size_t cursor = 0;
  for (DependencyGraph& g : parses) {
    for (DepToken& t : g.tokens) {
      if (t.has_offsets()) {
        cursor = std::max(cursor, t.char_end);
        continue;
      }
      const std::string needle = lowercase(t.surface);
      const std::size_t pos = text.find(needle, cursor);
      if (pos == std::string::npos)
        throw std::runtime_error("document " + doc.doc_id + ": token '" + t.surface +
                                 "' not found in text after offset " + std::to_string(cursor));
      t.char_begin = pos;
      t.char_end = pos + needle.size();
      cursor = t.char_end;
    }
  }
}

MeshHierarchy load_mesh_hierarchy(std::istream& in) {
  MeshHierarchy h;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, '\t');
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      parse_fail(line_no, "expected child<TAB>parent");
    if (f[0] == f[1]) parse_fail(line_no, "self-edge on " + f[0]);
    if (h.parent_edges.insert({f[0], f[1]}).second) h.parents[f[0]].push_back(f[1]);
  }
  return h;
}

WordEmbeddingTable load_word_embeddings(std::istream& in, std::size_t expected_d) {
  WordEmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw std::runtime_error("embedding file is empty");
  ++line_no;
  std::istringstream header(line);
  std::size_t declared_count = 0, d = 0;
  if (!(header >> declared_count >> d) || d == 0)
    parse_fail(line_no, "expected header 'count dimension'");
  if (expected_d != 0 && d != expected_d)
    parse_fail(line_no, "dimension " + std::to_string(d) + " does not match expected " +
                            std::to_string(expected_d));
  table.dimension = d;
  std::vector<double> sum(d, 0.0);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string word;
    row >> word;
    std::vector<double> vec(d);
    for (std::size_t i = 0; i < d; ++i) {
      if (!(row >> vec[i]))
        parse_fail(line_no, "word '" + word + "' has fewer than " + std::to_string(d) +
                                " numeric components");
    }
    std::string extra;
    if (row >> extra)
      parse_fail(line_no, "word '" + word + "' has more than " + std::to_string(d) +
                              " components");
    for (std::size_t i = 0; i < d; ++i) sum[i] += vec[i];
    table.vectors.emplace(std::move(word), std::move(vec));
  }
  if (table.vectors.empty()) throw std::runtime_error("embedding file has no vectors");
  if (declared_count != table.vectors.size())
    throw std::runtime_error("embedding header declares " + std::to_string(declared_count) +
                             " vectors but file has " + std::to_string(table.vectors.size()));
  table.unk_vector.resize(d);
  for (std::size_t i = 0; i < d; ++i)
    table.unk_vector[i] = sum[i] / static_cast<double>(table.vectors.size());
  return table;
}

void write_word_embeddings(std::ostream& out,
                           const std::map<std::string, std::vector<double>>& vectors,
                           std::size_t dimension) {
  out << vectors.size() << ' ' << dimension << "\n";
  char buf[48];
  for (const auto& [word, vec] : vectors) {
    out << word;
    for (double v : vec) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ' ' << buf;
    }
    out << "\n";
  }
}

CorpusStats corpus_stats(const std::vector<Document>& docs) {
  CorpusStats s;
  std::set<std::string> chem_ids, dis_ids;
  s.articles = docs.size();
  for (const Document& d : docs) {
    for (const Mention& m : d.mentions) {
      auto& ids = m.kind == MentionKind::Chemical ? chem_ids : dis_ids;
      for (const std::string& id : m.concept_ids) ids.insert(id);
      if (m.kind == MentionKind::Chemical)
        ++s.chemical_mentions;
      else
        ++s.disease_mentions;
    }
    s.cid_count += d.gold_relations.size();
  }
  s.chemical_ids = chem_ids.size();
  s.disease_ids = dis_ids.size();
  return s;
}

void write_stats_tsv(std::ostream& out, const std::string& dataset_name,
                     const CorpusStats& s) {
  out << "Dataset\tArticles\tChemicalMen\tChemicalID\tDiseaseMen\tDiseaseID\tCID\n";
  out << dataset_name << '\t' << s.articles << '\t' << s.chemical_mentions << '\t'
      << s.chemical_ids << '\t' << s.disease_mentions << '\t' << s.disease_ids << '\t'
      << s.cid_count << "\n";
}

}  // namespace kcn::corpus
