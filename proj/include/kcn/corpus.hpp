#ifndef KCN_CORPUS_HPP
#define KCN_CORPUS_HPP

#include <cstddef>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

// Corpus ingestion: PubTator documents, CoNLL dependency parses, a flat
// child->parent concept hierarchy, word2vec-style embedding files, and the
// corpus statistics table. All loaders are pure functions of their streams;
// the loaded values are immutable after construction.

namespace kcn::corpus {

enum class MentionKind { Chemical, Disease };

struct Mention {
  std::size_t begin = 0;  // character offsets into title + " " + abstract
  std::size_t end = 0;    // half-open
  std::string surface;
  MentionKind kind = MentionKind::Chemical;
  std::vector<std::string> concept_ids;  // non-empty; composite fields split on '|'

  bool operator==(const Mention&) const = default;
};

struct GoldRelation {
  std::string chemical_id;
  std::string disease_id;

  auto operator<=>(const GoldRelation&) const = default;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::string abstract;
  std::vector<Mention> mentions;
  std::vector<GoldRelation> gold_relations;  // deduplicated, sorted

  std::string text() const { return title + " " + abstract; }

  bool operator==(const Document&) const = default;
};

struct DepToken {
  std::string surface;
  std::size_t head = 0;  // 1-based head index, 0 = root
  std::string label;
  std::size_t char_begin = kNoOffset;  // offsets into the document text, when known
  std::size_t char_end = kNoOffset;

  static constexpr std::size_t kNoOffset = static_cast<std::size_t>(-1);
  bool has_offsets() const { return char_begin != kNoOffset; }
};

struct DependencyGraph {
  std::size_t sentence_index = 0;
  std::vector<DepToken> tokens;  // 1-based heads point into this list

  std::size_t root() const;  // 1-based index of the head-0 token
};

struct MeshHierarchy {
  std::set<std::pair<std::string, std::string>> parent_edges;  // (child, parent)
  std::map<std::string, std::vector<std::string>> parents;     // child -> parents

  // True iff `a` is a strict ancestor of `b`. Throws if a cycle is found.
  bool is_ancestor(const std::string& a, const std::string& b) const;
};

struct WordEmbeddingTable {
  std::size_t dimension = 0;
  std::map<std::string, std::vector<double>> vectors;
  std::vector<double> unk_vector;  // mean of all loaded vectors

  // Lowercases the query; absent words fall back to unk_vector.
  const std::vector<double>& lookup(const std::string& word) const;
  // Exact-key access with no case folding (used for entity/relation tables).
  const std::vector<double>* find_exact(const std::string& key) const;
};

struct CorpusStats {
  std::size_t articles = 0;
  std::size_t chemical_mentions = 0;
  std::size_t chemical_ids = 0;
  std::size_t disease_mentions = 0;
  std::size_t disease_ids = 0;
  std::size_t cid_count = 0;

  bool operator==(const CorpusStats&) const = default;
};

// ---- loaders -------------------------------------------------------------------

// PubTator blocks: "id|t|...", "id|a|...", tab-separated mention and CID lines,
// separated by blank lines. Composite MeSH fields ("D1|D2") become
// multi-concept mentions. Malformed input throws with line number and field.
std::vector<Document> parse_pubtator(std::istream& in);

void write_pubtator(std::ostream& out, const std::vector<Document>& docs);

// Blank-line-separated sentences of rows "index<TAB>surface<TAB>head<TAB>label"
// with optional trailing "<TAB>begin<TAB>end" columns; "#doc <id>" comment lines
// mark document boundaries. Trees are validated (single root, acyclic).
std::map<std::string, std::vector<DependencyGraph>> parse_conll(std::istream& in);

// Fills in missing token offsets by greedy case-insensitive matching of the
// token surfaces against the document text. Throws when a surface cannot be
// found; already-present offsets are left untouched.
void derive_char_spans(const Document& doc, std::vector<DependencyGraph>& parses);

// Tab-separated child<TAB>parent rows. Self-edges are rejected immediately;
// cycles are detected on ancestor queries.
MeshHierarchy load_mesh_hierarchy(std::istream& in);

// word2vec text format: header "count dim", rows "word v1 ... vd".
// expected_d == 0 accepts whatever the header declares.
WordEmbeddingTable load_word_embeddings(std::istream& in, std::size_t expected_d);

void write_word_embeddings(std::ostream& out,
                           const std::map<std::string, std::vector<double>>& vectors,
                           std::size_t dimension);

CorpusStats corpus_stats(const std::vector<Document>& docs);

// TSV mirroring the dataset statistics table column order.
void write_stats_tsv(std::ostream& out, const std::string& dataset_name,
                     const CorpusStats& stats);

}  // namespace kcn::corpus

#endif
