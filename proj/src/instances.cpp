#include "kcn/instances.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace kcn::instances {

namespace {

using corpus::DependencyGraph;
using corpus::DepToken;
using corpus::Document;
using corpus::Mention;
using corpus::MentionKind;

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool punctuation_only(const std::string& s) {
  if (s.empty()) return true;
  for (unsigned char c : s)
    if (!std::ispunct(c)) return false;
  return true;
}

// One node on the raw tree path. sentence == npos marks the artificial root
// joining two sentence trees.
struct PathNode {
  std::size_t sentence;
  std::size_t token;  // 1-based; 0 for the artificial root
};

struct PathEdge {
  bool upward;        // true when traversed child -> parent
  std::string label;  // dependency label of the child end of the edge
};

constexpr std::size_t kArtificial = static_cast<std::size_t>(-1);

std::vector<std::size_t> chain_to_root(const DependencyGraph& g, std::size_t tok) {
  std::vector<std::size_t> chain{tok};
  std::size_t cur = tok;
  while (g.tokens[cur - 1].head != 0) {
    cur = g.tokens[cur - 1].head;
    chain.push_back(cur);
  }
  return chain;
}

// Path between two tokens of one tree via their lowest common ancestor.
void tree_path(const DependencyGraph& g, std::size_t sent, std::size_t from, std::size_t to,
               std::vector<PathNode>& nodes, std::vector<PathEdge>& edges) {
  const std::vector<std::size_t> up_from = chain_to_root(g, from);
  const std::vector<std::size_t> up_to = chain_to_root(g, to);
  std::size_t i = up_from.size(), j = up_to.size();
  while (i > 1 && j > 1 && up_from[i - 2] == up_to[j - 2]) {
    --i;
    --j;
  }
  // up_from[i-1] == up_to[j-1] is the LCA
  for (std::size_t a = 0; a + 1 < i; ++a) {
    nodes.push_back({sent, up_from[a]});
    edges.push_back({true, g.tokens[up_from[a] - 1].label});
  }
  nodes.push_back({sent, up_from[i - 1]});
  for (std::size_t b = j - 1; b > 0; --b) {
    edges.push_back({false, g.tokens[up_to[b - 1] - 1].label});
    nodes.push_back({sent, up_to[b - 1]});
  }
}

const DependencyGraph& sentence_at(const std::vector<DependencyGraph>& parses,
                                   std::size_t index) {
  for (const DependencyGraph& g : parses)
    if (g.sentence_index == index) return g;
  throw std::runtime_error("no dependency parse for sentence " + std::to_string(index));
}

}  // namespace

TokenRef align_mention(const Mention& mention,
                       const std::vector<DependencyGraph>& parses) {
  for (const DependencyGraph& g : parses) {
    std::vector<std::size_t> overlapping;  // 1-based token indices
    for (std::size_t t = 0; t < g.tokens.size(); ++t) {
      const DepToken& tok = g.tokens[t];
      if (!tok.has_offsets())
        throw std::runtime_error("align_mention: parse tokens carry no character offsets");
      if (tok.char_begin < mention.end && mention.begin < tok.char_end)
        overlapping.push_back(t + 1);
    }
    if (overlapping.empty()) continue;
    const std::set<std::size_t> in_span(overlapping.begin(), overlapping.end());
    for (std::size_t idx : overlapping) {
      const std::size_t head = g.tokens[idx - 1].head;
      if (head == 0 || !in_span.count(head)) return {g.sentence_index, idx};
    }
    return {g.sentence_index, overlapping.front()};  // all heads internal: degenerate span
  }
  throw std::runtime_error("mention '" + mention.surface + "' [" +
                           std::to_string(mention.begin) + "," + std::to_string(mention.end) +
                           ") overlaps no parsed token");
}

std::vector<SdpToken> sdp_sequence(TokenRef chem, TokenRef dis,
                                   const std::vector<DependencyGraph>& parses) {
  if (chem == dis) throw std::runtime_error("sdp_sequence: degenerate path, endpoints identical");

  std::vector<PathNode> nodes;
  std::vector<PathEdge> edges;
  if (chem.sentence == dis.sentence) {
    tree_path(sentence_at(parses, chem.sentence), chem.sentence, chem.token, dis.token, nodes,
              edges);
  } else {
    // join the two trees under an artificial root; its edges carry label "root"
    const DependencyGraph& gc = sentence_at(parses, chem.sentence);
    const DependencyGraph& gd = sentence_at(parses, dis.sentence);
    for (std::size_t cur : chain_to_root(gc, chem.token)) {
      nodes.push_back({chem.sentence, cur});
      edges.push_back({true, gc.tokens[cur - 1].label});
    }
    // rewrite the sentence-root edge labels: they now attach to the new root
    edges.back().label = "root";
    nodes.push_back({kArtificial, 0});
    std::vector<std::size_t> down = chain_to_root(gd, dis.token);
    std::reverse(down.begin(), down.end());
    edges.push_back({false, "root"});
    nodes.push_back({dis.sentence, down.front()});
    for (std::size_t b = 1; b < down.size(); ++b) {
      edges.push_back({false, gd.tokens[down[b] - 1].label});
      nodes.push_back({dis.sentence, down[b]});
    }
  }

  auto word_of = [&](const PathNode& n) -> std::string {
    const DependencyGraph& g = sentence_at(parses, n.sentence);
    return lowercase(g.tokens[n.token - 1].surface);
  };

  // keep both endpoints; drop artificial and punctuation-only interior nodes
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i == 0 || i + 1 == nodes.size()) {
      kept.push_back(i);
      continue;
    }
    if (nodes[i].sentence == kArtificial) continue;
    if (punctuation_only(word_of(nodes[i]))) continue;
    kept.push_back(i);
  }

  // between consecutive kept nodes emit the first edge of the gap, preserving
  // the Word (Dir Label Dir Word)* shape when nodes were skipped
  std::vector<SdpToken> out;
  out.push_back({TokenKind::Word, word_of(nodes[kept[0]])});
  for (std::size_t s = 1; s < kept.size(); ++s) {
    const PathEdge& e = edges[kept[s - 1]];
    const std::string& arrow = e.upward ? kUpArrow : kDownArrow;
    out.push_back({TokenKind::Direction, arrow});
    out.push_back({TokenKind::DepLabel, e.label});
    out.push_back({TokenKind::Direction, arrow});
    out.push_back({TokenKind::Word, word_of(nodes[kept[s]])});
  }
  return out;
}

namespace {

Label label_for(const Document& doc, const std::string& chem, const std::string& dis) {
  for (const corpus::GoldRelation& r : doc.gold_relations)
    if (r.chemical_id == chem && r.disease_id == dis) return Label::Cid;
  return Label::Null;
}

struct AlignedMention {
  const Mention* mention;
  TokenRef token;
};

std::vector<AlignedMention> align_all(const Document& doc,
                                      const std::vector<DependencyGraph>& parses,
                                      MentionKind kind) {
  std::vector<AlignedMention> out;
  for (const Mention& m : doc.mentions)
    if (m.kind == kind) out.push_back({&m, align_mention(m, parses)});
  return out;
}

}  // namespace

std::vector<CandidateInstance> build_intra(const Document& doc,
                                           const std::vector<DependencyGraph>& parses) {
  std::vector<CandidateInstance> out;
  const auto chems = align_all(doc, parses, MentionKind::Chemical);
  const auto diss = align_all(doc, parses, MentionKind::Disease);
  for (const AlignedMention& c : chems) {
    for (const AlignedMention& d : diss) {
      if (c.token.sentence != d.token.sentence) continue;
      if (c.token == d.token) continue;
      const std::vector<SdpToken> sdp = sdp_sequence(c.token, d.token, parses);
      for (const std::string& cid : c.mention->concept_ids) {
        for (const std::string& did : d.mention->concept_ids) {
          CandidateInstance inst;
          inst.doc_id = doc.doc_id;
          inst.chemical_id = cid;
          inst.disease_id = did;
          inst.chemical_token = c.token;
          inst.disease_token = d.token;
          inst.level = Level::Intra;
          inst.sdp = sdp;
          inst.label = label_for(doc, cid, did);
          out.push_back(std::move(inst));
        }
      }
    }
  }
  return out;
}

std::vector<CandidateInstance> build_inter(const Document& doc,
                                           const std::vector<DependencyGraph>& parses,
                                           const std::vector<CandidateInstance>& intra) {
  std::set<std::pair<std::string, std::string>> intra_pairs;
  for (const CandidateInstance& inst : intra)
    if (inst.doc_id == doc.doc_id) intra_pairs.insert({inst.chemical_id, inst.disease_id});

  const auto chems = align_all(doc, parses, MentionKind::Chemical);
  const auto diss = align_all(doc, parses, MentionKind::Disease);

  struct MentionPair {
    const AlignedMention* chem;
    const AlignedMention* dis;
    std::size_t sentence_gap;
    std::size_t char_gap;
  };
  std::map<std::pair<std::string, std::string>, std::vector<MentionPair>> by_pair;
  for (const AlignedMention& c : chems) {
    for (const AlignedMention& d : diss) {
      if (c.token.sentence == d.token.sentence) continue;
      const std::size_t gap = c.token.sentence > d.token.sentence
                                  ? c.token.sentence - d.token.sentence
                                  : d.token.sentence - c.token.sentence;
      if (gap > 3) continue;  // rule (2): sentence distance more than 3
      const std::size_t cgap = c.mention->begin > d.mention->begin
                                   ? c.mention->begin - d.mention->begin
                                   : d.mention->begin - c.mention->begin;
      for (const std::string& cid : c.mention->concept_ids)
        for (const std::string& did : d.mention->concept_ids)
          by_pair[{cid, did}].push_back({&c, &d, gap, cgap});
    }
  }

  std::vector<CandidateInstance> out;
  for (auto& [pair, candidates] : by_pair) {
    if (intra_pairs.count(pair)) continue;  // rule (1)
    // rule (3): nearest mention pair only
    const MentionPair* best = &candidates.front();
    for (const MentionPair& mp : candidates) {
      const auto key = std::tuple(mp.sentence_gap, mp.char_gap, mp.chem->mention->begin,
                                  mp.dis->mention->begin);
      const auto best_key = std::tuple(best->sentence_gap, best->char_gap,
                                       best->chem->mention->begin, best->dis->mention->begin);
      if (key < best_key) best = &mp;
    }
    CandidateInstance inst;
    inst.doc_id = doc.doc_id;
    inst.chemical_id = pair.first;
    inst.disease_id = pair.second;
    inst.chemical_token = best->chem->token;
    inst.disease_token = best->dis->token;
    inst.level = Level::Inter;
    inst.sdp = sdp_sequence(best->chem->token, best->dis->token, parses);
    inst.label = label_for(doc, pair.first, pair.second);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<CandidateInstance> hypernym_filter(const std::vector<CandidateInstance>& instances,
                                               const corpus::MeshHierarchy& mesh) {
  std::map<std::string, std::set<std::string>> chems_by_doc, diss_by_doc;
  for (const CandidateInstance& inst : instances) {
    chems_by_doc[inst.doc_id].insert(inst.chemical_id);
    diss_by_doc[inst.doc_id].insert(inst.disease_id);
  }
  auto is_hyper = [&](const std::string& id, const std::set<std::string>& peers) {
    for (const std::string& other : peers)
      if (other != id && mesh.is_ancestor(id, other)) return true;
    return false;
  };
  std::vector<CandidateInstance> out;
  for (const CandidateInstance& inst : instances) {
    if (is_hyper(inst.chemical_id, chems_by_doc[inst.doc_id])) continue;
    if (is_hyper(inst.disease_id, diss_by_doc[inst.doc_id])) continue;
    out.push_back(inst);
  }
  return out;
}

InstanceSet build_instances(const Document& doc,
                            const std::vector<DependencyGraph>& parses,
                            const corpus::MeshHierarchy& mesh) {
  InstanceSet set;
  std::vector<CandidateInstance> intra = build_intra(doc, parses);
  std::vector<CandidateInstance> inter = build_inter(doc, parses, intra);
  std::vector<CandidateInstance> all;
  all.reserve(intra.size() + inter.size());
  all.insert(all.end(), intra.begin(), intra.end());
  all.insert(all.end(), inter.begin(), inter.end());
  for (CandidateInstance& inst : hypernym_filter(all, mesh)) {
    (inst.level == Level::Intra ? set.intra : set.inter).push_back(std::move(inst));
  }
  return set;
}

std::string sdp_to_string(const std::vector<SdpToken>& sdp) {
  std::string out;
  for (std::size_t i = 0; i < sdp.size(); ++i) {
    if (i) out += ' ';
    out += sdp[i].text;
  }
  return out;
}

std::vector<SdpToken> sdp_from_string(const std::string& joined) {
  std::istringstream in(joined);
  std::vector<SdpToken> out;
  std::string tok;
  while (in >> tok) {
    SdpToken t;
    switch (out.size() % 4) {
      case 0:
        t.kind = TokenKind::Word;
        break;
      case 2:
        t.kind = TokenKind::DepLabel;
        break;
      default:
        t.kind = TokenKind::Direction;
        if (tok != kUpArrow && tok != kDownArrow)
          throw std::runtime_error("expected a direction arrow, got '" + tok + "'");
        break;
    }
    t.text = std::move(tok);
    out.push_back(std::move(t));
  }
  if (!sdp_pattern_valid(out)) throw std::runtime_error("malformed SDP sequence: " + joined);
  return out;
}

bool sdp_pattern_valid(const std::vector<SdpToken>& sdp) {
  if (sdp.empty() || sdp.size() % 4 != 1) return false;
  for (std::size_t i = 0; i < sdp.size(); ++i) {
    const TokenKind want = i % 4 == 0   ? TokenKind::Word
                           : i % 4 == 2 ? TokenKind::DepLabel
                                        : TokenKind::Direction;
    if (sdp[i].kind != want) return false;
    if (want == TokenKind::Direction && sdp[i].text != kUpArrow && sdp[i].text != kDownArrow)
      return false;
  }
  return true;
}

void write_instances(std::ostream& out, const std::vector<CandidateInstance>& instances) {
  for (const CandidateInstance& inst : instances) {
    out << inst.doc_id << '\t' << inst.chemical_id << '\t' << inst.disease_id << '\t'
        << (inst.level == Level::Intra ? "intra" : "inter") << '\t';
    if (!inst.label)
      out << '-';
    else
      out << (*inst.label == Label::Cid ? "CID" : "Null");
    out << '\t' << sdp_to_string(inst.sdp) << "\n";
  }
}

std::vector<CandidateInstance> read_instances(std::istream& in) {
  std::vector<CandidateInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (int i = 0; i < 5; ++i) {
      const std::size_t pos = line.find('\t', start);
      if (pos == std::string::npos)
        throw std::runtime_error("instance line " + std::to_string(line_no) +
                                 ": expected 6 tab-separated fields");
      f.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    f.push_back(line.substr(start));
    CandidateInstance inst;
    inst.doc_id = f[0];
    inst.chemical_id = f[1];
    inst.disease_id = f[2];
    if (f[3] == "intra")
      inst.level = Level::Intra;
    else if (f[3] == "inter")
      inst.level = Level::Inter;
    else
      throw std::runtime_error("instance line " + std::to_string(line_no) +
                               ": unknown level '" + f[3] + "'");
    if (f[4] == "CID")
      inst.label = Label::Cid;
    else if (f[4] == "Null")
      inst.label = Label::Null;
    else if (f[4] == "-")
      inst.label = std::nullopt;
    else
      throw std::runtime_error("instance line " + std::to_string(line_no) +
                               ": unknown label '" + f[4] + "'");
    inst.sdp = sdp_from_string(f[5]);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace kcn::instances
