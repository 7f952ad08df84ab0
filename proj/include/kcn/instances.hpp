#ifndef KCN_INSTANCES_HPP
#define KCN_INSTANCES_HPP

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kcn/corpus.hpp"

// Candidate-instance construction: aligning entity mentions onto parse tokens,
// building intra- and inter-sentence chemical-disease pairs, the negative
// filtering rules, hypernym filtering, and shortest-dependency-path rendering.

namespace kcn::instances {

enum class TokenKind { Word, DepLabel, Direction };

struct SdpToken {
  TokenKind kind = TokenKind::Word;
  std::string text;  // Word text lowercased; Direction text is "↑" or "↓"

  bool operator==(const SdpToken&) const = default;
};

enum class Level { Intra, Inter };
enum class Label { Cid, Null };

struct TokenRef {
  std::size_t sentence = 0;
  std::size_t token = 0;  // 1-based index into the sentence

  bool operator==(const TokenRef&) const = default;
};

struct CandidateInstance {
  std::string doc_id;
  std::string chemical_id;
  std::string disease_id;
  TokenRef chemical_token;
  TokenRef disease_token;
  Level level = Level::Intra;
  std::vector<SdpToken> sdp;
  std::optional<Label> label;
};

struct InstanceSet {
  std::vector<CandidateInstance> intra;
  std::vector<CandidateInstance> inter;
};

inline const std::string kUpArrow = "↑";
inline const std::string kDownArrow = "↓";

// ---- operations -----------------------------------------------------------------

// Token inside the mention span whose head lies outside the span (leftmost on
// ties). Throws when no parsed token overlaps the mention.
TokenRef align_mention(const corpus::Mention& mention,
                       const std::vector<corpus::DependencyGraph>& parses);

// Tree path between two tokens rendered as Word (Dir DepLabel Dir Word)*.
// Edges traversed child->parent emit "↑", parent->child "↓"; words are
// lowercased; punctuation-only interior words are skipped together with the
// rest of their gap's edges. For tokens in two different sentences the trees
// are joined under a fresh artificial root whose incident edges carry the
// label "root" and which contributes no word.
std::vector<SdpToken> sdp_sequence(TokenRef chem, TokenRef dis,
                                   const std::vector<corpus::DependencyGraph>& parses);

// One instance per co-sentential (chemical mention, disease mention) pair,
// expanded per concept id. Mentions that align onto the same token are skipped.
std::vector<CandidateInstance> build_intra(const corpus::Document& doc,
                                           const std::vector<corpus::DependencyGraph>& parses);

// Inter-sentence instances after the three negative-filtering rules:
//   (1) concept pairs already present at intra level are dropped,
//   (2) pairs with sentence gap > 3 are dropped,
//   (3) per concept pair only the nearest mention pair is kept, nearest being
//       (sentence gap, |char start gap|, chemical start) lexicographically.
std::vector<CandidateInstance> build_inter(const corpus::Document& doc,
                                           const std::vector<corpus::DependencyGraph>& parses,
                                           const std::vector<CandidateInstance>& intra);

// Removes instances whose chemical (resp. disease) concept is a strict
// ancestor of another chemical (resp. disease) concept participating in some
// instance of the same document. Single pass against the input set.
std::vector<CandidateInstance> hypernym_filter(const std::vector<CandidateInstance>& instances,
                                               const corpus::MeshHierarchy& mesh);

// Full per-document construction: intra + inter, hypernym filter, gold labels.
InstanceSet build_instances(const corpus::Document& doc,
                            const std::vector<corpus::DependencyGraph>& parses,
                            const corpus::MeshHierarchy& mesh);

// Line format: doc_id, chem_id, dis_id, level, label, space-joined SDP tokens
// (tab-separated fields). This file is the contract with the training pipeline.
void write_instances(std::ostream& out, const std::vector<CandidateInstance>& instances);
std::vector<CandidateInstance> read_instances(std::istream& in);

std::string sdp_to_string(const std::vector<SdpToken>& sdp);
std::vector<SdpToken> sdp_from_string(const std::string& joined);

// True iff the token list matches Word (Direction DepLabel Direction Word)*.
bool sdp_pattern_valid(const std::vector<SdpToken>& sdp);

}  // namespace kcn::instances

#endif
