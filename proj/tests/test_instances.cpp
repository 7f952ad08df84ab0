#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "kcn/instances.hpp"
#include "test_support.hpp"

using namespace kcn;
using instances::CandidateInstance;
using instances::Label;
using instances::Level;
using instances::SdpToken;
using instances::TokenKind;
using testsup::DocFixture;
using testsup::make_doc;
using testsup::TokSpec;

namespace {

// Fig-style sentence: "Seizures were induced by pilocarpine injections in
// trained and non-trained control groups."
DocFixture fig_sentence() {
  return make_doc("fig", {{
                      {"Seizures", 3, "vmod"},
                      {"were", 3, "vmod"},
                      {"induced", 0, "root"},
                      {"by", 3, "vmod"},
                      {"pilocarpine", 6, "nmod"},
                      {"injections", 4, "pmod"},
                      {"in", 3, "vmod"},
                      {"trained", 12, "nmod"},
                      {"and", 8, "coord"},
                      {"non-trained", 8, "conj"},
                      {"control", 12, "nmod"},
                      {"groups", 7, "pmod"},
                      {".", 3, "punct"},
                  }});
}

std::string render(const std::vector<SdpToken>& sdp) { return instances::sdp_to_string(sdp); }

}  // namespace

TEST_CASE("single-token mention aligns onto that token") {
  DocFixture f = fig_sentence();
  f.add_mention(0, 5, 5, corpus::MentionKind::Chemical, {"C1"});
  const instances::TokenRef r = instances::align_mention(f.doc.mentions[0], f.parses);
  CHECK(r == instances::TokenRef{0, 5});
}

TEST_CASE("multi-token mention aligns onto the span head") {
  // "control groups": control -> groups (inside), groups -> in (outside)
  DocFixture f = fig_sentence();
  f.add_mention(0, 11, 12, corpus::MentionKind::Disease, {"D1"});
  const instances::TokenRef r = instances::align_mention(f.doc.mentions[0], f.parses);
  CHECK(r == instances::TokenRef{0, 12});
}

TEST_CASE("mention overlapping no token is an alignment error") {
  DocFixture f = fig_sentence();
  corpus::Mention m;
  m.begin = 9000;
  m.end = 9004;
  m.surface = "none";
  m.kind = corpus::MentionKind::Chemical;
  m.concept_ids = {"C1"};
  CHECK_THROWS(instances::align_mention(m, f.parses));
}

TEST_CASE("published example sequence reproduces verbatim") {
  DocFixture f = fig_sentence();
  const auto sdp = instances::sdp_sequence({0, 5}, {0, 1}, f.parses);
  CHECK(render(sdp) ==
        "pilocarpine ↑ nmod ↑ injections ↑ pmod ↑ by ↑ vmod ↑ "
        "induced ↓ vmod ↓ seizures");
  CHECK(instances::sdp_pattern_valid(sdp));
}

TEST_CASE("chain through a common head renders up then down") {
  DocFixture f = make_doc("t", {{
                                   {"X", 0, "root"},
                                   {"chem", 1, "L1"},
                                   {"dis", 1, "L2"},
                               }});
  const auto sdp = instances::sdp_sequence({0, 2}, {0, 3}, f.parses);
  CHECK(render(sdp) == "chem ↑ L1 ↑ x ↓ L2 ↓ dis");
}

TEST_CASE("identical endpoints raise a degenerate-path error") {
  DocFixture f = fig_sentence();
  CHECK_THROWS(instances::sdp_sequence({0, 3}, {0, 3}, f.parses));
}

TEST_CASE("missing sentence parse raises an error") {
  DocFixture f = fig_sentence();
  CHECK_THROWS(instances::sdp_sequence({0, 3}, {4, 1}, f.parses));
}

TEST_CASE("punctuation-only interior words are dropped with their trailing edge") {
  DocFixture f = make_doc("t", {{
                                   {"X", 0, "root"},
                                   {",", 1, "L2"},
                                   {"chem", 2, "L1"},
                                   {"dis", 1, "L3"},
                               }});
  const auto sdp = instances::sdp_sequence({0, 3}, {0, 4}, f.parses);
  CHECK(render(sdp) == "chem ↑ L1 ↑ x ↓ L3 ↓ dis");
  CHECK(instances::sdp_pattern_valid(sdp));
}

TEST_CASE("inter-sentence paths join over an artificial root labeled root") {
  DocFixture f = make_doc("t", {{
                                    {"goes", 0, "root"},
                                    {"aspirin", 1, "nmod"},
                                },
                                {
                                    {"falls", 0, "root"},
                                    {"fever", 1, "dobj"},
                                }});
  const auto sdp = instances::sdp_sequence({0, 2}, {1, 2}, f.parses);
  CHECK(render(sdp) ==
        "aspirin ↑ nmod ↑ goes ↑ root ↑ falls ↓ dobj ↓ fever");
  CHECK(instances::sdp_pattern_valid(sdp));
}

TEST_CASE("SDP word tokens agree with the BFS oracle on random trees") {
  std::mt19937_64 rng(12345);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 25)(rng);
    corpus::DependencyGraph g = testsup::random_tree(rng, n);
    std::vector<corpus::DependencyGraph> parses{g};
    std::size_t from = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    std::size_t to = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    if (from == to) continue;
    const auto sdp = instances::sdp_sequence({0, from}, {0, to}, parses);
    REQUIRE(instances::sdp_pattern_valid(sdp));
    const std::vector<std::size_t> oracle = testsup::bfs_tree_path(g, from, to);
    std::vector<std::string> oracle_words;
    for (std::size_t node : oracle) oracle_words.push_back(g.tokens[node - 1].surface);
    CHECK(testsup::sdp_words(sdp) == oracle_words);
  }
}

namespace {

DocFixture intra_pair_doc() {
  DocFixture f = make_doc("d1", {{
                                    {"Aspirin", 2, "sub"},
                                    {"causes", 0, "root"},
                                    {"asthma", 2, "obj"},
                                }});
  f.add_mention(0, 1, 1, corpus::MentionKind::Chemical, {"C1"});
  f.add_mention(0, 3, 3, corpus::MentionKind::Disease, {"D1"});
  return f;
}

}  // namespace

TEST_CASE("one co-sentential chemical-disease pair yields one intra instance") {
  DocFixture f = intra_pair_doc();
  f.add_gold("C1", "D1");
  const auto intra = instances::build_intra(f.doc, f.parses);
  REQUIRE(intra.size() == 1);
  CHECK(intra[0].level == Level::Intra);
  CHECK(intra[0].chemical_id == "C1");
  CHECK(intra[0].disease_id == "D1");
  CHECK(intra[0].label == Label::Cid);
  CHECK(render(intra[0].sdp) == "aspirin ↑ sub ↑ causes ↓ obj ↓ asthma");
}

TEST_CASE("pairs in different sentences yield no intra instances") {
  DocFixture f = make_doc("d2", {{
                                     {"Aspirin", 2, "sub"},
                                     {"helps", 0, "root"},
                                 },
                                 {
                                     {"asthma", 2, "sub"},
                                     {"recurs", 0, "root"},
                                 }});
  f.add_mention(0, 1, 1, corpus::MentionKind::Chemical, {"C1"});
  f.add_mention(1, 1, 1, corpus::MentionKind::Disease, {"D1"});
  CHECK(instances::build_intra(f.doc, f.parses).empty());
}

TEST_CASE("multi-concept chemical expands per concept id") {
  DocFixture f = make_doc("d3", {{
                                    {"Mix", 2, "sub"},
                                    {"causes", 0, "root"},
                                    {"asthma", 2, "obj"},
                                }});
  f.add_mention(0, 1, 1, corpus::MentionKind::Chemical, {"C1", "C2"});
  f.add_mention(0, 3, 3, corpus::MentionKind::Disease, {"D1"});
  const auto intra = instances::build_intra(f.doc, f.parses);
  // oracle: enumerate the concept pairs
  std::size_t expected = 0;
  for (const corpus::Mention& c : f.doc.mentions)
    if (c.kind == corpus::MentionKind::Chemical)
      for (const corpus::Mention& d : f.doc.mentions)
        if (d.kind == corpus::MentionKind::Disease)
          expected += c.concept_ids.size() * d.concept_ids.size();
  CHECK(intra.size() == expected);
  CHECK(expected == 2);
  CHECK(intra[0].chemical_id == "C1");
  CHECK(intra[1].chemical_id == "C2");
}

namespace {

// 1-sentence-per-line corpus: chem in sentence 0, disease in sentence `gap`.
DocFixture gapped_doc(std::size_t gap) {
  std::vector<std::vector<TokSpec>> sentences;
  sentences.push_back({{"Aspirin", 2, "sub"}, {"given", 0, "root"}});
  for (std::size_t s = 1; s < gap; ++s)
    sentences.push_back({{"Filler", 0, "root"}});
  sentences.push_back({{"asthma", 2, "sub"}, {"recurs", 0, "root"}});
  DocFixture f = make_doc("gap", sentences);
  f.add_mention(0, 1, 1, corpus::MentionKind::Chemical, {"C1"});
  f.add_mention(gap, 1, 1, corpus::MentionKind::Disease, {"D1"});
  return f;
}

}  // namespace

TEST_CASE("inter rule 2: sentence gap 4 is excluded, gap 3 is included") {
  {
    DocFixture f = gapped_doc(4);
    CHECK(instances::build_inter(f.doc, f.parses, {}).empty());
  }
  {
    DocFixture f = gapped_doc(3);
    const auto inter = instances::build_inter(f.doc, f.parses, {});
    REQUIRE(inter.size() == 1);
    CHECK(inter[0].level == Level::Inter);
  }
}

TEST_CASE("inter rule 1: a co-sentential concept pair suppresses inter instances") {
  // chem appears in sentence 0 with the disease (intra) and again in sentence 1
  DocFixture f = make_doc("r1", {{
                                     {"Aspirin", 2, "sub"},
                                     {"causes", 0, "root"},
                                     {"asthma", 2, "obj"},
                                 },
                                 {
                                     {"Aspirin", 2, "sub"},
                                     {"mentioned", 0, "root"},
                                 }});
  f.add_mention(0, 1, 1, corpus::MentionKind::Chemical, {"C1"});
  f.add_mention(0, 3, 3, corpus::MentionKind::Disease, {"D1"});
  f.add_mention(1, 1, 1, corpus::MentionKind::Chemical, {"C1"});
  const auto intra = instances::build_intra(f.doc, f.parses);
  REQUIRE(intra.size() == 1);
  CHECK(instances::build_inter(f.doc, f.parses, intra).empty());
}

TEST_CASE("inter rule 3: only the nearest mention pair of a concept pair is kept") {
  // disease in sentence 1; chem mentions in sentences 0 and 3: nearest is gap 1
  DocFixture f = make_doc("r3", {{
                                     {"Aspirin", 2, "sub"},
                                     {"given", 0, "root"},
                                 },
                                 {
                                     {"asthma", 2, "sub"},
                                     {"recurs", 0, "root"},
                                 },
                                 {
                                     {"Filler", 0, "root"},
                                 },
                                 {
                                     {"Aspirin", 2, "sub"},
                                     {"repeated", 0, "root"},
                                 }});
  f.add_mention(0, 1, 1, corpus::MentionKind::Chemical, {"C1"});
  f.add_mention(1, 1, 1, corpus::MentionKind::Disease, {"D1"});
  f.add_mention(3, 1, 1, corpus::MentionKind::Chemical, {"C1"});
  const auto inter = instances::build_inter(f.doc, f.parses, {});
  REQUIRE(inter.size() == 1);
  CHECK(inter[0].chemical_token.sentence == 0);
  // minimality: no other candidate mention pair is strictly nearer
  for (const corpus::Mention& c : f.doc.mentions) {
    if (c.kind != corpus::MentionKind::Chemical) continue;
    const auto ref = instances::align_mention(c, f.parses);
    const std::size_t gap = ref.sentence > 1 ? ref.sentence - 1 : 1 - ref.sentence;
    CHECK(gap >= 1);  // the kept pair has gap exactly 1
  }
}

TEST_CASE("hypernym filter drops the more general chemical concept") {
  DocFixture f = intra_pair_doc();
  std::vector<CandidateInstance> insts = instances::build_intra(f.doc, f.parses);
  // add a second instance whose chemical C0 is an ancestor of C1
  CandidateInstance general = insts[0];
  general.chemical_id = "C0";
  insts.push_back(general);
  std::istringstream edges("C1\tC0\n");  // C0 is parent (more general)
  const corpus::MeshHierarchy mesh = corpus::load_mesh_hierarchy(edges);
  const auto kept = instances::hypernym_filter(insts, mesh);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].chemical_id == "C1");
}

TEST_CASE("hypernym filter keeps unrelated concepts and is idempotent") {
  DocFixture f = intra_pair_doc();
  std::vector<CandidateInstance> insts = instances::build_intra(f.doc, f.parses);
  CandidateInstance other = insts[0];
  other.chemical_id = "C9";
  insts.push_back(other);
  std::istringstream edges("C1\tC0\nX\tY\n");
  const corpus::MeshHierarchy mesh = corpus::load_mesh_hierarchy(edges);
  const auto once = instances::hypernym_filter(insts, mesh);
  CHECK(once.size() == 2);
  const auto twice = instances::hypernym_filter(once, mesh);
  CHECK(twice.size() == once.size());
}

TEST_CASE("hypernym filter scope is per-document") {
  // the ancestor C0 only co-occurs with C1 in another document, so it stays
  DocFixture f1 = intra_pair_doc();
  std::vector<CandidateInstance> insts = instances::build_intra(f1.doc, f1.parses);
  CandidateInstance other_doc = insts[0];
  other_doc.doc_id = "other";
  other_doc.chemical_id = "C0";
  insts.push_back(other_doc);
  std::istringstream edges("C1\tC0\n");
  const corpus::MeshHierarchy mesh = corpus::load_mesh_hierarchy(edges);
  CHECK(instances::hypernym_filter(insts, mesh).size() == 2);
}

TEST_CASE("instance records round-trip through the line format") {
  DocFixture f = intra_pair_doc();
  f.add_gold("C1", "D1");
  std::istringstream no_edges("");
  const instances::InstanceSet set =
      instances::build_instances(f.doc, f.parses, corpus::load_mesh_hierarchy(no_edges));
  REQUIRE(set.intra.size() == 1);
  std::ostringstream out;
  instances::write_instances(out, set.intra);
  std::istringstream in(out.str());
  const auto loaded = instances::read_instances(in);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].doc_id == set.intra[0].doc_id);
  CHECK(loaded[0].chemical_id == set.intra[0].chemical_id);
  CHECK(loaded[0].level == Level::Intra);
  CHECK(loaded[0].label == Label::Cid);
  CHECK(loaded[0].sdp == set.intra[0].sdp);
}

TEST_CASE("intra and inter never share a document-pair key") {
  DocFixture f = make_doc("k", {{
                                    {"Aspirin", 2, "sub"},
                                    {"causes", 0, "root"},
                                    {"asthma", 2, "obj"},
                                },
                                {
                                    {"fever", 2, "sub"},
                                    {"recurs", 0, "root"},
                                }});
  f.add_mention(0, 1, 1, corpus::MentionKind::Chemical, {"C1"});
  f.add_mention(0, 3, 3, corpus::MentionKind::Disease, {"D1"});
  f.add_mention(1, 1, 1, corpus::MentionKind::Disease, {"D2"});
  const auto intra = instances::build_intra(f.doc, f.parses);
  const auto inter = instances::build_inter(f.doc, f.parses, intra);
  REQUIRE(!intra.empty());
  REQUIRE(!inter.empty());
  for (const CandidateInstance& a : intra)
    for (const CandidateInstance& b : inter) {
      const bool same = a.doc_id == b.doc_id && a.chemical_id == b.chemical_id &&
                        a.disease_id == b.disease_id;
      CHECK_FALSE(same);
    }
}

TEST_CASE("malformed sdp strings are rejected on read") {
  CHECK_THROWS(instances::sdp_from_string("chem ↑ L1"));           // truncated
  CHECK_THROWS(instances::sdp_from_string("chem x L1 ↑ dis"));     // bad direction
}
