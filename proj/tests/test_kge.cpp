#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "kcn/kge.hpp"
#include "kcn/nn.hpp"

using namespace kcn;
using kge::DistanceNorm;
using kge::EmbeddingTable;
using kge::Relation;
using kge::Triple;
using kge::TripleStore;

namespace {

corpus::WordEmbeddingTable tiny_words(std::size_t d, std::uint64_t seed,
                                      const std::vector<std::string>& words) {
  corpus::WordEmbeddingTable t;
  t.dimension = d;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.2, 0.2);
  std::vector<double> sum(d, 0.0);
  for (const std::string& w : words) {
    std::vector<double> v(d);
    for (double& x : v) x = dist(rng);
    for (std::size_t i = 0; i < d; ++i) sum[i] += v[i];
    t.vectors[w] = std::move(v);
  }
  t.unk_vector.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    t.unk_vector[i] = sum[i] / static_cast<double>(words.size());
  return t;
}

corpus::Document doc_with_pair(const std::string& id, const std::string& chem,
                               const std::string& dis) {
  corpus::Document d;
  d.doc_id = id;
  d.title = "chemword disword";
  d.abstract = "x";
  d.mentions.push_back({0, 8, "chemword", corpus::MentionKind::Chemical, {chem}});
  d.mentions.push_back({9, 16, "disword", corpus::MentionKind::Disease, {dis}});
  return d;
}

}  // namespace

TEST_CASE("triple store keeps set semantics and a consistent pair index") {
  TripleStore s;
  s.add({"C1", "D1", Relation::MarkerMechanism});
  s.add({"C1", "D1", Relation::MarkerMechanism});
  CHECK(s.triples.size() == 1);
  CHECK(s.pair_relation("C1", "D1") == Relation::MarkerMechanism);
  CHECK(s.pair_relation("C1", "D9") == std::nullopt);
}

TEST_CASE("triple TSV round trip") {
  TripleStore s;
  s.add({"C1", "D1", Relation::MarkerMechanism});
  s.add({"C2", "D1", Relation::Therapeutic});
  s.add({"C2", "D2", Relation::InferredAssociation});
  std::ostringstream out;
  kge::write_triples(out, s);
  std::istringstream in(out.str());
  CHECK(kge::load_triples(in).triples == s.triples);
}

TEST_CASE("build_triples annotates CDR pairs from CTD or with null") {
  TripleStore ctd;
  ctd.add({"C1", "D1", Relation::MarkerMechanism});
  ctd.add({"C9", "D9", Relation::Therapeutic});
  std::vector<corpus::Document> docs{doc_with_pair("1", "C1", "D1"),
                                     doc_with_pair("2", "C2", "D2")};
  const TripleStore merged = kge::build_triples(docs, ctd);
  CHECK(merged.pair_relation("C1", "D1") == Relation::MarkerMechanism);
  CHECK(merged.pair_relation("C2", "D2") == Relation::Null);
  CHECK(merged.pair_relation("C9", "D9") == Relation::Therapeutic);
  CHECK(merged.triples.size() == 3);
}

TEST_CASE("remove_cdr_triples drops co-occurring pairs so lookups fall back to null") {
  TripleStore ctd;
  ctd.add({"C1", "D1", Relation::MarkerMechanism});
  ctd.add({"C9", "D9", Relation::MarkerMechanism});
  std::vector<corpus::Document> docs{doc_with_pair("1", "C1", "D1")};
  const TripleStore reduced = kge::remove_cdr_triples(ctd, docs);
  CHECK(reduced.pair_relation("C1", "D1") == std::nullopt);
  CHECK(reduced.pair_relation("C9", "D9") == Relation::MarkerMechanism);
}

TEST_CASE("entity init averages mention words; relations stay in [-0.25, 0.25]") {
  corpus::WordEmbeddingTable words;
  words.dimension = 2;
  words.vectors["x"] = {1.0, 0.0};
  words.vectors["y"] = {0.0, 1.0};
  words.unk_vector = {0.5, 0.5};
  TripleStore s;
  s.add({"C1", "D1", Relation::Null});
  std::map<std::string, std::vector<std::string>> mention_text{{"C1", {"x", "y"}},
                                                               {"D1", {"y"}}};
  std::vector<std::string> warnings;
  const EmbeddingTable t = kge::init_embeddings(s, words, mention_text, 7, &warnings);
  CHECK(t.entity_vec.at("C1") == std::vector<double>{0.5, 0.5});
  CHECK(t.entity_vec.at("D1") == std::vector<double>{0.0, 1.0});
  CHECK(warnings.empty());
  for (const auto& [rel, vec] : t.relation_vec)
    for (double v : vec) {
      CHECK(v >= -0.25);
      CHECK(v <= 0.25);
    }
}

TEST_CASE("entity with no mention text falls back to unk with a warning") {
  corpus::WordEmbeddingTable words;
  words.dimension = 2;
  words.vectors["x"] = {1.0, 0.0};
  words.unk_vector = {0.25, 0.75};
  TripleStore s;
  s.add({"C1", "D1", Relation::Null});
  std::vector<std::string> warnings;
  const EmbeddingTable t = kge::init_embeddings(s, words, {}, 7, &warnings);
  CHECK(t.entity_vec.at("C1") == words.unk_vector);
  CHECK(warnings.size() == 2);
}

TEST_CASE("same seed gives identical embedding tables") {
  corpus::WordEmbeddingTable words = tiny_words(4, 3, {"a", "b"});
  TripleStore s;
  s.add({"C1", "D1", Relation::Null});
  const EmbeddingTable t1 = kge::init_embeddings(s, words, {}, 42);
  const EmbeddingTable t2 = kge::init_embeddings(s, words, {}, 42);
  CHECK(t1.relation_vec == t2.relation_vec);
  CHECK(t1.entity_vec == t2.entity_vec);
}

TEST_CASE("negative sampling corrupts one side and never returns a known fact") {
  TripleStore s;
  s.add({"C1", "D1", Relation::MarkerMechanism});
  s.add({"C2", "D2", Relation::MarkerMechanism});
  s.add({"C3", "D3", Relation::Null});
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Triple pos{"C1", "D1", Relation::MarkerMechanism};
    const Triple neg = kge::sample_negative(pos, s, rng);
    CHECK(!s.triples.count(neg));
    CHECK(neg.relation == pos.relation);
    const bool chem_changed = neg.chemical_id != pos.chemical_id;
    const bool dis_changed = neg.disease_id != pos.disease_id;
    CHECK(chem_changed != dis_changed);  // exactly one side corrupted
  }
}

TEST_CASE("two-chemical universe forces the only valid corruption") {
  // derived by enumeration: corrupting the chemical of (C1, D1) can only give
  // (C2, D1); that triple is a fact, so the disease side must be corrupted,
  // and of the two diseases only D2 yields a non-fact
  TripleStore s;
  s.add({"C1", "D1", Relation::MarkerMechanism});
  s.add({"C2", "D1", Relation::MarkerMechanism});
  s.add({"C1", "D2", Relation::Null});
  s.add({"C2", "D2", Relation::Null});
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const Triple neg = kge::sample_negative({"C1", "D1", Relation::MarkerMechanism}, s, rng);
    CHECK(neg == Triple{"C1", "D2", Relation::MarkerMechanism});
  }
}

TEST_CASE("sampling fails when every corruption is a known fact") {
  TripleStore s;
  for (const char* c : {"C1", "C2"})
    for (const char* d : {"D1", "D2"}) s.add({c, d, Relation::Null});
  std::mt19937_64 rng(1);
  CHECK_THROWS(kge::sample_negative({"C1", "D1", Relation::Null}, s, rng));
}

namespace {

EmbeddingTable hand_table() {
  EmbeddingTable t;
  t.k = 2;
  t.entity_vec["C"] = {0.0, 0.0};
  t.entity_vec["D"] = {1.0, 0.0};
  t.entity_vec["Dn0"] = {0.0, 0.0};
  t.entity_vec["Dn1"] = {1.0, 0.0};
  t.relation_vec[Relation::Null] = {1.0, 0.0};
  return t;
}

}  // namespace

TEST_CASE("hinge loss hand values") {
  const EmbeddingTable t = hand_table();
  // pos distance 0; neg (C, Dn0): |(0,0)+(1,0)-(0,0)| = 1 -> loss max(0, 1+0-1) = 0
  const Triple pos{"C", "D", Relation::Null};
  kge::TransEGradients g;
  double loss = kge::transe_loss_and_grad(pos, {"C", "Dn0", Relation::Null}, t, 1.0,
                                          DistanceNorm::L2, &g);
  CHECK(loss == 0.0);
  for (double v : g.d_relation) CHECK(v == 0.0);
  // neg (C, Dn1) also has distance 0 -> active hinge, loss = margin
  loss = kge::transe_loss_and_grad(pos, {"C", "Dn1", Relation::Null}, t, 1.0, DistanceNorm::L2,
                                   &g);
  CHECK(loss == doctest::Approx(1.0));
  // with a wider margin the first pair's hinge activates too; gradients flow
  // through the neg distance (the pos side sits at the norm cusp, subgradient 0)
  loss = kge::transe_loss_and_grad(pos, {"C", "Dn0", Relation::Null}, t, 2.0, DistanceNorm::L2,
                                   &g);
  CHECK(loss == doctest::Approx(1.0));
  CHECK(g.d_neg_dis != std::vector<double>{0.0, 0.0});
}

TEST_CASE("hinge gradients match finite differences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (DistanceNorm norm : {DistanceNorm::L2, DistanceNorm::L1}) {
    for (int round = 0; round < 20; ++round) {
      const std::size_t k = 4;
      EmbeddingTable t;
      t.k = k;
      for (const char* name : {"pc", "pd", "nc", "nd"}) {
        std::vector<double> v(k);
        for (double& x : v) x = dist(rng);
        t.entity_vec[name] = std::move(v);
      }
      std::vector<double> r(k);
      for (double& x : r) x = dist(rng);
      t.relation_vec[Relation::Null] = r;

      const Triple pos{"pc", "pd", Relation::Null}, neg{"nc", "nd", Relation::Null};
      kge::TransEGradients g;
      kge::transe_loss_and_grad(pos, neg, t, 0.7, norm, &g);

      // pack the five vectors into params; FD through the loss
      nn::Param p("all", {5, k});
      const char* names[5] = {"pc", "pd", "nc", "nd", ""};
      for (std::size_t row = 0; row < 4; ++row)
        for (std::size_t i = 0; i < k; ++i) p.value.at(row, i) = t.entity_vec[names[row]][i];
      for (std::size_t i = 0; i < k; ++i) p.value.at(4, i) = r[i];
      const std::vector<double>* rows[5] = {&g.d_pos_chem, &g.d_pos_dis, &g.d_neg_chem,
                                            &g.d_neg_dis, &g.d_relation};
      for (std::size_t row = 0; row < 5; ++row)
        for (std::size_t i = 0; i < k; ++i) p.grad.at(row, i) = (*rows[row])[i];

      auto f = [&] {
        EmbeddingTable tt = t;
        for (std::size_t row = 0; row < 4; ++row)
          for (std::size_t i = 0; i < k; ++i) tt.entity_vec[names[row]][i] = p.value.at(row, i);
        for (std::size_t i = 0; i < k; ++i) tt.relation_vec[Relation::Null][i] = p.value.at(4, i);
        return kge::transe_loss_and_grad(pos, neg, tt, 0.7, norm, nullptr);
      };
      // central differences by hand; the relation gradient cancels exactly on
      // coordinates whose residual signs agree under L1, so compare with an
      // absolute + relative tolerance instead of a pure ratio
      const double eps = 1e-6;
      for (std::size_t idx = 0; idx < p.value.size(); ++idx) {
        const double saved = p.value.at(idx);
        p.value.at(idx) = saved + eps;
        const double f_plus = f();
        p.value.at(idx) = saved - eps;
        const double f_minus = f();
        p.value.at(idx) = saved;
        const double numeric = (f_plus - f_minus) / (2.0 * eps);
        const double analytic = p.grad.at(idx);
        CHECK(std::abs(analytic - numeric) <=
              1e-6 * std::max(1.0, std::abs(analytic) + std::abs(numeric)));
      }
    }
  }
}

namespace {

// 6-entity chain KB, exactly realizable by translations: D_i = C_i + r_mm and
// D_{i+1} = C_i + r_th without wraparound.
TripleStore chain_kb() {
  TripleStore s;
  for (int i = 0; i < 3; ++i)
    s.add({"C" + std::to_string(i), "D" + std::to_string(i), Relation::MarkerMechanism});
  for (int i = 0; i < 2; ++i)
    s.add({"C" + std::to_string(i), "D" + std::to_string(i + 1), Relation::Therapeutic});
  return s;
}

std::vector<std::string> kb_words(const TripleStore& s) {
  std::vector<std::string> out;
  for (const std::string& e : s.chemicals) out.push_back("m" + e);
  for (const std::string& e : s.diseases) out.push_back("m" + e);
  return out;
}

std::map<std::string, std::vector<std::string>> kb_mentions(const TripleStore& s) {
  std::map<std::string, std::vector<std::string>> out;
  for (const std::string& e : s.chemicals) out[e] = {"m" + e};
  for (const std::string& e : s.diseases) out[e] = {"m" + e};
  return out;
}

}  // namespace

TEST_CASE("full-batch training on the toy chain KB is non-increasing") {
  const TripleStore s = chain_kb();
  const corpus::WordEmbeddingTable words = tiny_words(4, 21, kb_words(s));
  kge::TransEConfig cfg;
  cfg.k = 4;
  cfg.margin = 1.0;
  cfg.epochs = 80;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 0;  // full batch
  cfg.seed = 9;
  cfg.renormalize_entities = false;
  cfg.fixed_negatives = true;
  const kge::TrainedEmbeddings out = kge::train_transe(s, cfg, words, kb_mentions(s));
  REQUIRE(out.epoch_mean_loss.size() == 80);
  for (std::size_t e = 1; e < out.epoch_mean_loss.size(); ++e)
    CHECK(out.epoch_mean_loss[e] <= out.epoch_mean_loss[e - 1] + 1e-9);
  CHECK(out.epoch_mean_loss.back() < out.epoch_mean_loss.front());
}

TEST_CASE("unreachable margin keeps the loss positive but decreasing") {
  const TripleStore s = chain_kb();
  const corpus::WordEmbeddingTable words = tiny_words(4, 22, kb_words(s));
  kge::TransEConfig cfg;
  cfg.k = 4;
  cfg.margin = 1000.0;  // far above any achievable separation at this scale
  cfg.epochs = 40;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 0;
  cfg.seed = 10;
  cfg.renormalize_entities = true;
  cfg.fixed_negatives = true;
  const kge::TrainedEmbeddings out = kge::train_transe(s, cfg, words, kb_mentions(s));
  CHECK(out.epoch_mean_loss.back() > 0.0);
  CHECK(out.epoch_mean_loss.back() < out.epoch_mean_loss.front());
}

TEST_CASE("seed-fixed training runs are bit-reproducible") {
  const TripleStore s = chain_kb();
  const corpus::WordEmbeddingTable words = tiny_words(4, 23, kb_words(s));
  kge::TransEConfig cfg;
  cfg.k = 4;
  cfg.epochs = 12;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 2;
  cfg.seed = 77;
  const kge::TrainedEmbeddings a = kge::train_transe(s, cfg, words, kb_mentions(s));
  const kge::TrainedEmbeddings b = kge::train_transe(s, cfg, words, kb_mentions(s));
  CHECK(a.epoch_mean_loss == b.epoch_mean_loss);
  CHECK(a.table.entity_vec == b.table.entity_vec);
  CHECK(a.table.relation_vec == b.table.relation_vec);
}

TEST_CASE("renormalization keeps entity vectors inside the unit ball") {
  const TripleStore s = chain_kb();
  const corpus::WordEmbeddingTable words = tiny_words(4, 24, kb_words(s));
  kge::TransEConfig cfg;
  cfg.k = 4;
  cfg.epochs = 30;
  cfg.learning_rate = 0.2;
  cfg.batch_size = 0;
  cfg.seed = 3;
  cfg.renormalize_entities = true;
  const kge::TrainedEmbeddings out = kge::train_transe(s, cfg, words, kb_mentions(s));
  for (const auto& [id, v] : out.table.entity_vec) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    CHECK(std::sqrt(norm) <= 1.0 + 1e-9);
  }
}

TEST_CASE("pair knowledge lookup resolves relations, null fallback and unseen entities") {
  TripleStore s;
  s.add({"C1", "D1", Relation::MarkerMechanism});
  corpus::WordEmbeddingTable words;
  words.dimension = 2;
  words.vectors["alpha"] = {1.0, 0.0};
  words.vectors["beta"] = {0.0, 1.0};
  words.unk_vector = {0.5, 0.5};
  EmbeddingTable emb;
  emb.k = 2;
  emb.entity_vec["C1"] = {0.1, 0.2};
  emb.entity_vec["D1"] = {0.3, 0.4};
  emb.relation_vec[Relation::MarkerMechanism] = {9.0, 9.0};
  emb.relation_vec[Relation::Null] = {7.0, 7.0};
  kge::KnowledgeProvider provider(&s, &emb, &words,
                                  {{"C1", {"alpha"}}, {"Cx", {"alpha beta"}}});

  const kge::PairKnowledge known = provider.lookup("C1", "D1");
  CHECK(known.chem_vec == std::vector<double>{0.1, 0.2});
  CHECK(known.rel_vec == std::vector<double>{9.0, 9.0});

  const kge::PairKnowledge absent = provider.lookup("C1", "Dx");
  CHECK(absent.rel_vec == std::vector<double>{7.0, 7.0});  // pair missing -> null
  CHECK(absent.dis_vec == words.unk_vector);               // unseen, no mention text

  const kge::PairKnowledge unseen = provider.lookup("Cx", "D1");
  CHECK(unseen.chem_vec == std::vector<double>{0.5, 0.5});  // mean of alpha and beta

  const kge::PairKnowledge averaged = provider.lookup_averaged("C1", "D1");
  CHECK(averaged.chem_vec == std::vector<double>{1.0, 0.0});  // word vector, not the table
  CHECK(averaged.rel_vec == std::vector<double>{9.0, 9.0});
}
