#ifndef KCN_KGE_HPP
#define KCN_KGE_HPP

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kcn/corpus.hpp"

// Chemical-disease triple store and TransE knowledge-representation learning:
// relations are modeled as translations e_c + r ~ e_d in a shared k-dim space,
// trained with a margin hinge over corrupted triples.

namespace kcn::kge {

enum class Relation { InferredAssociation, Therapeutic, MarkerMechanism, Null };

const std::string& relation_name(Relation r);
Relation relation_from_name(const std::string& name);

struct Triple {
  std::string chemical_id;
  std::string disease_id;
  Relation relation = Relation::Null;

  auto operator<=>(const Triple&) const = default;
};

struct TripleStore {
  std::set<Triple> triples;
  std::set<std::string> chemicals;
  std::set<std::string> diseases;
  std::map<std::pair<std::string, std::string>, Relation> by_pair;

  void add(Triple t);
  std::optional<Relation> pair_relation(const std::string& chem, const std::string& dis) const;
};

struct EmbeddingTable {
  std::size_t k = 0;
  std::map<std::string, std::vector<double>> entity_vec;
  std::map<Relation, std::vector<double>> relation_vec;
};

enum class DistanceNorm { L1, L2 };

struct TransEConfig {
  std::size_t k = 100;
  double margin = 1.0;
  std::size_t epochs = 500;
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  DistanceNorm distance_norm = DistanceNorm::L2;
  std::uint64_t seed = 0;
  bool renormalize_entities = true;  // project onto the unit ball each epoch
  bool fixed_negatives = false;      // sample one negative per positive once, reuse every epoch
};

struct TransEGradients {
  std::vector<double> d_pos_chem, d_pos_dis, d_neg_chem, d_neg_dis, d_relation;
};

struct TrainedEmbeddings {
  EmbeddingTable table;
  std::vector<double> epoch_mean_loss;
};

// ---- operations -----------------------------------------------------------------

// TSV rows: chemical<TAB>relation-name<TAB>disease.
TripleStore load_triples(std::istream& in);
void write_triples(std::ostream& out, const TripleStore& store);

// CTD triples verbatim, plus every chemical-disease concept pair co-occurring
// in a CDR document, annotated with its CTD relation when present and the
// artificial relation null otherwise.
TripleStore build_triples(const std::vector<corpus::Document>& cdr, const TripleStore& ctd);

// Drops every triple whose (chemical, disease) pair co-occurs in one of the
// given documents; lookups for removed pairs fall back to null.
TripleStore remove_cdr_triples(const TripleStore& store,
                               const std::vector<corpus::Document>& docs);

// Entity vectors are the mean of their mention-surface word embeddings (unk
// fallback, recorded in *warnings when no mention text exists); relation
// vectors are i.i.d. uniform on [-0.25, 0.25].
EmbeddingTable init_embeddings(const TripleStore& store, const corpus::WordEmbeddingTable& words,
                               const std::map<std::string, std::vector<std::string>>& mention_text,
                               std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

// Corrupts the chemical side with probability 1/2, else the disease side, by a
// uniform entity of the same side; rejects corruptions that are themselves in
// the store. Throws when no valid corruption exists.
Triple sample_negative(const Triple& triple, const TripleStore& store, std::mt19937_64& rng);

// Margin hinge max(0, margin + D(pos) - D(neg)); gradients are zero whenever
// the hinge is inactive, including at exact ties.
double transe_loss_and_grad(const Triple& pos, const Triple& neg, const EmbeddingTable& emb,
                            double margin, DistanceNorm norm, TransEGradients* grads);

double translation_distance(const std::vector<double>& chem, const std::vector<double>& rel,
                            const std::vector<double>& dis, DistanceNorm norm);

// Mini-batch SGD over shuffled triples, one negative per positive, entity
// vectors projected onto the unit ball after each epoch when configured.
TrainedEmbeddings train_transe(const TripleStore& store, const TransEConfig& config,
                               const corpus::WordEmbeddingTable& words,
                               const std::map<std::string, std::vector<std::string>>& mention_text);

// Fraction of triples whose true disease ranks strictly first among all
// diseases under the translation distance (raw corrupt-tail ranking).
double hits_at_1_tail(const TripleStore& store, const EmbeddingTable& emb, DistanceNorm norm);

// Resolved knowledge vectors for one candidate pair.
struct PairKnowledge {
  std::vector<double> chem_vec;
  std::vector<double> dis_vec;
  std::vector<double> rel_vec;
};

// Bundles everything pair lookup needs: trained embeddings, the store for
// relation lookup, and word vectors + mention text for unseen-entity fallback.
class KnowledgeProvider {
 public:
  KnowledgeProvider(const TripleStore* store, const EmbeddingTable* emb,
                    const corpus::WordEmbeddingTable* words,
                    std::map<std::string, std::vector<std::string>> mention_text);

  // Entity vectors from the trained table (averaged mention-word vectors for
  // unseen entities); relation vector of store.by_pair, null when absent.
  PairKnowledge lookup(const std::string& chem_id, const std::string& dis_id) const;

  // Entity vectors always averaged from mention words (the AE variant).
  PairKnowledge lookup_averaged(const std::string& chem_id, const std::string& dis_id) const;

  std::vector<double> averaged_entity(const std::string& entity_id) const;

 private:
  const TripleStore* store_;
  const EmbeddingTable* emb_;
  const corpus::WordEmbeddingTable* words_;
  std::map<std::string, std::vector<std::string>> mention_text_;
};

// Mention surfaces per concept id, split into lowercased words.
std::map<std::string, std::vector<std::string>> collect_mention_text(
    const std::vector<corpus::Document>& docs);

}  // namespace kcn::kge

#endif
