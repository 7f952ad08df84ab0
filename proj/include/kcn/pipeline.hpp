#ifndef KCN_PIPELINE_HPP
#define KCN_PIPELINE_HPP

#include <cstddef>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kcn/corpus.hpp"
#include "kcn/instances.hpp"
#include "kcn/kge.hpp"
#include "kcn/model.hpp"

// Orchestration: train/validation splitting, per-level model training with
// early stopping, prediction, document-level relation merging, P/R/F1
// evaluation, the knowledge-base-only baseline and the ablation matrix.

namespace kcn::pipeline {

struct TrainConfig {
  std::size_t batch_size = 20;
  double lr_intra = 0.0001;
  double lr_inter = 0.0002;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
};

using DocPair = std::tuple<std::string, std::string, std::string>;  // doc, chem, dis

struct InstancePrediction {
  std::string doc_id;
  std::string chemical_id;
  std::string disease_id;
  instances::Level level = instances::Level::Intra;
  double cid_probability = 0.0;
  bool positive = false;
};

struct PredictionSet {
  std::set<DocPair> positives;
  std::vector<InstancePrediction> scores;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  model::KcnParams params;  // best-validation checkpoint
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// ---- operations -----------------------------------------------------------------

// Document-level split: all instances of one document land on the same side.
std::pair<std::vector<instances::CandidateInstance>, std::vector<instances::CandidateInstance>>
split_train_val(const std::vector<instances::CandidateInstance>& all, double fraction,
                std::uint64_t seed);

// Resolves the per-instance knowledge vectors once, honoring the entity mode.
std::vector<kge::PairKnowledge> resolve_knowledge(
    const std::vector<instances::CandidateInstance>& insts,
    const kge::KnowledgeProvider& provider, model::EntityMode mode);

// Adam mini-batch training at the level's learning rate with early stopping on
// validation document-level F1; returns the best checkpoint and the epoch log.
TrainResult train_kcn(instances::Level level,
                      const std::vector<instances::CandidateInstance>& insts,
                      const kge::KnowledgeProvider& provider, const model::VariantConfig& variant,
                      const TrainConfig& config, const model::ModelDims& dims,
                      const corpus::WordEmbeddingTable& words);

// Argmax labels; exact ties resolve to Null.
std::vector<InstancePrediction> predict(const std::vector<instances::CandidateInstance>& insts,
                                        const model::KcnParams& params,
                                        const std::vector<kge::PairKnowledge>& knowledge);

// Document-level union: a pair is positive iff any of its instances at either
// level is predicted positive.
PredictionSet merge_relations(const std::vector<InstancePrediction>& intra_preds,
                              const std::vector<InstancePrediction>& inter_preds);

Prf evaluate_prf(const PredictionSet& pred, const std::vector<corpus::Document>& gold_docs);
Prf prf_from_sets(const std::set<DocPair>& pred, const std::set<DocPair>& gold);

// Positive iff the store annotates the pair with marker/mechanism; candidates
// come from the instance builder so the heuristic filtering applies.
PredictionSet only_kb_baseline(const std::vector<instances::CandidateInstance>& candidates,
                               const kge::TripleStore& store);

struct AblationRow {
  std::string variant;
  Prf intra;
  Prf inter;
  Prf document;
};

struct AblationInputs {
  std::vector<instances::CandidateInstance> train_intra, train_inter;
  std::vector<instances::CandidateInstance> eval_intra, eval_inter;
  const std::vector<corpus::Document>* eval_docs = nullptr;
  const kge::KnowledgeProvider* provider = nullptr;
};

// One training + evaluation run per published variant, shared seeds.
std::vector<AblationRow> run_ablation_matrix(const AblationInputs& inputs,
                                             const TrainConfig& config,
                                             const model::ModelDims& dims,
                                             const corpus::WordEmbeddingTable& words);

void write_ablation_tsv(std::ostream& out, const std::vector<AblationRow>& rows);
void write_prf_tsv(std::ostream& out, const std::string& name, const Prf& prf);
void write_training_log_csv(std::ostream& out, const std::vector<EpochLog>& log);

// PubTator relation lines "doc<TAB>CID<TAB>chem<TAB>dis" for external scorers.
void write_predictions(std::ostream& out, const PredictionSet& preds);
PredictionSet read_predictions(std::istream& in);

// All labeled gold pairs of the given documents, as evaluation triples.
std::set<DocPair> gold_pairs(const std::vector<corpus::Document>& docs);

}  // namespace kcn::pipeline

#endif
