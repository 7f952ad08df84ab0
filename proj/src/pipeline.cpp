#include "kcn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace kcn::pipeline {

namespace {

using instances::CandidateInstance;
using instances::Label;
using instances::Level;

std::vector<std::string> distinct_docs(const std::vector<CandidateInstance>& all) {
  std::vector<std::string> docs;
  std::set<std::string> seen;
  for (const CandidateInstance& inst : all)
    if (seen.insert(inst.doc_id).second) docs.push_back(inst.doc_id);
  return docs;
}

std::set<DocPair> positive_pairs_from_labels(const std::vector<CandidateInstance>& insts) {
  std::set<DocPair> out;
  for (const CandidateInstance& inst : insts)
    if (inst.label == Label::Cid) out.insert({inst.doc_id, inst.chemical_id, inst.disease_id});
  return out;
}

}  // namespace

std::pair<std::vector<CandidateInstance>, std::vector<CandidateInstance>>
split_train_val(const std::vector<CandidateInstance>& all, double fraction,
                std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("split fraction must lie strictly between 0 and 1");
  std::vector<std::string> docs = distinct_docs(all);
  if (docs.size() < 2)
    throw std::runtime_error("document-level split needs at least 2 documents, have " +
                             std::to_string(docs.size()));
  std::sort(docs.begin(), docs.end());
  std::mt19937_64 rng(seed);
  std::shuffle(docs.begin(), docs.end(), rng);
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(docs.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, docs.size() - 1);
  const std::set<std::string> train_docs(docs.begin(), docs.begin() + n_train);
  std::pair<std::vector<CandidateInstance>, std::vector<CandidateInstance>> out;
  for (const CandidateInstance& inst : all)
    (train_docs.count(inst.doc_id) ? out.first : out.second).push_back(inst);
  return out;
}

std::vector<kge::PairKnowledge> resolve_knowledge(const std::vector<CandidateInstance>& insts,
                                                  const kge::KnowledgeProvider& provider,
                                                  model::EntityMode mode) {
  std::vector<kge::PairKnowledge> out;
  out.reserve(insts.size());
  for (const CandidateInstance& inst : insts) {
    out.push_back(mode == model::EntityMode::AveragedWords
                      ? provider.lookup_averaged(inst.chemical_id, inst.disease_id)
                      : provider.lookup(inst.chemical_id, inst.disease_id));
  }
  return out;
}

std::vector<InstancePrediction> predict(const std::vector<CandidateInstance>& insts,
                                        const model::KcnParams& params,
                                        const std::vector<kge::PairKnowledge>& knowledge) {
  if (insts.size() != knowledge.size())
    throw std::invalid_argument("predict: knowledge not aligned with instances");
  std::vector<InstancePrediction> out;
  out.reserve(insts.size());
  for (std::size_t i = 0; i < insts.size(); ++i) {
    const model::ForwardResult r = model::kcn_forward(insts[i].sdp, knowledge[i], params);
    InstancePrediction p;
    p.doc_id = insts[i].doc_id;
    p.chemical_id = insts[i].chemical_id;
    p.disease_id = insts[i].disease_id;
    p.level = insts[i].level;
    p.cid_probability = r.probs[model::kCidClass];
    p.positive = r.probs[model::kCidClass] > r.probs[model::kNullClass];  // ties go to Null
    out.push_back(std::move(p));
  }
  return out;
}

PredictionSet merge_relations(const std::vector<InstancePrediction>& intra_preds,
                              const std::vector<InstancePrediction>& inter_preds) {
  PredictionSet set;
  for (const auto* preds : {&intra_preds, &inter_preds}) {
    for (const InstancePrediction& p : *preds) {
      set.scores.push_back(p);
      if (p.positive) set.positives.insert({p.doc_id, p.chemical_id, p.disease_id});
    }
  }
  return set;
}

std::set<DocPair> gold_pairs(const std::vector<corpus::Document>& docs) {
  std::set<DocPair> out;
  for (const corpus::Document& d : docs)
    for (const corpus::GoldRelation& r : d.gold_relations)
      out.insert({d.doc_id, r.chemical_id, r.disease_id});
  return out;
}

Prf prf_from_sets(const std::set<DocPair>& pred, const std::set<DocPair>& gold) {
  Prf prf;
  for (const DocPair& p : pred)
    gold.count(p) ? ++prf.tp : ++prf.fp;
  for (const DocPair& g : gold)
    if (!pred.count(g)) ++prf.fn;
  prf.precision = prf.tp + prf.fp > 0
                      ? static_cast<double>(prf.tp) / static_cast<double>(prf.tp + prf.fp)
                      : 0.0;
  prf.recall = prf.tp + prf.fn > 0
                   ? static_cast<double>(prf.tp) / static_cast<double>(prf.tp + prf.fn)
                   : 0.0;
  prf.f1 = prf.precision + prf.recall > 0.0
               ? 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall)
               : 0.0;
  return prf;
}

Prf evaluate_prf(const PredictionSet& pred, const std::vector<corpus::Document>& gold_docs) {
  return prf_from_sets(pred.positives, gold_pairs(gold_docs));
}

TrainResult train_kcn(Level level, const std::vector<CandidateInstance>& insts,
                      const kge::KnowledgeProvider& provider, const model::VariantConfig& variant,
                      const TrainConfig& config, const model::ModelDims& dims,
                      const corpus::WordEmbeddingTable& words) {
  if (insts.empty()) throw std::runtime_error("train_kcn: empty training set");
  for (const CandidateInstance& inst : insts) {
    if (inst.level != level) throw std::invalid_argument("train_kcn: mixed instance levels");
    if (!inst.label) throw std::invalid_argument("train_kcn: unlabeled instance");
  }

  auto [train, val] = split_train_val(insts, config.split_fraction, config.seed);
  if (train.empty() || val.empty())
    throw std::runtime_error("train_kcn: degenerate train/validation split");

  std::vector<std::string> dep_labels;
  for (const CandidateInstance& inst : insts)
    for (const instances::SdpToken& t : inst.sdp)
      if (t.kind == instances::TokenKind::DepLabel) dep_labels.push_back(t.text);

  model::KcnParams params = model::KcnParams::init(dims, variant, words, dep_labels, config.seed);
  const std::vector<kge::PairKnowledge> train_knowledge =
      resolve_knowledge(train, provider, variant.entity_mode);
  const std::vector<kge::PairKnowledge> val_knowledge =
      resolve_knowledge(val, provider, variant.entity_mode);
  const std::set<DocPair> val_gold = positive_pairs_from_labels(val);

  std::vector<nn::Param*> trainable = params.trainable();
  nn::AdamState adam = nn::AdamState::init(trainable);
  const double lr = level == Level::Intra ? config.lr_intra : config.lr_inter;

  std::mt19937_64 rng(config.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result{params, {}, 0};
  double best_f1 = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      std::vector<model::TrainingExample> batch;
      batch.reserve(stop - start);
      for (std::size_t idx = start; idx < stop; ++idx) {
        const std::size_t i = order[idx];
        batch.push_back({&train[i].sdp, &train_knowledge[i], *train[i].label});
      }
      loss_sum += model::kcn_loss_and_grad(batch, params);
      nn::adam_step(trainable, adam, lr);
      ++batches;
    }

    const std::vector<InstancePrediction> val_preds = predict(val, params, val_knowledge);
    PredictionSet val_set = level == Level::Intra ? merge_relations(val_preds, {})
                                                  : merge_relations({}, val_preds);
    const Prf val_prf = prf_from_sets(val_set.positives, val_gold);

    result.log.push_back({epoch, loss_sum / static_cast<double>(batches), val_prf.f1});
    if (val_prf.f1 > best_f1) {
      best_f1 = val_prf.f1;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

PredictionSet only_kb_baseline(const std::vector<CandidateInstance>& candidates,
                               const kge::TripleStore& store) {
  PredictionSet set;
  for (const CandidateInstance& inst : candidates) {
    const bool positive =
        store.pair_relation(inst.chemical_id, inst.disease_id) == kge::Relation::MarkerMechanism;
    InstancePrediction p;
    p.doc_id = inst.doc_id;
    p.chemical_id = inst.chemical_id;
    p.disease_id = inst.disease_id;
    p.level = inst.level;
    p.cid_probability = positive ? 1.0 : 0.0;
    p.positive = positive;
    set.scores.push_back(std::move(p));
    if (positive) set.positives.insert({inst.doc_id, inst.chemical_id, inst.disease_id});
  }
  return set;
}

std::vector<AblationRow> run_ablation_matrix(const AblationInputs& inputs,
                                             const TrainConfig& config,
                                             const model::ModelDims& dims,
                                             const corpus::WordEmbeddingTable& words) {
  if (!inputs.eval_docs || !inputs.provider)
    throw std::invalid_argument("run_ablation_matrix: missing eval docs or knowledge provider");
  std::vector<AblationRow> rows;
  const std::set<DocPair> gold = gold_pairs(*inputs.eval_docs);
  for (const std::string& name : model::ablation_variant_names()) {
    const model::VariantConfig variant = model::variant_by_name(name);
    std::vector<InstancePrediction> intra_preds, inter_preds;
    if (!inputs.train_intra.empty()) {
      const TrainResult r = train_kcn(Level::Intra, inputs.train_intra, *inputs.provider,
                                      variant, config, dims, words);
      intra_preds = predict(inputs.eval_intra, r.params,
                            resolve_knowledge(inputs.eval_intra, *inputs.provider,
                                              variant.entity_mode));
    }
    if (!inputs.train_inter.empty()) {
      const TrainResult r = train_kcn(Level::Inter, inputs.train_inter, *inputs.provider,
                                      variant, config, dims, words);
      inter_preds = predict(inputs.eval_inter, r.params,
                            resolve_knowledge(inputs.eval_inter, *inputs.provider,
                                              variant.entity_mode));
    }
    AblationRow row;
    row.variant = name;
    row.intra = prf_from_sets(merge_relations(intra_preds, {}).positives, gold);
    row.inter = prf_from_sets(merge_relations({}, inter_preds).positives, gold);
    row.document = prf_from_sets(merge_relations(intra_preds, inter_preds).positives, gold);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

}  // namespace

void write_ablation_tsv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "Method\tIntraP\tIntraR\tIntraF\tInterP\tInterR\tInterF\tDocP\tDocR\tDocF\n";
  for (const AblationRow& r : rows) {
    out << r.variant;
    for (const Prf* prf : {&r.intra, &r.inter, &r.document})
      out << '\t' << pct(prf->precision) << '\t' << pct(prf->recall) << '\t' << pct(prf->f1);
    out << "\n";
  }
}

void write_prf_tsv(std::ostream& out, const std::string& name, const Prf& prf) {
  out << "Name\tP\tR\tF\tTP\tFP\tFN\n";
  out << name << '\t' << pct(prf.precision) << '\t' << pct(prf.recall) << '\t' << pct(prf.f1)
      << '\t' << prf.tp << '\t' << prf.fp << '\t' << prf.fn << "\n";
}

void write_training_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,train_loss,val_f1\n";
  char buf[64];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g", e.epoch, e.train_loss, e.val_f1);
    out << buf << "\n";
  }
}

void write_predictions(std::ostream& out, const PredictionSet& preds) {
  for (const DocPair& p : preds.positives)
    out << std::get<0>(p) << "\tCID\t" << std::get<1>(p) << '\t' << std::get<2>(p) << "\n";
}

PredictionSet read_predictions(std::istream& in) {
  PredictionSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string doc, tag, chem, dis;
    if (!std::getline(row, doc, '\t') || !std::getline(row, tag, '\t') ||
        !std::getline(row, chem, '\t') || !std::getline(row, dis, '\t') || tag != "CID")
      throw std::runtime_error("prediction line " + std::to_string(line_no) +
                               ": expected doc<TAB>CID<TAB>chem<TAB>dis");
    set.positives.insert({doc, chem, dis});
  }
  return set;
}

}  // namespace kcn::pipeline
