#include "kcn/kge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kcn::kge {

namespace {

const std::vector<std::pair<Relation, std::string>> kRelationNames = {
    {Relation::InferredAssociation, "inferred-association"},
    {Relation::Therapeutic, "therapeutic"},
    {Relation::MarkerMechanism, "marker/mechanism"},
    {Relation::Null, "null"},
};

std::vector<std::string> lowercase_words(const std::string& surface) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : surface) {
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

const std::string& relation_name(Relation r) {
  for (const auto& [rel, name] : kRelationNames)
    if (rel == r) return name;
  throw std::logic_error("unknown relation");
}

Relation relation_from_name(const std::string& name) {
  for (const auto& [rel, n] : kRelationNames)
    if (n == name) return rel;
  throw std::runtime_error("unknown relation name '" + name + "'");
}

void TripleStore::add(Triple t) {
  chemicals.insert(t.chemical_id);
  diseases.insert(t.disease_id);
  // a pair curated under several relations keeps marker/mechanism, the one
  // that encodes a true CID fact; otherwise first insertion wins
  auto [it, fresh] = by_pair.emplace(std::pair(t.chemical_id, t.disease_id), t.relation);
  if (!fresh && t.relation == Relation::MarkerMechanism) it->second = t.relation;
  triples.insert(std::move(t));
}

std::optional<Relation> TripleStore::pair_relation(const std::string& chem,
                                                   const std::string& dis) const {
  auto it = by_pair.find({chem, dis});
  if (it == by_pair.end()) return std::nullopt;
  return it->second;
}

TripleStore load_triples(std::istream& in) {
  TripleStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string chem, rel, dis;
    if (!std::getline(row, chem, '\t') || !std::getline(row, rel, '\t') ||
        !std::getline(row, dis, '\t') || chem.empty() || dis.empty())
      throw std::runtime_error("triple line " + std::to_string(line_no) +
                               ": expected chemical<TAB>relation<TAB>disease");
    store.add({chem, dis, relation_from_name(rel)});
  }
  return store;
}

void write_triples(std::ostream& out, const TripleStore& store) {
  for (const Triple& t : store.triples)
    out << t.chemical_id << '\t' << relation_name(t.relation) << '\t' << t.disease_id << "\n";
}

TripleStore build_triples(const std::vector<corpus::Document>& cdr, const TripleStore& ctd) {
  TripleStore store;
  for (const Triple& t : ctd.triples) store.add(t);
  for (const corpus::Document& doc : cdr) {
    std::set<std::string> chems, diss;
    for (const corpus::Mention& m : doc.mentions) {
      auto& ids = m.kind == corpus::MentionKind::Chemical ? chems : diss;
      ids.insert(m.concept_ids.begin(), m.concept_ids.end());
    }
    for (const std::string& c : chems) {
      for (const std::string& d : diss) {
        const auto known = ctd.pair_relation(c, d);
        store.add({c, d, known.value_or(Relation::Null)});
      }
    }
  }
  return store;
}

TripleStore remove_cdr_triples(const TripleStore& store,
                               const std::vector<corpus::Document>& docs) {
  std::set<std::pair<std::string, std::string>> removed;
  for (const corpus::Document& doc : docs) {
    std::set<std::string> chems, diss;
    for (const corpus::Mention& m : doc.mentions) {
      auto& ids = m.kind == corpus::MentionKind::Chemical ? chems : diss;
      ids.insert(m.concept_ids.begin(), m.concept_ids.end());
    }
    for (const std::string& c : chems)
      for (const std::string& d : diss) removed.insert({c, d});
  }
  TripleStore out;
  for (const Triple& t : store.triples)
    if (!removed.count({t.chemical_id, t.disease_id})) out.add(t);
  return out;
}

std::map<std::string, std::vector<std::string>> collect_mention_text(
    const std::vector<corpus::Document>& docs) {
  std::map<std::string, std::vector<std::string>> out;
  std::map<std::string, std::set<std::string>> seen;
  for (const corpus::Document& doc : docs) {
    for (const corpus::Mention& m : doc.mentions) {
      for (const std::string& id : m.concept_ids) {
        if (seen[id].insert(m.surface).second) out[id].push_back(m.surface);
      }
    }
  }
  return out;
}

namespace {

std::vector<double> averaged_word_vector(const corpus::WordEmbeddingTable& words,
                                         const std::vector<std::string>& surfaces) {
  std::vector<double> sum(words.dimension, 0.0);
  std::size_t count = 0;
  for (const std::string& surface : surfaces) {
    for (const std::string& w : lowercase_words(surface)) {
      const std::vector<double>& v = words.lookup(w);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
      ++count;
    }
  }
  if (count == 0) return words.unk_vector;
  for (double& x : sum) x /= static_cast<double>(count);
  return sum;
}

}  // namespace

EmbeddingTable init_embeddings(const TripleStore& store, const corpus::WordEmbeddingTable& words,
                               const std::map<std::string, std::vector<std::string>>& mention_text,
                               std::uint64_t seed, std::vector<std::string>* warnings) {
  EmbeddingTable table;
  table.k = words.dimension;
  std::set<std::string> entities;
  entities.insert(store.chemicals.begin(), store.chemicals.end());
  entities.insert(store.diseases.begin(), store.diseases.end());
  for (const std::string& e : entities) {
    auto it = mention_text.find(e);
    if (it == mention_text.end() || it->second.empty()) {
      if (warnings) warnings->push_back("entity " + e + " has no mention text, using unk vector");
      table.entity_vec[e] = words.unk_vector;
    } else {
      table.entity_vec[e] = averaged_word_vector(words, it->second);
    }
  }
  std::mt19937_64 rng(seed);
  for (const auto& [rel, name] : kRelationNames) {
    std::vector<double> v(table.k);
    std::uniform_real_distribution<double> dist(-0.25, 0.25);
    for (double& x : v) x = dist(rng);
    table.relation_vec[rel] = std::move(v);
  }
  return table;
}

Triple sample_negative(const Triple& triple, const TripleStore& store, std::mt19937_64& rng) {
  if (store.chemicals.size() < 2 || store.diseases.size() < 2)
    throw std::runtime_error("sample_negative: need at least 2 chemicals and 2 diseases");

  auto corrupted = [&](const std::string& entity, bool chem_side) {
    Triple t = triple;
    (chem_side ? t.chemical_id : t.disease_id) = entity;
    return t;
  };
  auto try_side = [&](bool chem_side) -> std::optional<Triple> {
    const std::set<std::string>& pool = chem_side ? store.chemicals : store.diseases;
    std::vector<const std::string*> entities;
    entities.reserve(pool.size());
    for (const std::string& e : pool) entities.push_back(&e);
    std::uniform_int_distribution<std::size_t> pick(0, entities.size() - 1);
    for (int attempt = 0; attempt < 64; ++attempt) {
      Triple t = corrupted(*entities[pick(rng)], chem_side);
      if (!store.triples.count(t)) return t;
    }
    // dense store: fall back to enumerating the valid corruptions
    std::vector<Triple> valid;
    for (const std::string* e : entities) {
      Triple t = corrupted(*e, chem_side);
      if (!store.triples.count(t)) valid.push_back(std::move(t));
    }
    if (valid.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick_valid(0, valid.size() - 1);
    return valid[pick_valid(rng)];
  };

  const bool chem_first = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
  if (auto t = try_side(chem_first)) return *t;
  if (auto t = try_side(!chem_first)) return *t;
  throw std::runtime_error("sample_negative: every corruption of the triple is a known fact");
}

double translation_distance(const std::vector<double>& chem, const std::vector<double>& rel,
                            const std::vector<double>& dis, DistanceNorm norm) {
  double acc = 0.0;
  for (std::size_t i = 0; i < chem.size(); ++i) {
    const double t = chem[i] + rel[i] - dis[i];
    acc += norm == DistanceNorm::L1 ? std::abs(t) : t * t;
  }
  return norm == DistanceNorm::L1 ? acc : std::sqrt(acc);
}

namespace {

// d distance / d residual for residual t = e_c + r - e_d
void distance_grad(const std::vector<double>& chem, const std::vector<double>& rel,
                   const std::vector<double>& dis, DistanceNorm norm,
                   std::vector<double>& out) {
  const std::size_t k = chem.size();
  out.assign(k, 0.0);
  if (norm == DistanceNorm::L1) {
    for (std::size_t i = 0; i < k; ++i) {
      const double t = chem[i] + rel[i] - dis[i];
      out[i] = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
    }
  } else {
    double d = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double t = chem[i] + rel[i] - dis[i];
      out[i] = t;
      d += t * t;
    }
    d = std::sqrt(d);
    if (d == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
    } else {
      for (double& x : out) x /= d;
    }
  }
}

const std::vector<double>& entity_of(const EmbeddingTable& emb, const std::string& id) {
  auto it = emb.entity_vec.find(id);
  if (it == emb.entity_vec.end())
    throw std::runtime_error("no embedding for entity " + id);
  return it->second;
}

}  // namespace

double transe_loss_and_grad(const Triple& pos, const Triple& neg, const EmbeddingTable& emb,
                            double margin, DistanceNorm norm, TransEGradients* grads) {
  const std::vector<double>& pc = entity_of(emb, pos.chemical_id);
  const std::vector<double>& pd = entity_of(emb, pos.disease_id);
  const std::vector<double>& nc = entity_of(emb, neg.chemical_id);
  const std::vector<double>& nd = entity_of(emb, neg.disease_id);
  const std::vector<double>& r = emb.relation_vec.at(pos.relation);

  const double d_pos = translation_distance(pc, r, pd, norm);
  const double d_neg = translation_distance(nc, r, nd, norm);
  const double loss = std::max(0.0, margin + d_pos - d_neg);

  if (grads) {
    const std::size_t k = emb.k;
    grads->d_pos_chem.assign(k, 0.0);
    grads->d_pos_dis.assign(k, 0.0);
    grads->d_neg_chem.assign(k, 0.0);
    grads->d_neg_dis.assign(k, 0.0);
    grads->d_relation.assign(k, 0.0);
    if (loss > 0.0) {
      std::vector<double> gp, gn;
      distance_grad(pc, r, pd, norm, gp);
      distance_grad(nc, r, nd, norm, gn);
      for (std::size_t i = 0; i < k; ++i) {
        grads->d_pos_chem[i] = gp[i];
        grads->d_pos_dis[i] = -gp[i];
        grads->d_neg_chem[i] = -gn[i];
        grads->d_neg_dis[i] = gn[i];
        grads->d_relation[i] = gp[i] - gn[i];
      }
    }
  }
  return loss;
}

TrainedEmbeddings train_transe(const TripleStore& store, const TransEConfig& config,
                               const corpus::WordEmbeddingTable& words,
                               const std::map<std::string, std::vector<std::string>>& mention_text) {
  if (config.margin <= 0.0) throw std::invalid_argument("train_transe: margin must be positive");
  if (config.k != words.dimension)
    throw std::invalid_argument("train_transe: k must equal the word embedding dimension");

  TrainedEmbeddings result;
  result.table = init_embeddings(store, words, mention_text, config.seed);
  EmbeddingTable& emb = result.table;
  std::mt19937_64 rng(config.seed + 1);

  std::vector<Triple> positives(store.triples.begin(), store.triples.end());
  std::vector<Triple> fixed_negs;
  if (config.fixed_negatives) {
    fixed_negs.reserve(positives.size());
    for (const Triple& p : positives) fixed_negs.push_back(sample_negative(p, store, rng));
  }

  const std::size_t batch =
      config.batch_size == 0 ? positives.size() : std::min(config.batch_size, positives.size());
  std::vector<std::size_t> order(positives.size());
  std::iota(order.begin(), order.end(), 0);

  TransEGradients g;
  std::map<std::string, std::vector<double>> entity_acc;
  std::map<Relation, std::vector<double>> relation_acc;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      entity_acc.clear();
      relation_acc.clear();
      auto acc_entity = [&](const std::string& id, const std::vector<double>& grad) {
        auto it = entity_acc.try_emplace(id, emb.k, 0.0).first;
        for (std::size_t i = 0; i < emb.k; ++i) it->second[i] += grad[i];
      };
      for (std::size_t idx = start; idx < stop; ++idx) {
        const Triple& pos = positives[order[idx]];
        const Triple neg = config.fixed_negatives ? fixed_negs[order[idx]]
                                                  : sample_negative(pos, store, rng);
        loss_sum += transe_loss_and_grad(pos, neg, emb, config.margin, config.distance_norm, &g);
        acc_entity(pos.chemical_id, g.d_pos_chem);
        acc_entity(pos.disease_id, g.d_pos_dis);
        acc_entity(neg.chemical_id, g.d_neg_chem);
        acc_entity(neg.disease_id, g.d_neg_dis);
        auto rit = relation_acc.try_emplace(pos.relation, emb.k, 0.0).first;
        for (std::size_t i = 0; i < emb.k; ++i) rit->second[i] += g.d_relation[i];
      }
      const double scale = config.learning_rate / static_cast<double>(stop - start);
      for (const auto& [id, grad] : entity_acc) {
        std::vector<double>& v = emb.entity_vec.at(id);
        for (std::size_t i = 0; i < emb.k; ++i) v[i] -= scale * grad[i];
      }
      for (const auto& [rel, grad] : relation_acc) {
        std::vector<double>& v = emb.relation_vec.at(rel);
        for (std::size_t i = 0; i < emb.k; ++i) v[i] -= scale * grad[i];
      }
    }
    if (config.renormalize_entities) {
      for (auto& [id, v] : emb.entity_vec) {
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 1.0)
          for (double& x : v) x /= norm;
      }
    }
    result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(positives.size()));
  }
  return result;
}

double hits_at_1_tail(const TripleStore& store, const EmbeddingTable& emb, DistanceNorm norm) {
  if (store.triples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const Triple& t : store.triples) {
    const std::vector<double>& c = emb.entity_vec.at(t.chemical_id);
    const std::vector<double>& r = emb.relation_vec.at(t.relation);
    const double true_dist = translation_distance(c, r, emb.entity_vec.at(t.disease_id), norm);
    bool best = true;
    for (const std::string& d : store.diseases) {
      if (d == t.disease_id) continue;
      if (translation_distance(c, r, emb.entity_vec.at(d), norm) <= true_dist) {
        best = false;
        break;
      }
    }
    if (best) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(store.triples.size());
}

KnowledgeProvider::KnowledgeProvider(const TripleStore* store, const EmbeddingTable* emb,
                                     const corpus::WordEmbeddingTable* words,
                                     std::map<std::string, std::vector<std::string>> mention_text)
    : store_(store), emb_(emb), words_(words), mention_text_(std::move(mention_text)) {}

std::vector<double> KnowledgeProvider::averaged_entity(const std::string& entity_id) const {
  auto it = mention_text_.find(entity_id);
  if (it == mention_text_.end() || it->second.empty()) return words_->unk_vector;
  return averaged_word_vector(*words_, it->second);
}

PairKnowledge KnowledgeProvider::lookup(const std::string& chem_id,
                                        const std::string& dis_id) const {
  PairKnowledge k;
  auto entity = [&](const std::string& id) {
    auto it = emb_->entity_vec.find(id);
    return it != emb_->entity_vec.end() ? it->second : averaged_entity(id);
  };
  k.chem_vec = entity(chem_id);
  k.dis_vec = entity(dis_id);
  const Relation rel = store_->pair_relation(chem_id, dis_id).value_or(Relation::Null);
  k.rel_vec = emb_->relation_vec.at(rel);
  return k;
}

PairKnowledge KnowledgeProvider::lookup_averaged(const std::string& chem_id,
                                                 const std::string& dis_id) const {
  PairKnowledge k;
  k.chem_vec = averaged_entity(chem_id);
  k.dis_vec = averaged_entity(dis_id);
  const Relation rel = store_->pair_relation(chem_id, dis_id).value_or(Relation::Null);
  k.rel_vec = emb_->relation_vec.at(rel);
  return k;
}

}  // namespace kcn::kge
