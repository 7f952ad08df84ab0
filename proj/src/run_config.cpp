#include "kcn/run_config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace kcn::config {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key))
      throw std::runtime_error("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

kge::DistanceNorm norm_from_name(const std::string& name) {
  if (name == "L1") return kge::DistanceNorm::L1;
  if (name == "L2") return kge::DistanceNorm::L2;
  throw std::runtime_error("config: distance_norm must be L1 or L2, got '" + name + "'");
}

model::EntityMode entity_mode_from_name(const std::string& name) {
  if (name == "kb") return model::EntityMode::KbEmbedding;
  if (name == "averaged-words") return model::EntityMode::AveragedWords;
  throw std::runtime_error("config: entity_mode must be kb or averaged-words, got '" + name + "'");
}

model::AttentionMode attention_mode_from_name(const std::string& name) {
  if (name == "relation") return model::AttentionMode::RelationGuided;
  if (name == "self") return model::AttentionMode::SelfAttention;
  throw std::runtime_error("config: attention_mode must be relation or self, got '" + name + "'");
}

model::GateKind gate_kind_from_name(const std::string& name) {
  if (name == "GTRU") return model::GateKind::Gtru;
  if (name == "GTU") return model::GateKind::Gtu;
  if (name == "GLU") return model::GateKind::Glu;
  if (name == "PlainTanh") return model::GateKind::PlainTanh;
  throw std::runtime_error("config: gate_kind must be GTRU, GTU, GLU or PlainTanh, got '" +
                           name + "'");
}

model::PoolingMode pooling_from_name(const std::string& name) {
  if (name == "attention") return model::PoolingMode::Attention;
  if (name == "max") return model::PoolingMode::Max;
  throw std::runtime_error("config: pooling must be attention or max, got '" + name + "'");
}

}  // namespace

KbRegime kb_regime_from_name(const std::string& name) {
  if (name == "full") return KbRegime::Full;
  if (name == "minus-train-test") return KbRegime::MinusTrainTest;
  if (name == "minus-train") return KbRegime::MinusTrain;
  if (name == "minus-test") return KbRegime::MinusTest;
  throw std::runtime_error("config: unknown kb_regime '" + name + "'");
}

const std::string& kb_regime_name(KbRegime regime) {
  static const std::string names[] = {"full", "minus-train-test", "minus-train", "minus-test"};
  return names[static_cast<int>(regime)];
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  check_keys(j, {"version", "seed", "paths", "transe", "model", "variant", "train", "kb_regime"},
             "top level");
  RunConfig c;
  if (!j.contains("version")) throw std::runtime_error("config: missing required key 'version'");
  j.at("version").get_to(c.version);
  if (c.version != 1)
    throw std::runtime_error("config: unsupported version " + std::to_string(c.version));
  read_field(j, "seed", c.seed);

  if (j.contains("paths")) {
    const json& p = j.at("paths");
    check_keys(p,
               {"corpus", "parses", "test_corpus", "test_parses", "mesh", "ctd_triples",
                "word_embeddings", "output_dir"},
               "paths");
    read_field(p, "corpus", c.paths.corpus);
    read_field(p, "parses", c.paths.parses);
    read_field(p, "test_corpus", c.paths.test_corpus);
    read_field(p, "test_parses", c.paths.test_parses);
    read_field(p, "mesh", c.paths.mesh);
    read_field(p, "ctd_triples", c.paths.ctd_triples);
    read_field(p, "word_embeddings", c.paths.word_embeddings);
    read_field(p, "output_dir", c.paths.output_dir);
  }

  if (j.contains("transe")) {
    const json& t = j.at("transe");
    check_keys(t,
               {"k", "margin", "epochs", "learning_rate", "batch_size", "distance_norm",
                "renormalize_entities", "fixed_negatives"},
               "transe");
    read_field(t, "k", c.transe.k);
    read_field(t, "margin", c.transe.margin);
    read_field(t, "epochs", c.transe.epochs);
    read_field(t, "learning_rate", c.transe.learning_rate);
    read_field(t, "batch_size", c.transe.batch_size);
    if (t.contains("distance_norm"))
      c.transe.distance_norm = norm_from_name(t.at("distance_norm").get<std::string>());
    read_field(t, "renormalize_entities", c.transe.renormalize_entities);
    read_field(t, "fixed_negatives", c.transe.fixed_negatives);
    if (c.transe.margin <= 0.0) throw std::runtime_error("config: transe.margin must be > 0");
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m,
               {"embed_dim", "knowledge_dim", "filters_per_width", "widths", "hidden_dim",
                "max_seq_len"},
               "model");
    read_field(m, "embed_dim", c.dims.embed_dim);
    read_field(m, "knowledge_dim", c.dims.knowledge_dim);
    read_field(m, "filters_per_width", c.dims.filters_per_width);
    read_field(m, "widths", c.dims.widths);
    read_field(m, "hidden_dim", c.dims.hidden_dim);
    read_field(m, "max_seq_len", c.dims.max_seq_len);
    if (c.dims.widths.empty()) throw std::runtime_error("config: model.widths must be non-empty");
  }

  if (j.contains("variant")) {
    const json& v = j.at("variant");
    check_keys(v,
               {"name", "entity_mode", "attention_mode", "gate_kind", "pooling", "share_gates",
                "share_attention"},
               "variant");
    if (v.contains("name")) {
      if (v.size() != 1)
        throw std::runtime_error("config: variant.name cannot be combined with explicit fields");
      c.variant = model::variant_by_name(v.at("name").get<std::string>());
    } else {
      if (v.contains("entity_mode"))
        c.variant.entity_mode = entity_mode_from_name(v.at("entity_mode").get<std::string>());
      if (v.contains("attention_mode"))
        c.variant.attention_mode =
            attention_mode_from_name(v.at("attention_mode").get<std::string>());
      if (v.contains("gate_kind"))
        c.variant.gate_kind = gate_kind_from_name(v.at("gate_kind").get<std::string>());
      if (v.contains("pooling"))
        c.variant.pooling = pooling_from_name(v.at("pooling").get<std::string>());
      read_field(v, "share_gates", c.variant.share_gates);
      read_field(v, "share_attention", c.variant.share_attention);
    }
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"batch_size", "lr_intra", "lr_inter", "max_epochs", "patience",
                "split_fraction"},
               "train");
    read_field(t, "batch_size", c.train.batch_size);
    read_field(t, "lr_intra", c.train.lr_intra);
    read_field(t, "lr_inter", c.train.lr_inter);
    read_field(t, "max_epochs", c.train.max_epochs);
    read_field(t, "patience", c.train.patience);
    read_field(t, "split_fraction", c.train.split_fraction);
    if (c.train.split_fraction <= 0.0 || c.train.split_fraction >= 1.0)
      throw std::runtime_error("config: train.split_fraction must lie in (0, 1)");
  }

  if (j.contains("kb_regime"))
    c.kb_regime = kb_regime_from_name(j.at("kb_regime").get<std::string>());

  c.transe.seed = c.seed;
  c.train.seed = c.seed;
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

}  // namespace kcn::config
