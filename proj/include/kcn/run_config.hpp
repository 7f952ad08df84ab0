#ifndef KCN_RUN_CONFIG_HPP
#define KCN_RUN_CONFIG_HPP

#include <string>

#include "kcn/kge.hpp"
#include "kcn/model.hpp"
#include "kcn/pipeline.hpp"

// Single JSON run configuration shared by every subcommand. Unknown keys are
// rejected field-by-field; one seed controls all randomness.

namespace kcn::config {

struct Paths {
  std::string corpus;
  std::string parses;
  std::string test_corpus;   // optional; evaluation falls back to `corpus`
  std::string test_parses;
  std::string mesh;
  std::string ctd_triples;
  std::string word_embeddings;
  std::string output_dir = "out";
};

enum class KbRegime { Full, MinusTrainTest, MinusTrain, MinusTest };

KbRegime kb_regime_from_name(const std::string& name);
const std::string& kb_regime_name(KbRegime regime);

struct RunConfig {
  int version = 1;
  std::uint64_t seed = 42;
  Paths paths;
  kge::TransEConfig transe;
  model::ModelDims dims;
  model::VariantConfig variant;
  pipeline::TrainConfig train;
  KbRegime kb_regime = KbRegime::Full;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
};

}  // namespace kcn::config

#endif
