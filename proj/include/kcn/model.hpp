#ifndef KCN_MODEL_HPP
#define KCN_MODEL_HPP

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kcn/corpus.hpp"
#include "kcn/instances.hpp"
#include "kcn/kge.hpp"
#include "kcn/nn.hpp"

// The two-branch knowledge-guided network: token embedding layer, entity-gated
// convolutions over every filter width, relation-guided attention pooling (or
// the ablation alternatives), and the two-class softmax classifier. Forward and
// backward are hand-written and verified by finite differences.

namespace kcn::model {

enum class EntityMode { KbEmbedding, AveragedWords };
enum class AttentionMode { RelationGuided, SelfAttention };
enum class GateKind { Gtru, Gtu, Glu, PlainTanh };
enum class PoolingMode { Attention, Max };

struct VariantConfig {
  EntityMode entity_mode = EntityMode::KbEmbedding;
  AttentionMode attention_mode = AttentionMode::RelationGuided;
  GateKind gate_kind = GateKind::Gtru;
  PoolingMode pooling = PoolingMode::Attention;
  bool share_gates = false;      // one gate parameter set for both branches
  bool share_attention = true;   // one attention parameter set for both branches
};

// The published ablation inventory; "KCN" is the full model.
std::vector<std::string> ablation_variant_names();
VariantConfig variant_by_name(const std::string& name);

struct ModelDims {
  std::size_t embed_dim = 100;         // token embedding size d
  std::size_t knowledge_dim = 100;     // entity/relation embedding size k
  std::size_t filters_per_width = 100; // l
  std::vector<std::size_t> widths = {1, 2, 3, 4, 5};
  std::size_t hidden_dim = 100;        // classifier hidden size b
  std::size_t max_seq_len = 128;

  std::size_t stacked_rows() const { return filters_per_width * widths.size(); }  // L
};

struct TokenVocab {
  std::vector<std::string> words;       // last row is unk
  std::map<std::string, std::size_t> word_index;
  std::vector<std::string> dep_labels;  // last row is unk
  std::map<std::string, std::size_t> dep_index;

  static TokenVocab build(const corpus::WordEmbeddingTable& words,
                          const std::vector<std::string>& dep_labels);

  std::size_t word_row(const std::string& word) const;  // lowercases the query
  std::size_t dep_row(const std::string& label) const;
  std::size_t word_unk() const { return words.size() - 1; }
  std::size_t dep_unk() const { return dep_labels.size() - 1; }
};

// One gated-convolution parameter set for a single filter width.
struct GatedConvParams {
  std::size_t width = 1;
  nn::Param w_content;  // {l, d, h}
  nn::Param b_content;  // {l}
  nn::Param w_gate;     // {l, d, h}
  nn::Param b_gate;     // {l}
  nn::Param v_gate;     // {l, k}: per-filter entity projection
};

struct AttentionParams {
  nn::Param w_rel;   // {k, L}
  nn::Param b_rel;   // {k}
  nn::Param w_self;  // {L}
  nn::Param b_self;  // {1}
};

struct KcnParams {
  ModelDims dims;
  VariantConfig variant;
  TokenVocab vocab;
  nn::Param word_table;  // {|words|, d}, fine-tuned
  nn::Param dep_table;   // {|dep_labels|, d}
  nn::Param dir_table;   // {2, d}: up, down
  std::vector<std::vector<GatedConvParams>> gates;  // [branch][width]; one branch if shared
  std::vector<AttentionParams> attention;           // one entry if shared
  nn::Param w_hidden;  // {b, 2L}
  nn::Param b_hidden;  // {b}
  nn::Param w_out;     // {2, b}
  nn::Param b_out;     // {2}

  static KcnParams init(const ModelDims& dims, const VariantConfig& variant,
                        const corpus::WordEmbeddingTable& words,
                        const std::vector<std::string>& dep_labels, std::uint64_t seed);

  std::vector<GatedConvParams>& branch_gates(std::size_t branch);
  const std::vector<GatedConvParams>& branch_gates(std::size_t branch) const;
  AttentionParams& branch_attention(std::size_t branch);
  const AttentionParams& branch_attention(std::size_t branch) const;

  std::vector<nn::Param*> trainable();
  std::vector<const nn::Param*> trainable() const;
  void zero_grads();
};

// Classifier output index of the positive class.
inline constexpr std::size_t kCidClass = 0;
inline constexpr std::size_t kNullClass = 1;

// ---- operations -----------------------------------------------------------------

// Symmetric middle-out truncation that always keeps both endpoints.
std::vector<instances::SdpToken> truncate_sdp(const std::vector<instances::SdpToken>& sdp,
                                              std::size_t max_len);

// Column i is the embedding of token i drawn from the table matching its kind.
nn::Tensor embed_sequence(const std::vector<instances::SdpToken>& sdp, const KcnParams& params);

// Stacked gated-convolution features, rows ordered by ascending width then
// filter index. `entity` is ignored for PlainTanh.
nn::Tensor gated_conv_branch(const nn::Tensor& x, std::span<const double> entity,
                             const std::vector<GatedConvParams>& gates, GateKind kind);

struct PoolResult {
  std::vector<double> pooled;     // length L
  std::vector<double> attention;  // length n
};

PoolResult attention_pool(const nn::Tensor& feature_map, std::span<const double> relation,
                          const AttentionParams& params, AttentionMode mode);

std::vector<double> max_pool(const nn::Tensor& feature_map);

struct BranchDiagnostics {
  std::vector<double> attention;  // per token; empty under max pooling
  std::vector<double> mean_gate;  // per token, averaged over all stacked filters
};

struct ForwardResult {
  std::array<double, 2> probs;  // [kCidClass], [kNullClass]
  std::vector<instances::SdpToken> tokens;  // after truncation
  BranchDiagnostics chem;
  BranchDiagnostics dis;
};

ForwardResult kcn_forward(const std::vector<instances::SdpToken>& sdp,
                          const kge::PairKnowledge& knowledge, const KcnParams& params);

struct TrainingExample {
  const std::vector<instances::SdpToken>* sdp = nullptr;
  const kge::PairKnowledge* knowledge = nullptr;
  instances::Label label = instances::Label::Null;
};

// Mean cross-entropy over the batch; forward only.
double kcn_loss(std::span<const TrainingExample> batch, const KcnParams& params);

// Mean cross-entropy plus gradient accumulation into every active parameter.
double kcn_loss_and_grad(std::span<const TrainingExample> batch, KcnParams& params);

// ---- checkpoint container ---------------------------------------------------------

// Versioned text container with the vocab, variant, dims and named tensors.
void save_checkpoint(std::ostream& out, const KcnParams& params);
KcnParams load_checkpoint(std::istream& in);

}  // namespace kcn::model

#endif
