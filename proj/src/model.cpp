#include "kcn/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kcn::model {

namespace {

using instances::SdpToken;
using instances::TokenKind;
using nn::Param;
using nn::Tensor;

const std::string kUnkSentinel = "<unk>";

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::vector<std::string> ablation_variant_names() {
  return {"KCN",        "AE",  "SA",         "AE-SA",      "w/o GTRU", "w/o Att",
          "SGate-SAtt", "DGate-DAtt", "SGate-DAtt", "GTU", "GLU"};
}

VariantConfig variant_by_name(const std::string& name) {
  VariantConfig v;  // defaults are the full model
  if (name == "KCN") return v;
  if (name == "AE") {
    v.entity_mode = EntityMode::AveragedWords;
  } else if (name == "SA") {
    v.attention_mode = AttentionMode::SelfAttention;
  } else if (name == "AE-SA") {
    v.entity_mode = EntityMode::AveragedWords;
    v.attention_mode = AttentionMode::SelfAttention;
  } else if (name == "w/o GTRU") {
    v.gate_kind = GateKind::PlainTanh;
    v.share_gates = true;  // without entity gating the two branches coincide
  } else if (name == "w/o Att") {
    v.pooling = PoolingMode::Max;
  } else if (name == "SGate-SAtt") {
    v.share_gates = true;
    v.share_attention = true;
  } else if (name == "DGate-DAtt") {
    v.share_gates = false;
    v.share_attention = false;
  } else if (name == "SGate-DAtt") {
    v.share_gates = true;
    v.share_attention = false;
  } else if (name == "GTU") {
    v.gate_kind = GateKind::Gtu;
  } else if (name == "GLU") {
    v.gate_kind = GateKind::Glu;
  } else {
    throw std::runtime_error("unknown variant '" + name + "'");
  }
  return v;
}

TokenVocab TokenVocab::build(const corpus::WordEmbeddingTable& words,
                             const std::vector<std::string>& dep_labels) {
  TokenVocab v;
  for (const auto& [word, vec] : words.vectors) {
    v.word_index.emplace(word, v.words.size());
    v.words.push_back(word);
  }
  v.words.push_back(kUnkSentinel);
  std::vector<std::string> labels = dep_labels;
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  for (const std::string& l : labels) {
    v.dep_index.emplace(l, v.dep_labels.size());
    v.dep_labels.push_back(l);
  }
  v.dep_labels.push_back(kUnkSentinel);
  return v;
}

std::size_t TokenVocab::word_row(const std::string& word) const {
  auto it = word_index.find(lowercase(word));
  return it == word_index.end() ? word_unk() : it->second;
}

std::size_t TokenVocab::dep_row(const std::string& label) const {
  auto it = dep_index.find(label);
  return it == dep_index.end() ? dep_unk() : it->second;
}

KcnParams KcnParams::init(const ModelDims& dims, const VariantConfig& variant,
                          const corpus::WordEmbeddingTable& words,
                          const std::vector<std::string>& dep_labels, std::uint64_t seed) {
  if (words.dimension != dims.embed_dim)
    throw std::invalid_argument("word table dimension does not match embed_dim");
  KcnParams p;
  p.dims = dims;
  p.variant = variant;
  p.vocab = TokenVocab::build(words, dep_labels);

  const std::size_t d = dims.embed_dim, k = dims.knowledge_dim;
  const std::size_t l = dims.filters_per_width, L = dims.stacked_rows();

  p.word_table = Param("word_table", {p.vocab.words.size(), d});
  for (std::size_t row = 0; row + 1 < p.vocab.words.size(); ++row) {
    const std::vector<double>& vec = words.vectors.at(p.vocab.words[row]);
    for (std::size_t a = 0; a < d; ++a) p.word_table.value.at(row, a) = vec[a];
  }
  for (std::size_t a = 0; a < d; ++a)
    p.word_table.value.at(p.vocab.words.size() - 1, a) = words.unk_vector[a];

  std::mt19937_64 rng(seed);
  p.dep_table = Param("dep_table", {p.vocab.dep_labels.size(), d});
  p.dep_table.value.fill_uniform(rng, -0.25, 0.25);
  p.dir_table = Param("dir_table", {2, d});
  p.dir_table.value.fill_uniform(rng, -0.25, 0.25);

  const std::size_t branch_sets = variant.share_gates ? 1 : 2;
  for (std::size_t b = 0; b < branch_sets; ++b) {
    std::vector<GatedConvParams> per_width;
    for (std::size_t h : dims.widths) {
      GatedConvParams gp;
      gp.width = h;
      const std::string prefix = "gates." + std::to_string(b) + ".w" + std::to_string(h) + ".";
      gp.w_content = Param(prefix + "w_content", {l, d, h});
      gp.w_content.value.fill_uniform(rng, -0.25, 0.25);
      gp.b_content = Param(prefix + "b_content", {l});
      gp.w_gate = Param(prefix + "w_gate", {l, d, h});
      gp.w_gate.value.fill_uniform(rng, -0.25, 0.25);
      gp.b_gate = Param(prefix + "b_gate", {l});
      gp.v_gate = Param(prefix + "v_gate", {l, k});
      gp.v_gate.value.fill_uniform(rng, -0.25, 0.25);
      per_width.push_back(std::move(gp));
    }
    p.gates.push_back(std::move(per_width));
  }

  const std::size_t attention_sets = variant.share_attention ? 1 : 2;
  for (std::size_t b = 0; b < attention_sets; ++b) {
    AttentionParams ap;
    const std::string prefix = "attention." + std::to_string(b) + ".";
    ap.w_rel = Param(prefix + "w_rel", {k, L});
    ap.w_rel.value.fill_uniform(rng, -0.25, 0.25);
    ap.b_rel = Param(prefix + "b_rel", {k});
    ap.w_self = Param(prefix + "w_self", {L});
    ap.w_self.value.fill_uniform(rng, -0.25, 0.25);
    ap.b_self = Param(prefix + "b_self", {1});
    p.attention.push_back(std::move(ap));
  }

  p.w_hidden = Param("w_hidden", {dims.hidden_dim, 2 * L});
  p.w_hidden.value.fill_uniform(rng, -0.25, 0.25);
  p.b_hidden = Param("b_hidden", {dims.hidden_dim});
  p.w_out = Param("w_out", {2, dims.hidden_dim});
  p.w_out.value.fill_uniform(rng, -0.25, 0.25);
  p.b_out = Param("b_out", {2});
  return p;
}

std::vector<GatedConvParams>& KcnParams::branch_gates(std::size_t branch) {
  return gates[variant.share_gates ? 0 : branch];
}
const std::vector<GatedConvParams>& KcnParams::branch_gates(std::size_t branch) const {
  return gates[variant.share_gates ? 0 : branch];
}
AttentionParams& KcnParams::branch_attention(std::size_t branch) {
  return attention[variant.share_attention ? 0 : branch];
}
const AttentionParams& KcnParams::branch_attention(std::size_t branch) const {
  return attention[variant.share_attention ? 0 : branch];
}

std::vector<Param*> KcnParams::trainable() {
  std::vector<Param*> out{&word_table, &dep_table, &dir_table};
  for (auto& branch : gates) {
    for (GatedConvParams& gp : branch) {
      out.push_back(&gp.w_content);
      out.push_back(&gp.b_content);
      out.push_back(&gp.w_gate);
      out.push_back(&gp.b_gate);
      out.push_back(&gp.v_gate);
    }
  }
  for (AttentionParams& ap : attention) {
    out.push_back(&ap.w_rel);
    out.push_back(&ap.b_rel);
    out.push_back(&ap.w_self);
    out.push_back(&ap.b_self);
  }
  out.push_back(&w_hidden);
  out.push_back(&b_hidden);
  out.push_back(&w_out);
  out.push_back(&b_out);
  return out;
}

std::vector<const Param*> KcnParams::trainable() const {
  auto mutable_list = const_cast<KcnParams*>(this)->trainable();
  return {mutable_list.begin(), mutable_list.end()};
}

void KcnParams::zero_grads() {
  for (Param* p : trainable()) p->zero_grad();
}

std::vector<SdpToken> truncate_sdp(const std::vector<SdpToken>& sdp, std::size_t max_len) {
  if (sdp.size() <= max_len) return sdp;
  const std::size_t head = (max_len + 1) / 2;
  const std::size_t tail = max_len - head;
  std::vector<SdpToken> out(sdp.begin(), sdp.begin() + head);
  out.insert(out.end(), sdp.end() - tail, sdp.end());
  return out;
}

nn::Tensor embed_sequence(const std::vector<SdpToken>& sdp, const KcnParams& params) {
  if (sdp.empty()) throw std::invalid_argument("embed_sequence: empty token sequence");
  const std::size_t d = params.dims.embed_dim;
  Tensor x({d, sdp.size()});
  for (std::size_t i = 0; i < sdp.size(); ++i) {
    const Param* table = nullptr;
    std::size_t row = 0;
    switch (sdp[i].kind) {
      case TokenKind::Word:
        table = &params.word_table;
        row = params.vocab.word_row(sdp[i].text);
        break;
      case TokenKind::DepLabel:
        table = &params.dep_table;
        row = params.vocab.dep_row(sdp[i].text);
        break;
      case TokenKind::Direction:
        table = &params.dir_table;
        row = sdp[i].text == instances::kUpArrow ? 0 : 1;
        break;
    }
    for (std::size_t a = 0; a < d; ++a) x.at(a, i) = table->value.at(row, a);
  }
  return x;
}

namespace {

struct BranchTrace {
  Tensor conv_s;  // {L, n} content pre-activations
  Tensor conv_a;  // {L, n} gate pre-activations
  Tensor s;       // {L, n}
  Tensor g;       // {L, n}
  Tensor feat;    // {L, n} = s * g
  std::vector<double> scores;       // n
  std::vector<double> alpha;        // n
  Tensor u;                         // {k, n} tanh outputs, relation attention
  std::vector<std::size_t> argmax;  // L, max pooling
  std::vector<double> pooled;       // L
};

struct Trace {
  std::vector<SdpToken> sdp;
  Tensor x;  // {d, n}
  BranchTrace branch[2];
  std::vector<double> mm;      // 2L
  std::vector<double> o_pre;   // b
  std::vector<double> o;       // b
  std::vector<double> logits;  // 2
  std::vector<double> probs;   // 2
};

void branch_conv_forward(const Tensor& x, std::span<const double> entity,
                         const std::vector<GatedConvParams>& gates, GateKind kind,
                         BranchTrace& tr) {
  const std::size_t d = x.dim(0), n = x.dim(1);
  std::size_t rows = 0;
  for (const GatedConvParams& gp : gates) rows += gp.w_content.value.dim(0);
  tr.conv_s = Tensor({rows, n});
  tr.conv_a = Tensor({rows, n});
  tr.s = Tensor({rows, n});
  tr.g = Tensor({rows, n});
  tr.feat = Tensor({rows, n});

  std::size_t row = 0;
  for (const GatedConvParams& gp : gates) {
    const std::size_t h = gp.width, l = gp.w_content.value.dim(0);
    if (h > 2 * n + 1) throw std::runtime_error("filter width exceeds 2n+1");
    const std::size_t pad = nn::conv_pad_left(h);
    for (std::size_t f = 0; f < l; ++f, ++row) {
      double gate_shift = 0.0;
      if (kind != GateKind::PlainTanh) {
        gate_shift = gp.b_gate.value.at(f);
        for (std::size_t a = 0; a < entity.size(); ++a)
          gate_shift += gp.v_gate.value.at(f, a) * entity[a];
      }
      for (std::size_t i = 0; i < n; ++i) {
        double cs = gp.b_content.value.at(f);
        double ca = gate_shift;
        for (std::size_t j = 0; j < h; ++j) {
          const std::ptrdiff_t q =
              static_cast<std::ptrdiff_t>(i + j) - static_cast<std::ptrdiff_t>(pad);
          if (q < 0 || q >= static_cast<std::ptrdiff_t>(n)) continue;
          const std::size_t qq = static_cast<std::size_t>(q);
          for (std::size_t a = 0; a < d; ++a) {
            cs += x.at(a, qq) * gp.w_content.value.at(f, a, j);
            if (kind != GateKind::PlainTanh) ca += x.at(a, qq) * gp.w_gate.value.at(f, a, j);
          }
        }
        tr.conv_s.at(row, i) = cs;
        tr.conv_a.at(row, i) = ca;
        double sv = 0.0, gv = 0.0;
        switch (kind) {
          case GateKind::Gtru:
            sv = nn::tanh_fwd(cs);
            gv = nn::relu_fwd(ca);
            break;
          case GateKind::Gtu:
            sv = nn::tanh_fwd(cs);
            gv = nn::sigmoid_fwd(ca);
            break;
          case GateKind::Glu:
            sv = cs;
            gv = nn::sigmoid_fwd(ca);
            break;
          case GateKind::PlainTanh:
            sv = nn::tanh_fwd(cs);
            gv = 1.0;
            break;
        }
        tr.s.at(row, i) = sv;
        tr.g.at(row, i) = gv;
        tr.feat.at(row, i) = sv * gv;
      }
    }
  }
}

void branch_pool_forward(std::span<const double> relation, const AttentionParams& ap,
                         AttentionMode mode, PoolingMode pooling, BranchTrace& tr) {
  const std::size_t rows = tr.feat.dim(0), n = tr.feat.dim(1);
  tr.pooled.assign(rows, 0.0);
  if (pooling == PoolingMode::Max) {
    tr.argmax.assign(rows, 0);
    for (std::size_t row = 0; row < rows; ++row) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (tr.feat.at(row, i) > tr.feat.at(row, best)) best = i;
      tr.argmax[row] = best;
      tr.pooled[row] = tr.feat.at(row, best);
    }
    return;
  }
  tr.scores.assign(n, 0.0);
  if (mode == AttentionMode::RelationGuided) {
    const std::size_t k = ap.w_rel.value.dim(0);
    tr.u = Tensor({k, n});
    for (std::size_t i = 0; i < n; ++i) {
      double score = 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        double z = ap.b_rel.value.at(a);
        for (std::size_t row = 0; row < rows; ++row)
          z += ap.w_rel.value.at(a, row) * tr.feat.at(row, i);
        const double uv = nn::tanh_fwd(z);
        tr.u.at(a, i) = uv;
        score += uv * relation[a];
      }
      tr.scores[i] = score;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double q = ap.b_self.value.at(0);
      for (std::size_t row = 0; row < rows; ++row)
        q += ap.w_self.value.at(row) * tr.feat.at(row, i);
      tr.scores[i] = nn::tanh_fwd(q);
    }
  }
  tr.alpha = nn::softmax(tr.scores);
  for (std::size_t row = 0; row < rows; ++row) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += tr.alpha[i] * tr.feat.at(row, i);
    tr.pooled[row] = acc;
  }
}

Trace forward_pass(const std::vector<SdpToken>& sdp, const kge::PairKnowledge& knowledge,
                   const KcnParams& params) {
  Trace tr;
  tr.sdp = truncate_sdp(sdp, params.dims.max_seq_len);
  tr.x = embed_sequence(tr.sdp, params);
  const std::span<const double> entities[2] = {knowledge.chem_vec, knowledge.dis_vec};
  for (std::size_t b = 0; b < 2; ++b) {
    branch_conv_forward(tr.x, entities[b], params.branch_gates(b), params.variant.gate_kind,
                        tr.branch[b]);
    branch_pool_forward(knowledge.rel_vec, params.branch_attention(b),
                        params.variant.attention_mode, params.variant.pooling, tr.branch[b]);
  }
  const std::size_t L = params.dims.stacked_rows();
  tr.mm.resize(2 * L);
  std::copy(tr.branch[0].pooled.begin(), tr.branch[0].pooled.end(), tr.mm.begin());
  std::copy(tr.branch[1].pooled.begin(), tr.branch[1].pooled.end(), tr.mm.begin() + L);
  tr.o_pre = nn::linear(params.w_hidden.value, tr.mm,
                        std::span(params.b_hidden.value.data));
  tr.o.resize(tr.o_pre.size());
  for (std::size_t j = 0; j < tr.o.size(); ++j) tr.o[j] = nn::relu_fwd(tr.o_pre[j]);
  tr.logits = nn::linear(params.w_out.value, tr.o, std::span(params.b_out.value.data));
  tr.probs = nn::softmax(tr.logits);
  return tr;
}

void branch_backward(const Tensor& x, std::span<const double> entity,
                     std::span<const double> relation, std::span<const double> d_pooled,
                     const BranchTrace& tr, std::vector<GatedConvParams>& gates,
                     AttentionParams& ap, const VariantConfig& variant, Tensor& dx) {
  const std::size_t rows = tr.feat.dim(0), n = tr.feat.dim(1), d = x.dim(0);
  Tensor d_feat({rows, n});

  if (variant.pooling == PoolingMode::Max) {
    for (std::size_t row = 0; row < rows; ++row)
      d_feat.at(row, tr.argmax[row]) += d_pooled[row];
  } else {
    std::vector<double> d_alpha(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t row = 0; row < rows; ++row) {
        acc += d_pooled[row] * tr.feat.at(row, i);
        d_feat.at(row, i) += tr.alpha[i] * d_pooled[row];
      }
      d_alpha[i] = acc;
    }
    const std::vector<double> d_scores = nn::softmax_backward(tr.alpha, d_alpha);
    if (variant.attention_mode == AttentionMode::RelationGuided) {
      const std::size_t k = ap.w_rel.value.dim(0);
      for (std::size_t i = 0; i < n; ++i) {
        if (d_scores[i] == 0.0) continue;
        for (std::size_t a = 0; a < k; ++a) {
          const double du = d_scores[i] * relation[a];
          const double dz = du * nn::tanh_bwd(tr.u.at(a, i));
          ap.b_rel.grad.at(a) += dz;
          for (std::size_t row = 0; row < rows; ++row) {
            ap.w_rel.grad.at(a, row) += dz * tr.feat.at(row, i);
            d_feat.at(row, i) += ap.w_rel.value.at(a, row) * dz;
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double dq = d_scores[i] * nn::tanh_bwd(tr.scores[i]);
        if (dq == 0.0) continue;
        ap.b_self.grad.at(0) += dq;
        for (std::size_t row = 0; row < rows; ++row) {
          ap.w_self.grad.at(row) += dq * tr.feat.at(row, i);
          d_feat.at(row, i) += dq * ap.w_self.value.at(row);
        }
      }
    }
  }

  // gated convolution backward
  std::size_t row = 0;
  for (GatedConvParams& gp : gates) {
    const std::size_t h = gp.width, l = gp.w_content.value.dim(0);
    const std::size_t pad = nn::conv_pad_left(h);
    for (std::size_t f = 0; f < l; ++f, ++row) {
      double d_gate_shift = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dc = d_feat.at(row, i);
        if (dc == 0.0) continue;
        const double sv = tr.s.at(row, i), gv = tr.g.at(row, i);
        const double ds = dc * gv;
        const double dg = dc * sv;
        double dpre_s = 0.0, dpre_a = 0.0;
        switch (variant.gate_kind) {
          case GateKind::Gtru:
            dpre_s = ds * nn::tanh_bwd(sv);
            dpre_a = dg * nn::relu_bwd(tr.conv_a.at(row, i));
            break;
          case GateKind::Gtu:
            dpre_s = ds * nn::tanh_bwd(sv);
            dpre_a = dg * nn::sigmoid_bwd(gv);
            break;
          case GateKind::Glu:
            dpre_s = ds;
            dpre_a = dg * nn::sigmoid_bwd(gv);
            break;
          case GateKind::PlainTanh:
            dpre_s = ds * nn::tanh_bwd(sv);
            dpre_a = 0.0;
            break;
        }
        if (dpre_s != 0.0) {
          gp.b_content.grad.at(f) += dpre_s;
          for (std::size_t j = 0; j < h; ++j) {
            const std::ptrdiff_t q =
                static_cast<std::ptrdiff_t>(i + j) - static_cast<std::ptrdiff_t>(pad);
            if (q < 0 || q >= static_cast<std::ptrdiff_t>(n)) continue;
            const std::size_t qq = static_cast<std::size_t>(q);
            for (std::size_t a = 0; a < d; ++a) {
              gp.w_content.grad.at(f, a, j) += dpre_s * x.at(a, qq);
              dx.at(a, qq) += dpre_s * gp.w_content.value.at(f, a, j);
            }
          }
        }
        if (dpre_a != 0.0) {
          gp.b_gate.grad.at(f) += dpre_a;
          d_gate_shift += dpre_a;
          for (std::size_t j = 0; j < h; ++j) {
            const std::ptrdiff_t q =
                static_cast<std::ptrdiff_t>(i + j) - static_cast<std::ptrdiff_t>(pad);
            if (q < 0 || q >= static_cast<std::ptrdiff_t>(n)) continue;
            const std::size_t qq = static_cast<std::size_t>(q);
            for (std::size_t a = 0; a < d; ++a) {
              gp.w_gate.grad.at(f, a, j) += dpre_a * x.at(a, qq);
              dx.at(a, qq) += dpre_a * gp.w_gate.value.at(f, a, j);
            }
          }
        }
      }
      if (d_gate_shift != 0.0)
        for (std::size_t a = 0; a < entity.size(); ++a)
          gp.v_gate.grad.at(f, a) += d_gate_shift * entity[a];
    }
  }
}

void backward_pass(const Trace& tr, instances::Label label, double scale,
                   const kge::PairKnowledge& knowledge, KcnParams& params) {
  const std::size_t L = params.dims.stacked_rows();
  const std::size_t b = params.dims.hidden_dim;
  const std::size_t cls = label == instances::Label::Cid ? kCidClass : kNullClass;

  std::vector<double> d_logits(2);
  for (std::size_t c = 0; c < 2; ++c)
    d_logits[c] = scale * (tr.probs[c] - (c == cls ? 1.0 : 0.0));

  std::vector<double> d_o(b, 0.0);
  for (std::size_t c = 0; c < 2; ++c) {
    params.b_out.grad.at(c) += d_logits[c];
    for (std::size_t j = 0; j < b; ++j) {
      params.w_out.grad.at(c, j) += d_logits[c] * tr.o[j];
      d_o[j] += params.w_out.value.at(c, j) * d_logits[c];
    }
  }
  std::vector<double> d_mm(2 * L, 0.0);
  for (std::size_t j = 0; j < b; ++j) {
    const double d_pre = d_o[j] * nn::relu_bwd(tr.o_pre[j]);
    if (d_pre == 0.0) continue;
    params.b_hidden.grad.at(j) += d_pre;
    for (std::size_t q = 0; q < 2 * L; ++q) {
      params.w_hidden.grad.at(j, q) += d_pre * tr.mm[q];
      d_mm[q] += params.w_hidden.value.at(j, q) * d_pre;
    }
  }

  Tensor dx({tr.x.dim(0), tr.x.dim(1)});
  const std::span<const double> entities[2] = {knowledge.chem_vec, knowledge.dis_vec};
  for (std::size_t branch = 0; branch < 2; ++branch) {
    const std::span<const double> d_pooled(d_mm.data() + branch * L, L);
    branch_backward(tr.x, entities[branch], knowledge.rel_vec, d_pooled, tr.branch[branch],
                    params.branch_gates(branch), params.branch_attention(branch),
                    params.variant, dx);
  }

  // embedding tables
  const std::size_t d = params.dims.embed_dim;
  for (std::size_t i = 0; i < tr.sdp.size(); ++i) {
    Param* table = nullptr;
    std::size_t row = 0;
    switch (tr.sdp[i].kind) {
      case TokenKind::Word:
        table = &params.word_table;
        row = params.vocab.word_row(tr.sdp[i].text);
        break;
      case TokenKind::DepLabel:
        table = &params.dep_table;
        row = params.vocab.dep_row(tr.sdp[i].text);
        break;
      case TokenKind::Direction:
        table = &params.dir_table;
        row = tr.sdp[i].text == instances::kUpArrow ? 0 : 1;
        break;
    }
    for (std::size_t a = 0; a < d; ++a) table->grad.at(row, a) += dx.at(a, i);
  }
}

}  // namespace

nn::Tensor gated_conv_branch(const Tensor& x, std::span<const double> entity,
                             const std::vector<GatedConvParams>& gates, GateKind kind) {
  BranchTrace tr;
  branch_conv_forward(x, entity, gates, kind, tr);
  return tr.feat;
}

PoolResult attention_pool(const Tensor& feature_map, std::span<const double> relation,
                          const AttentionParams& params, AttentionMode mode) {
  if (feature_map.dim(1) < 1) throw std::invalid_argument("attention_pool: empty feature map");
  BranchTrace tr;
  tr.feat = feature_map;
  branch_pool_forward(relation, params, mode, PoolingMode::Attention, tr);
  return {std::move(tr.pooled), std::move(tr.alpha)};
}

std::vector<double> max_pool(const Tensor& feature_map) {
  BranchTrace tr;
  tr.feat = feature_map;
  AttentionParams unused;
  branch_pool_forward({}, unused, AttentionMode::SelfAttention, PoolingMode::Max, tr);
  return tr.pooled;
}

ForwardResult kcn_forward(const std::vector<SdpToken>& sdp, const kge::PairKnowledge& knowledge,
                          const KcnParams& params) {
  Trace tr = forward_pass(sdp, knowledge, params);
  ForwardResult out;
  out.probs = {tr.probs[0], tr.probs[1]};
  out.tokens = tr.sdp;
  const std::size_t n = tr.sdp.size();
  for (std::size_t b = 0; b < 2; ++b) {
    BranchDiagnostics& diag = b == 0 ? out.chem : out.dis;
    diag.attention = tr.branch[b].alpha;
    diag.mean_gate.assign(n, 0.0);
    const std::size_t rows = tr.branch[b].g.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t row = 0; row < rows; ++row) acc += tr.branch[b].g.at(row, i);
      diag.mean_gate[i] = acc / static_cast<double>(rows);
    }
  }
  return out;
}

double kcn_loss(std::span<const TrainingExample> batch, const KcnParams& params) {
  if (batch.empty()) throw std::invalid_argument("kcn_loss: empty batch");
  double total = 0.0;
  for (const TrainingExample& ex : batch) {
    const Trace tr = forward_pass(*ex.sdp, *ex.knowledge, params);
    const std::size_t cls = ex.label == instances::Label::Cid ? kCidClass : kNullClass;
    total += nn::cross_entropy(tr.probs, cls);
  }
  return total / static_cast<double>(batch.size());
}

double kcn_loss_and_grad(std::span<const TrainingExample> batch, KcnParams& params) {
  if (batch.empty()) throw std::invalid_argument("kcn_loss_and_grad: empty batch");
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const TrainingExample& ex : batch) {
    const Trace tr = forward_pass(*ex.sdp, *ex.knowledge, params);
    const std::size_t cls = ex.label == instances::Label::Cid ? kCidClass : kNullClass;
    total += nn::cross_entropy(tr.probs, cls);
    backward_pass(tr, ex.label, scale, *ex.knowledge, params);
  }
  return total * scale;
}

// ---- checkpoint I/O ---------------------------------------------------------------

namespace {

void write_tensor(std::ostream& out, const Param& p) {
  out << "tensor " << p.name << ' ' << p.value.shape.size();
  for (std::size_t dim : p.value.shape) out << ' ' << dim;
  out << "\n";
  char buf[48];
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.value.at(i));
    out << (i ? " " : "") << buf;
  }
  out << "\n";
}

}  // namespace

void save_checkpoint(std::ostream& out, const KcnParams& params) {
  out << "KCNCKPT 1\n";
  const ModelDims& dm = params.dims;
  out << "dims " << dm.embed_dim << ' ' << dm.knowledge_dim << ' ' << dm.filters_per_width
      << ' ' << dm.hidden_dim << ' ' << dm.max_seq_len << ' ' << dm.widths.size();
  for (std::size_t w : dm.widths) out << ' ' << w;
  out << "\n";
  const VariantConfig& v = params.variant;
  out << "variant " << static_cast<int>(v.entity_mode) << ' '
      << static_cast<int>(v.attention_mode) << ' ' << static_cast<int>(v.gate_kind) << ' '
      << static_cast<int>(v.pooling) << ' ' << (v.share_gates ? 1 : 0) << ' '
      << (v.share_attention ? 1 : 0) << "\n";
  out << "words " << params.vocab.words.size() - 1 << "\n";
  for (std::size_t i = 0; i + 1 < params.vocab.words.size(); ++i)
    out << params.vocab.words[i] << "\n";
  out << "deps " << params.vocab.dep_labels.size() - 1 << "\n";
  for (std::size_t i = 0; i + 1 < params.vocab.dep_labels.size(); ++i)
    out << params.vocab.dep_labels[i] << "\n";
  for (const Param* p : params.trainable()) write_tensor(out, *p);
  out << "end\n";
}

KcnParams load_checkpoint(std::istream& in) {
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "KCNCKPT" || version != 1)
    throw std::runtime_error("not a version-1 checkpoint");

  KcnParams p;
  std::size_t n_widths = 0;
  if (!(in >> word) || word != "dims") throw std::runtime_error("checkpoint: expected dims");
  in >> p.dims.embed_dim >> p.dims.knowledge_dim >> p.dims.filters_per_width >>
      p.dims.hidden_dim >> p.dims.max_seq_len >> n_widths;
  p.dims.widths.resize(n_widths);
  for (std::size_t& w : p.dims.widths) in >> w;

  if (!(in >> word) || word != "variant") throw std::runtime_error("checkpoint: expected variant");
  int em = 0, am = 0, gk = 0, pm = 0, sg = 0, sa = 0;
  in >> em >> am >> gk >> pm >> sg >> sa;
  p.variant.entity_mode = static_cast<EntityMode>(em);
  p.variant.attention_mode = static_cast<AttentionMode>(am);
  p.variant.gate_kind = static_cast<GateKind>(gk);
  p.variant.pooling = static_cast<PoolingMode>(pm);
  p.variant.share_gates = sg != 0;
  p.variant.share_attention = sa != 0;

  std::size_t count = 0;
  if (!(in >> word >> count) || word != "words")
    throw std::runtime_error("checkpoint: expected words");
  p.vocab.words.reserve(count + 1);
  for (std::size_t i = 0; i < count; ++i) {
    in >> word;
    p.vocab.word_index.emplace(word, p.vocab.words.size());
    p.vocab.words.push_back(word);
  }
  p.vocab.words.push_back(kUnkSentinel);
  if (!(in >> word >> count) || word != "deps")
    throw std::runtime_error("checkpoint: expected deps");
  for (std::size_t i = 0; i < count; ++i) {
    in >> word;
    p.vocab.dep_index.emplace(word, p.vocab.dep_labels.size());
    p.vocab.dep_labels.push_back(word);
  }
  p.vocab.dep_labels.push_back(kUnkSentinel);

  // materialize the parameter layout, then fill tensors by name
  const std::size_t d = p.dims.embed_dim, k = p.dims.knowledge_dim;
  const std::size_t l = p.dims.filters_per_width, L = p.dims.stacked_rows();
  p.word_table = Param("word_table", {p.vocab.words.size(), d});
  p.dep_table = Param("dep_table", {p.vocab.dep_labels.size(), d});
  p.dir_table = Param("dir_table", {2, d});
  const std::size_t branch_sets = p.variant.share_gates ? 1 : 2;
  for (std::size_t b = 0; b < branch_sets; ++b) {
    std::vector<GatedConvParams> per_width;
    for (std::size_t h : p.dims.widths) {
      GatedConvParams gp;
      gp.width = h;
      const std::string prefix = "gates." + std::to_string(b) + ".w" + std::to_string(h) + ".";
      gp.w_content = Param(prefix + "w_content", {l, d, h});
      gp.b_content = Param(prefix + "b_content", {l});
      gp.w_gate = Param(prefix + "w_gate", {l, d, h});
      gp.b_gate = Param(prefix + "b_gate", {l});
      gp.v_gate = Param(prefix + "v_gate", {l, k});
      per_width.push_back(std::move(gp));
    }
    p.gates.push_back(std::move(per_width));
  }
  const std::size_t attention_sets = p.variant.share_attention ? 1 : 2;
  for (std::size_t b = 0; b < attention_sets; ++b) {
    AttentionParams ap;
    const std::string prefix = "attention." + std::to_string(b) + ".";
    ap.w_rel = Param(prefix + "w_rel", {k, L});
    ap.b_rel = Param(prefix + "b_rel", {k});
    ap.w_self = Param(prefix + "w_self", {L});
    ap.b_self = Param(prefix + "b_self", {1});
    p.attention.push_back(std::move(ap));
  }
  p.w_hidden = Param("w_hidden", {p.dims.hidden_dim, 2 * L});
  p.b_hidden = Param("b_hidden", {p.dims.hidden_dim});
  p.w_out = Param("w_out", {2, p.dims.hidden_dim});
  p.b_out = Param("b_out", {2});

  std::map<std::string, Param*> by_name;
  for (Param* prm : p.trainable()) by_name[prm->name] = prm;

  while (in >> word) {
    if (word == "end") return p;
    if (word != "tensor") throw std::runtime_error("checkpoint: unexpected token '" + word + "'");
    std::string name;
    std::size_t rank = 0;
    in >> name >> rank;
    std::vector<std::size_t> dims(rank);
    for (std::size_t& dim : dims) in >> dim;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: unknown tensor '" + name + "'");
    if (it->second->value.shape != dims)
      throw std::runtime_error("checkpoint: shape mismatch for tensor '" + name + "'");
    for (std::size_t i = 0; i < it->second->value.size(); ++i)
      if (!(in >> it->second->value.at(i)))
        throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
  }
  throw std::runtime_error("checkpoint: missing end marker");
}

}  // namespace kcn::model
