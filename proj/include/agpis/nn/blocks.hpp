#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "agpis/core/tensor.hpp"

namespace agpis {

enum class KvSource { Self, Cross };

struct AttentionConfig {
  int model_dim = 64;
  int num_heads = 4;
  bool causal = false;
  KvSource kv_source = KvSource::Self;
  bool post_norm = true;  // sublayer -> residual -> norm; false = pre-norm

  int head_dim() const { return model_dim / num_heads; }
  void validate() const {
    if (num_heads < 1 || model_dim % num_heads != 0)
      throw std::invalid_argument("attention config: model_dim " + std::to_string(model_dim) +
                                  " not divisible by num_heads " + std::to_string(num_heads));
    if (causal && kv_source == KvSource::Cross)
      throw std::logic_error("attention config: causal masking requires self kv source");
  }
};

// Named parameter registry. std::map keeps iteration order stable so the
// optimizer and checkpoint walk parameters deterministically.
struct ParamStore {
  std::map<std::string, Tensor> params;

  Tensor add(const std::string& name, Tensor t) {
    if (params.count(name)) throw std::logic_error("duplicate parameter name: " + name);
    params.emplace(name, t);
    return t;
  }

  Tensor randn(const std::string& name, int rows, int cols, Rng& rng, double sigma = 0.1) {
    return add(name, Tensor::randn(rows, cols, rng, sigma));
  }
  Tensor zeros(const std::string& name, int rows, int cols) {
    return add(name, Tensor::zeros(rows, cols, true));
  }
  Tensor ones(const std::string& name, int rows, int cols) {
    return add(name, Tensor::filled(rows, cols, 1.0, true));
  }

  Tensor get(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  void zero_grads() {
    for (auto& [name, t] : params) t.zero_grad();
  }
};

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // [DxD], [1xD]
  Tensor ln_gamma, ln_beta;               // post-sublayer norm

  static AttentionWeights create(ParamStore& ps, const std::string& prefix, int dim, Rng& rng) {
    AttentionWeights w;
    w.wq = ps.randn(prefix + ".wq", dim, dim, rng);
    w.bq = ps.zeros(prefix + ".bq", 1, dim);
    w.wk = ps.randn(prefix + ".wk", dim, dim, rng);
    w.bk = ps.zeros(prefix + ".bk", 1, dim);
    w.wv = ps.randn(prefix + ".wv", dim, dim, rng);
    w.bv = ps.zeros(prefix + ".bv", 1, dim);
    w.wo = ps.randn(prefix + ".wo", dim, dim, rng);
    w.bo = ps.zeros(prefix + ".bo", 1, dim);
    w.ln_gamma = ps.ones(prefix + ".ln_g", 1, dim);
    w.ln_beta = ps.zeros(prefix + ".ln_b", 1, dim);
    return w;
  }
};

struct PffnWeights {
  Tensor w1, b1, w2, b2;     // [Dx4D], [1x4D], [4DxD], [1xD]
  Tensor ln_gamma, ln_beta;

  static PffnWeights create(ParamStore& ps, const std::string& prefix, int dim, Rng& rng,
                            int expansion = 4) {
    PffnWeights w;
    w.w1 = ps.randn(prefix + ".w1", dim, dim * expansion, rng);
    w.b1 = ps.zeros(prefix + ".b1", 1, dim * expansion);
    w.w2 = ps.randn(prefix + ".w2", dim * expansion, dim, rng);
    w.b2 = ps.zeros(prefix + ".b2", 1, dim);
    w.ln_gamma = ps.ones(prefix + ".ln_g", 1, dim);
    w.ln_beta = ps.zeros(prefix + ".ln_b", 1, dim);
    return w;
  }
};

// token embedding lookup; gradient scatters additively into the table
inline Tensor embed(const std::vector<int>& tokens, const Tensor& table) {
  const int V = table.rows(), D = table.cols();
  for (int id : tokens)
    if (id < 0 || id >= V)
      throw std::out_of_range("embed: token id " + std::to_string(id) + " outside vocabulary [0, " +
                              std::to_string(V) + ")");
  const int L = static_cast<int>(tokens.size());
  std::vector<double> out(static_cast<std::size_t>(L) * D);
  for (int i = 0; i < L; ++i)
    std::copy_n(table.data().begin() + static_cast<std::size_t>(tokens[i]) * D, D,
                out.begin() + static_cast<std::size_t>(i) * D);
  auto tn = table.node();
  auto ids = std::make_shared<std::vector<int>>(tokens);
  return Tensor::make_result({L, D}, std::move(out), {table},
                             [tn, ids, D](detail::TensorNode& n) {
                               tn->ensure_grad();
                               for (std::size_t i = 0; i < ids->size(); ++i)
                                 for (int c = 0; c < D; ++c)
                                   tn->grad[static_cast<std::size_t>((*ids)[i]) * D + c] +=
                                       n.grad[i * D + c];
                             });
}

// x + pos_table[0..len)
inline Tensor add_positions(const Tensor& x, const Tensor& pos_table) {
  if (x.cols() != pos_table.cols())
    throw std::invalid_argument("add_positions: dim mismatch " + x.shape_str() + " vs " +
                                pos_table.shape_str());
  if (x.rows() > pos_table.rows())
    throw std::length_error("add_positions: sequence length " + std::to_string(x.rows()) +
                            " exceeds position table capacity " +
                            std::to_string(pos_table.rows()));
  return add(x, slice_rows(pos_table, 0, x.rows()));
}

// Multi-head scaled dot-product attention followed by residual add and
// post-norm. causal masks keys with index > query index.
inline Tensor attention(const Tensor& q_in, const Tensor& kv_in, const AttentionWeights& w,
                        const AttentionConfig& cfg) {
  cfg.validate();
  if (cfg.kv_source == KvSource::Self && q_in.node() != kv_in.node())
    throw std::logic_error("attention: self kv source requires q_in and kv_in to be the same tensor");
  const int D = cfg.model_dim;
  const int hd = cfg.head_dim();
  const int Lq = q_in.rows();
  const int Lk = kv_in.rows();
  Tensor q_src = cfg.post_norm ? q_in : layer_norm(q_in, w.ln_gamma, w.ln_beta);
  Tensor kv_src = cfg.post_norm ? kv_in
                  : (q_in.node() == kv_in.node() ? q_src
                                                 : layer_norm(kv_in, w.ln_gamma, w.ln_beta));
  Tensor q = add_row(matmul(q_src, w.wq), w.bq);
  Tensor k = add_row(matmul(kv_src, w.wk), w.bk);
  Tensor v = add_row(matmul(kv_src, w.wv), w.bv);

  std::vector<double> mask;
  if (cfg.causal) {
    mask.assign(static_cast<std::size_t>(Lq) * Lk, 0.0);
    for (int i = 0; i < Lq; ++i)
      for (int j = i + 1; j < Lk; ++j) mask[static_cast<std::size_t>(i) * Lk + j] = -1e9;
  }

  const double scl = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> heads;
  heads.reserve(cfg.num_heads);
  for (int h = 0; h < cfg.num_heads; ++h) {
    Tensor qh = slice_cols(q, h * hd, hd);
    Tensor kh = slice_cols(k, h * hd, hd);
    Tensor vh = slice_cols(v, h * hd, hd);
    Tensor scores = scale(matmul_nt(qh, kh), scl);
    if (cfg.causal) scores = add_const(scores, mask);
    Tensor attn = softmax_rows(scores);
    heads.push_back(matmul(attn, vh));
  }
  Tensor out = add_row(matmul(concat_cols(heads), w.wo), w.bo);
  if (!cfg.post_norm) return add(q_in, out);
  return layer_norm(add(q_in, out), w.ln_gamma, w.ln_beta);
}

// position-wise feed-forward: linear -> GELU -> linear, residual, post-norm
inline Tensor pffn(const Tensor& x, const PffnWeights& w, bool post_norm = true) {
  Tensor in = post_norm ? x : layer_norm(x, w.ln_gamma, w.ln_beta);
  Tensor h = gelu(add_row(matmul(in, w.w1), w.b1));
  Tensor out = add_row(matmul(h, w.w2), w.b2);
  if (!post_norm) return add(x, out);
  return layer_norm(add(x, out), w.ln_gamma, w.ln_beta);
}

// affine classification head over row vectors: [LxD] * [Dxc] + b
inline Tensor linear_head(const Tensor& x, const Tensor& W, const Tensor& b) {
  return add_row(matmul(x, W), b);
}

}  // namespace agpis
