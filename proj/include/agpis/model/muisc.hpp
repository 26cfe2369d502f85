#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "agpis/data/image.hpp"
#include "agpis/nn/blocks.hpp"

namespace agpis {

struct MuiscConfig {
  int patch = 8;
  int img_h = 32;
  int img_w = 32;
  int dim = 64;
  int heads = 4;
  int enc_blocks = 2;     // per-image ViT blocks
  int fusion_blocks = 1;  // cross-image encoder blocks
  int dec_blocks = 2;
  int vocab = 64;
  int num_classes = 6;
  int seq_len = 3;  // images per target sequence
  int max_text = 32;
  double lambda_nlg = 0.1;
  double lambda_mcc = 1.0;
  // ablation flags
  bool hierarchical_fusion = true;
  bool use_decoder = true;
  bool nlg_task = true;
  bool title_input = true;
  // per-block cross-attention presence; empty means every block has it
  std::vector<bool> mhca_present;

  int num_patches() const { return (img_h / patch) * (img_w / patch); }
  int tokens_per_image() const { return num_patches() + 1; }
  int fused_rows() const { return tokens_per_image() * seq_len; }

  bool block_has_mhca(int i) const {
    return mhca_present.empty() ? true : mhca_present.at(i);
  }

  void validate() const {
    if (img_h % patch != 0 || img_w % patch != 0)
      throw std::invalid_argument("muisc config: image " + std::to_string(img_h) + "x" +
                                  std::to_string(img_w) + " not divisible by patch " +
                                  std::to_string(patch));
    if (dim % heads != 0) throw std::invalid_argument("muisc config: dim not divisible by heads");
    if (lambda_nlg <= 0.0 || lambda_mcc <= 0.0)
      throw std::invalid_argument("muisc config: loss balance factors must be positive");
    if (!mhca_present.empty() && static_cast<int>(mhca_present.size()) != dec_blocks)
      throw std::invalid_argument("muisc config: mhca mask length must equal dec_blocks");
  }

  static MuiscConfig desk() { return MuiscConfig{}; }

  // full-scale configuration; constructs and runs forward but is far too
  // slow to train on a desktop CPU
  static MuiscConfig paper() {
    MuiscConfig c;
    c.patch = 16;
    c.img_h = c.img_w = 224;
    c.dim = 768;
    c.heads = 12;
    c.enc_blocks = 12;
    c.fusion_blocks = 1;
    c.dec_blocks = 3;
    c.num_classes = 45;
    return c;
  }

  // minimal configuration for end-to-end gradient checking
  static MuiscConfig tiny() {
    MuiscConfig c;
    c.patch = 4;
    c.img_h = c.img_w = 8;
    c.dim = 8;
    c.heads = 2;
    c.enc_blocks = 1;
    c.fusion_blocks = 1;
    c.dec_blocks = 1;
    c.vocab = 16;
    c.num_classes = 4;
    c.seq_len = 2;
    c.max_text = 16;
    return c;
  }
};

struct EncoderBlockWeights {
  AttentionWeights attn;
  PffnWeights ffn;
};

struct DecoderBlockWeights {
  AttentionWeights self_attn;
  AttentionWeights cross_attn;
  PffnWeights ffn;
};

struct MuiscWeights {
  MuiscConfig cfg;
  ParamStore store;

  Tensor patch_proj_w, patch_proj_b;
  Tensor cls;
  Tensor enc_pos;
  std::vector<EncoderBlockWeights> enc_blocks;
  Tensor image_index_emb;
  std::vector<EncoderBlockWeights> fusion_blocks;
  Tensor tok_emb;
  Tensor dec_pos;
  std::vector<DecoderBlockWeights> dec_blocks;
  Tensor lm_w, lm_b;
  Tensor mcc_w, mcc_b;

  static MuiscWeights create(const MuiscConfig& cfg, Rng& rng) {
    cfg.validate();
    MuiscWeights w;
    w.cfg = cfg;
    ParamStore& ps = w.store;
    const int D = cfg.dim;
    const int patch_dim = cfg.patch * cfg.patch * 3;
    w.patch_proj_w = ps.randn("enc.patch_proj.w", patch_dim, D, rng);
    w.patch_proj_b = ps.zeros("enc.patch_proj.b", 1, D);
    w.cls = ps.randn("enc.cls", 1, D, rng);
    w.enc_pos = ps.randn("enc.pos", cfg.tokens_per_image(), D, rng);
    for (int i = 0; i < cfg.enc_blocks; ++i) {
      std::string p = "enc.blk" + std::to_string(i);
      w.enc_blocks.push_back({AttentionWeights::create(ps, p + ".attn", D, rng),
                              PffnWeights::create(ps, p + ".pffn", D, rng)});
    }
    w.image_index_emb = ps.randn("fuse.idx", cfg.seq_len, D, rng);
    for (int i = 0; i < cfg.fusion_blocks; ++i) {
      std::string p = "fuse.blk" + std::to_string(i);
      w.fusion_blocks.push_back({AttentionWeights::create(ps, p + ".attn", D, rng),
                                 PffnWeights::create(ps, p + ".pffn", D, rng)});
    }
    w.tok_emb = ps.randn("dec.tok", cfg.vocab, D, rng);
    w.dec_pos = ps.randn("dec.pos", cfg.max_text, D, rng);
    for (int i = 0; i < cfg.dec_blocks; ++i) {
      std::string p = "dec.blk" + std::to_string(i);
      w.dec_blocks.push_back({AttentionWeights::create(ps, p + ".self", D, rng),
                              AttentionWeights::create(ps, p + ".cross", D, rng),
                              PffnWeights::create(ps, p + ".pffn", D, rng)});
    }
    w.lm_w = ps.randn("head.lm.w", D, cfg.vocab, rng);
    w.lm_b = ps.zeros("head.lm.b", 1, cfg.vocab);
    w.mcc_w = ps.randn("head.mcc.w", D, cfg.num_classes, rng);
    w.mcc_b = ps.zeros("head.mcc.b", 1, cfg.num_classes);
    return w;
  }
};

// flatten image into [Np x P*P*3] patch rows, scan order top-left to
// bottom-right; constant input, no gradient into pixels
inline Tensor patchify(const Image& img, const MuiscConfig& cfg) {
  if (img.height != cfg.img_h || img.width != cfg.img_w)
    throw std::invalid_argument("patchify: image " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + " does not match config " +
                                std::to_string(cfg.img_h) + "x" + std::to_string(cfg.img_w));
  const int P = cfg.patch;
  const int py = cfg.img_h / P, px = cfg.img_w / P;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(py) * px * P * P * 3);
  for (int by = 0; by < py; ++by)
    for (int bx = 0; bx < px; ++bx)
      for (int y = 0; y < P; ++y)
        for (int x = 0; x < P; ++x)
          for (int c = 0; c < 3; ++c) out.push_back(img.at(by * P + y, bx * P + x, c));
  return Tensor::from_data(py * px, P * P * 3, std::move(out));
}

// patchify -> project -> prepend CLS -> positions -> N^e encoder blocks
inline Tensor encode_image(const Image& img, const MuiscWeights& w) {
  const MuiscConfig& cfg = w.cfg;
  Tensor patches = add_row(matmul(patchify(img, cfg), w.patch_proj_w), w.patch_proj_b);
  Tensor x = concat_rows({w.cls, patches});
  x = add_positions(x, w.enc_pos);
  AttentionConfig ac{cfg.dim, cfg.heads, false, KvSource::Self};
  for (const auto& blk : w.enc_blocks) {
    x = attention(x, x, blk.attn, ac);
    x = pffn(x, blk.ffn);
  }
  return x;
}

// concatenate per-image features in order, add the learned image-index
// embedding, then run the N^s fusion blocks (skipped when the
// hierarchical_fusion flag is off: plain late fusion)
inline Tensor fuse_sequence(const std::vector<Tensor>& per_image, const MuiscWeights& w) {
  const MuiscConfig& cfg = w.cfg;
  if (static_cast<int>(per_image.size()) != cfg.seq_len)
    throw std::logic_error("fuse_sequence: expected " + std::to_string(cfg.seq_len) +
                           " image features, got " + std::to_string(per_image.size()));
  std::vector<Tensor> tagged;
  tagged.reserve(per_image.size());
  for (int k = 0; k < cfg.seq_len; ++k)
    tagged.push_back(add_row(per_image[k], slice_rows(w.image_index_emb, k, 1)));
  Tensor fe = concat_rows(tagged);
  if (cfg.hierarchical_fusion) {
    AttentionConfig ac{cfg.dim, cfg.heads, false, KvSource::Self};
    for (const auto& blk : w.fusion_blocks) {
      fe = attention(fe, fe, blk.attn, ac);
      fe = pffn(fe, blk.ffn);
    }
  }
  return fe;
}

// W^d = title ++ [s] ++ feedback ++ [eot] (training) or title ++ [s] (inference)
struct DecoderInput {
  std::vector<int> tokens;
  int sep_pos = 0;
  int feedback_len = 0;  // tokens covered by the NLG loss (terminator excluded)
  bool training = false;

  static DecoderInput for_training(const std::vector<int>& title,
                                   const std::vector<int>& feedback, int sep_token,
                                   int eot_token, const MuiscConfig& cfg) {
    DecoderInput d;
    d.training = true;
    if (cfg.title_input) d.tokens = title;
    d.sep_pos = static_cast<int>(d.tokens.size());
    d.tokens.push_back(sep_token);
    d.tokens.insert(d.tokens.end(), feedback.begin(), feedback.end());
    d.tokens.push_back(eot_token);
    d.feedback_len = static_cast<int>(feedback.size());
    if (static_cast<int>(d.tokens.size()) > cfg.max_text)
      throw std::length_error("decoder input length " + std::to_string(d.tokens.size()) +
                              " exceeds max text length " + std::to_string(cfg.max_text));
    return d;
  }

  static DecoderInput for_inference(const std::vector<int>& title, int sep_token,
                                    const MuiscConfig& cfg) {
    DecoderInput d;
    d.training = false;
    if (cfg.title_input) d.tokens = title;
    d.sep_pos = static_cast<int>(d.tokens.size());
    d.tokens.push_back(sep_token);
    if (static_cast<int>(d.tokens.size()) > cfg.max_text)
      throw std::length_error("decoder input length " + std::to_string(d.tokens.size()) +
                              " exceeds max text length " + std::to_string(cfg.max_text));
    return d;
  }
};

struct MuiscOutput {
  Tensor hidden;        // H^d, [L x D]; undefined when use_decoder=false
  Tensor lm_logits;     // [L x V]; undefined when use_decoder=false
  Tensor class_logits;  // [1 x K^g]
  std::vector<double> p_mcc;
  double p_t = 0.0;  // p^mcc_1, probability of being qualified
};

inline MuiscOutput decode(const Tensor& fe, const DecoderInput& din, const MuiscWeights& w) {
  const MuiscConfig& cfg = w.cfg;
  MuiscOutput out;
  if (!cfg.use_decoder) {
    // ablation: McC head over mean-pooled sequence feature
    out.class_logits = linear_head(mean_rows(fe), w.mcc_w, w.mcc_b);
  } else {
    Tensor x = add_positions(embed(din.tokens, w.tok_emb), w.dec_pos);
    AttentionConfig self_cfg{cfg.dim, cfg.heads, true, KvSource::Self};
    AttentionConfig cross_cfg{cfg.dim, cfg.heads, false, KvSource::Cross};
    for (int i = 0; i < cfg.dec_blocks; ++i) {
      const auto& blk = w.dec_blocks[i];
      x = attention(x, x, blk.self_attn, self_cfg);
      if (cfg.block_has_mhca(i)) x = attention(x, fe, blk.cross_attn, cross_cfg);
      x = pffn(x, blk.ffn);
    }
    out.hidden = x;
    out.lm_logits = linear_head(x, w.lm_w, w.lm_b);
    out.class_logits = linear_head(slice_rows(x, din.sep_pos, 1), w.mcc_w, w.mcc_b);
  }
  Tensor probs = softmax_rows(out.class_logits);
  out.p_mcc = probs.data();
  out.p_t = out.p_mcc[0];
  return out;
}

inline MuiscOutput muisc_forward(const std::vector<Image>& images, const DecoderInput& din,
                                 const MuiscWeights& w) {
  std::vector<Tensor> feats;
  feats.reserve(images.size());
  for (const Image& im : images) feats.push_back(encode_image(im, w));
  return decode(fuse_sequence(feats, w), din, w);
}

// NLG loss: sum over feedback positions of -log p(w^f_q | context). Title
// tokens and the separator are context only; the terminator is likewise
// excluded so a one-token feedback contributes exactly one term.
inline Tensor loss_nlg(const MuiscOutput& out, const DecoderInput& din) {
  if (!din.training)
    throw std::logic_error("loss_nlg: inference-mode decoder input has no feedback target");
  const int kf = din.feedback_len;
  // row sep_pos + j predicts the token at index sep_pos + 1 + j
  Tensor rows = slice_rows(out.lm_logits, din.sep_pos, kf);
  std::vector<int> targets(din.tokens.begin() + din.sep_pos + 1,
                           din.tokens.begin() + din.sep_pos + 1 + kf);
  return scale(cross_entropy_logits(rows, targets), static_cast<double>(kf));
}

inline Tensor loss_mcc(const MuiscOutput& out, int label) {
  return cross_entropy_logits(out.class_logits, {label});
}

inline Tensor loss_total(const Tensor& l_nlg, const Tensor& l_mcc, const MuiscConfig& cfg) {
  Tensor mcc_term = scale(l_mcc, cfg.lambda_mcc);
  if (!cfg.nlg_task) return mcc_term;
  return add(scale(l_nlg, cfg.lambda_nlg), mcc_term);
}

struct Prediction {
  double p_t = 0.0;
  std::vector<double> p_mcc;
};

inline Prediction predict(const std::vector<Image>& images, const std::vector<int>& title,
                          int sep_token, const MuiscWeights& w) {
  DecoderInput din = DecoderInput::for_inference(title, sep_token, w.cfg);
  MuiscOutput out = muisc_forward(images, din, w);
  return {out.p_t, out.p_mcc};
}

// greedy feedback generation, informational only
inline std::vector<int> greedy_decode(const std::vector<Image>& images,
                                      const std::vector<int>& title, int sep_token,
                                      int eot_token, const MuiscWeights& w,
                                      int max_new_tokens = 8) {
  const MuiscConfig& cfg = w.cfg;
  if (!cfg.use_decoder) return {};
  std::vector<Tensor> feats;
  for (const Image& im : images) feats.push_back(encode_image(im, w));
  Tensor fe = fuse_sequence(feats, w);
  DecoderInput din = DecoderInput::for_inference(title, sep_token, cfg);
  std::vector<int> generated;
  for (int step = 0; step < max_new_tokens; ++step) {
    if (static_cast<int>(din.tokens.size()) >= cfg.max_text) break;
    MuiscOutput out = decode(fe, din, w);
    const int last = static_cast<int>(din.tokens.size()) - 1;
    Tensor row = slice_rows(out.lm_logits, last, 1);
    int best = 0;
    for (int v = 1; v < cfg.vocab; ++v)
      if (row.data()[v] > row.data()[best]) best = v;
    if (best == eot_token) break;
    generated.push_back(best);
    din.tokens.push_back(best);
  }
  return generated;
}

}  // namespace agpis
