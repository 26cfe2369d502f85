#pragma once

#include <string>
#include <vector>

#include "agpis/core/gradcheck.hpp"
#include "agpis/model/muisc.hpp"

namespace agpis {

struct GradCheckEntry {
  std::string name;
  double err = 0.0;
};

namespace detail_gradsuite {

// squashes a matrix output to a non-degenerate scalar: sum(x * m) with a
// fixed pseudo-random mask so no gradient component cancels to zero
inline Tensor squash(const Tensor& x) {
  std::vector<double> mask(x.size());
  Rng rng(0xDEAD);
  for (double& m : mask) m = 0.5 + rng.uniform();
  Tensor mt = Tensor::from_data(x.rows(), x.cols(), mask);
  return sum_all(mul(x, mt));
}

}  // namespace detail_gradsuite

// Central-difference verification of every building block plus the full
// two-task loss at the scaled-down config, one entry per parameter group.
inline std::vector<GradCheckEntry> run_grad_suite() {
  using detail_gradsuite::squash;
  std::vector<GradCheckEntry> out;
  const int D = 8, L = 5;

  // ---- attention (self, causal off/on; cross) ----
  {
    Rng rng(21);
    ParamStore ps;
    AttentionWeights w = AttentionWeights::create(ps, "a", D, rng);
    Tensor x = Tensor::randn(L, D, rng, 0.5);
    Tensor kv = Tensor::randn(3, D, rng, 0.5);
    AttentionConfig self_cfg{D, 2, false, KvSource::Self};
    AttentionConfig causal_cfg{D, 2, true, KvSource::Self};
    AttentionConfig cross_cfg{D, 2, false, KvSource::Cross};
    out.push_back({"attention.self/x",
                   grad_check([&](const Tensor&) { return squash(attention(x, x, w, self_cfg)); }, x)});
    out.push_back({"attention.causal/x",
                   grad_check([&](const Tensor&) { return squash(attention(x, x, w, causal_cfg)); }, x)});
    out.push_back({"attention.cross/kv",
                   grad_check([&](const Tensor&) { return squash(attention(x, kv, w, cross_cfg)); }, kv)});
    Tensor wq = ps.get("a.wq"), wo = ps.get("a.wo");
    out.push_back({"attention.self/wq",
                   grad_check([&](const Tensor&) { return squash(attention(x, x, w, self_cfg)); }, wq)});
    out.push_back({"attention.self/wo",
                   grad_check([&](const Tensor&) { return squash(attention(x, x, w, self_cfg)); }, wo)});
  }

  // ---- position-wise feed-forward ----
  {
    Rng rng(22);
    ParamStore ps;
    PffnWeights w = PffnWeights::create(ps, "f", D, rng);
    Tensor x = Tensor::randn(L, D, rng, 0.5);
    out.push_back(
        {"pffn/x", grad_check([&](const Tensor&) { return squash(pffn(x, w)); }, x)});
    Tensor w1 = ps.get("f.w1"), w2 = ps.get("f.w2");
    out.push_back(
        {"pffn/w1", grad_check([&](const Tensor&) { return squash(pffn(x, w)); }, w1)});
    out.push_back(
        {"pffn/w2", grad_check([&](const Tensor&) { return squash(pffn(x, w)); }, w2)});
  }

  // ---- embeddings, positions, layer norm, heads ----
  {
    Rng rng(23);
    Tensor table = Tensor::randn(12, D, rng, 0.5);
    std::vector<int> ids{3, 1, 3, 7};
    out.push_back({"embed/table",
                   grad_check([&](const Tensor&) { return squash(embed(ids, table)); }, table)});
    Tensor pos = Tensor::randn(8, D, rng, 0.5);
    Tensor x = Tensor::randn(4, D, rng, 0.5);
    out.push_back({"add_positions/pos",
                   grad_check([&](const Tensor&) { return squash(add_positions(x, pos)); }, pos)});
    Tensor gamma = Tensor::filled(1, D, 1.0, true);
    Tensor beta = Tensor::zeros(1, D, true);
    out.push_back({"layer_norm/x", grad_check([&](const Tensor&) {
                                     return squash(layer_norm(x, gamma, beta));
                                   }, x)});
    Tensor hw = Tensor::randn(D, 3, rng, 0.5);
    Tensor hb = Tensor::zeros(1, 3, true);
    out.push_back({"linear_head/w", grad_check([&](const Tensor&) {
                                      return squash(linear_head(x, hw, hb));
                                    }, hw)});
    Tensor logits = Tensor::randn(3, 6, rng, 0.8);
    out.push_back({"cross_entropy/logits",
                   grad_check([&](const Tensor&) {
                     return cross_entropy_logits(logits, {2, 0, 5});
                   }, logits)});
  }

  // ---- full model loss, every parameter group ----
  {
    MuiscConfig cfg = MuiscConfig::tiny();
    Rng rng(24);
    MuiscWeights w = MuiscWeights::create(cfg, rng);
    std::vector<Image> images;
    for (int k = 0; k < cfg.seq_len; ++k) {
      Image im(cfg.img_h, cfg.img_w);
      for (double& p : im.pix) p = 0.5 + 0.4 * rng.normal();
      images.push_back(im);
    }
    std::vector<int> title{3, 5};
    std::vector<int> feedback{6, 2};
    const int label = 1;
    DecoderInput din = DecoderInput::for_training(title, feedback, 1, 0, cfg);
    auto loss = [&] {
      MuiscOutput o = muisc_forward(images, din, w);
      return loss_total(loss_nlg(o, din), loss_mcc(o, label), cfg);
    };
    for (auto& [name, p] : w.store.params) {
      Tensor t = p;
      out.push_back({"muisc_loss/" + name,
                     grad_check([&](const Tensor&) { return loss(); }, t)});
    }
  }
  return out;
}

}  // namespace agpis
