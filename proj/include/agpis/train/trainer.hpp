#pragma once

#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "agpis/data/ruleworld.hpp"
#include "agpis/model/muisc.hpp"
#include "agpis/stage1/stage1.hpp"
#include "agpis/train/adamw.hpp"
#include "agpis/train/metrics.hpp"

namespace agpis {

// ---------------------------------------------------------------------------
// stage-1 binary classifiers (tiny ViT + sigmoid head)
// ---------------------------------------------------------------------------

struct BinaryClassifierConfig {
  int patch = 8;
  int img = 32;
  int dim = 32;
  int heads = 2;
  int blocks = 1;

  int tokens() const { return (img / patch) * (img / patch) + 1; }
};

struct BinaryClassifier {
  BinaryClassifierConfig cfg;
  ParamStore store;
  Tensor patch_proj_w, patch_proj_b, cls, pos;
  std::vector<EncoderBlockWeights> enc;
  Tensor head_w, head_b;

  static BinaryClassifier create(const BinaryClassifierConfig& cfg, Rng& rng) {
    BinaryClassifier m;
    m.cfg = cfg;
    ParamStore& ps = m.store;
    const int D = cfg.dim;
    m.patch_proj_w = ps.randn("patch_proj.w", cfg.patch * cfg.patch * 3, D, rng);
    m.patch_proj_b = ps.zeros("patch_proj.b", 1, D);
    m.cls = ps.randn("cls", 1, D, rng);
    m.pos = ps.randn("pos", cfg.tokens(), D, rng);
    for (int i = 0; i < cfg.blocks; ++i) {
      std::string p = "blk" + std::to_string(i);
      m.enc.push_back({AttentionWeights::create(ps, p + ".attn", D, rng),
                       PffnWeights::create(ps, p + ".pffn", D, rng)});
    }
    m.head_w = ps.randn("head.w", D, 1, rng);
    m.head_b = ps.zeros("head.b", 1, 1);
    return m;
  }

  Tensor logit(const Image& im) const {
    MuiscConfig pc;
    pc.patch = cfg.patch;
    pc.img_h = pc.img_w = cfg.img;
    pc.dim = cfg.dim;
    Tensor patches = add_row(matmul(patchify(im, pc), patch_proj_w), patch_proj_b);
    Tensor x = add_positions(concat_rows({cls, patches}), pos);
    AttentionConfig ac{cfg.dim, cfg.heads, false, KvSource::Self};
    for (const auto& blk : enc) {
      x = attention(x, x, blk.attn, ac);
      x = pffn(x, blk.ffn);
    }
    return linear_head(slice_rows(x, 0, 1), head_w, head_b);
  }

  double prob(const Image& im) const {
    return 1.0 / (1.0 + std::exp(-logit(im).item()));
  }

  BinaryScorer scorer() const {
    return [this](const Image& im) { return prob(im); };
  }
};

struct Stage1Models {
  BinaryClassifier primary;
  BinaryClassifier nc;
};

// Builds balanced (image, label) training sets from generator oracle
// annotations and fits both stage-1 classifiers.
inline Stage1Models train_stage1(const Dataset& ds, const BinaryClassifierConfig& cfg,
                                 int epochs, int batch_size, std::uint64_t seed,
                                 const AdamWConfig& opt_cfg = {}) {
  struct Sample {
    const Image* im;
    int label;
  };
  std::vector<Sample> primary_set, nc_set;
  for (const auto& rec : ds.records) {
    if (rec.split != "train") continue;
    // primary: the true primary plus one negative drawn deterministically
    primary_set.push_back({&rec.pool[rec.oracle.true_primary], 1});
    int neg = (rec.oracle.true_primary + 1) % static_cast<int>(rec.pool.size());
    primary_set.push_back({&rec.pool[neg], 0});
    // non-compliance: flagged pool images vs an equal count of clean ones
    std::size_t clean_needed = rec.oracle.non_compliant.size();
    for (int id : rec.oracle.non_compliant) nc_set.push_back({&rec.pool[id], 1});
    for (std::size_t i = 0; i < rec.pool.size() && clean_needed > 0; ++i) {
      bool flagged = false;
      for (int id : rec.oracle.non_compliant)
        if (id == static_cast<int>(i)) flagged = true;
      if (!flagged) {
        nc_set.push_back({&rec.pool[i], 0});
        --clean_needed;
      }
    }
  }

  auto fit = [&](std::vector<Sample>& samples, std::uint64_t stream) {
    Rng rng(Rng::derive(seed, stream));
    BinaryClassifier model = BinaryClassifier::create(cfg, rng);
    AdamW opt(opt_cfg);
    for (int epoch = 0; epoch < epochs; ++epoch) {
      rng.shuffle(samples);
      for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        std::size_t end = std::min(samples.size(), start + batch_size);
        model.store.zero_grads();
        for (std::size_t i = start; i < end; ++i) {
          Tensor l = scale(bce_with_logit(model.logit(*samples[i].im), samples[i].label),
                           1.0 / static_cast<double>(end - start));
          backward(l);
        }
        opt.step(model.store);
      }
    }
    return model;
  };

  Stage1Models out{fit(primary_set, 0x9001), fit(nc_set, 0x9002)};
  return out;
}

// ---------------------------------------------------------------------------
// MUIsC training
// ---------------------------------------------------------------------------

struct TrainOptions {
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 0;
  AdamWConfig opt;
  bool track_val = true;
};

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

inline Tensor sample_loss(const ReviewRecord& rec, const MuiscWeights& w) {
  const MuiscConfig& cfg = w.cfg;
  DecoderInput din =
      DecoderInput::for_training(rec.title, rec.feedback, Vocab::kSep, Vocab::kEot, cfg);
  std::vector<Image> images;
  for (int idx : rec.sequence) images.push_back(rec.pool[idx]);
  MuiscOutput out = muisc_forward(images, din, w);
  Tensor l_mcc = loss_mcc(out, rec.label);
  Tensor l_nlg;
  if (cfg.nlg_task && cfg.use_decoder) l_nlg = loss_nlg(out, din);
  return loss_total(l_nlg, l_mcc, cfg);
}

inline std::vector<EpochLoss> train_muisc(MuiscWeights& w,
                                          const std::vector<const ReviewRecord*>& train_set,
                                          const std::vector<const ReviewRecord*>& val_set,
                                          const TrainOptions& opts) {
  if (train_set.empty()) throw std::invalid_argument("train_muisc: empty training set");
  AdamW opt(opts.opt);
  Rng rng(Rng::derive(opts.seed, 0x73a1));
  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::vector<EpochLoss> curve;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      std::size_t end = std::min(order.size(), start + opts.batch_size);
      w.store.zero_grads();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        Tensor l = scale(sample_loss(*train_set[order[i]], w),
                         1.0 / static_cast<double>(end - start));
        batch_loss += l.item();
        backward(l);
      }
      opt.step(w.store);
      epoch_loss += batch_loss;
      ++batches;
    }
    EpochLoss pt;
    pt.epoch = epoch;
    pt.train_loss = epoch_loss / std::max(1L, batches);
    if (opts.track_val && !val_set.empty()) {
      double v = 0.0;
      for (const ReviewRecord* rec : val_set) v += sample_loss(*rec, w).item();
      pt.val_loss = v / static_cast<double>(val_set.size());
    }
    curve.push_back(pt);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

inline std::vector<const ReviewRecord*> split_of(const Dataset& ds, const std::string& split) {
  std::vector<const ReviewRecord*> out;
  for (const auto& r : ds.records)
    if (r.split == split) out.push_back(&r);
  return out;
}

// AUC / R@P on the full test set plus balanced per-category subsets built
// from the category's rejected samples and an equal count of qualified ones.
// jobs > 1 scores samples on worker threads; results merge in id order, so
// the report is identical to a single-threaded run.
inline EvalReport evaluate(const MuiscWeights& w, const std::vector<const ReviewRecord*>& test,
                           int jobs = 1) {
  EvalReport rep;
  rep.sample_count = static_cast<long>(test.size());
  rep.confusion.assign(w.cfg.num_classes, std::vector<long>(w.cfg.num_classes, 0));

  std::vector<Prediction> preds(test.size());
  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      std::vector<Image> images;
      for (int idx : test[i]->sequence) images.push_back(test[i]->pool[idx]);
      preds[i] = predict(images, test[i]->title, Vocab::kSep, w);
    }
  };
  if (jobs <= 1 || test.size() < 2) {
    score_range(0, test.size());
  } else {
    const std::size_t workers = std::min<std::size_t>(jobs, test.size());
    std::vector<std::thread> pool;
    const std::size_t chunk = (test.size() + workers - 1) / workers;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back(score_range, t * chunk, std::min(test.size(), (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }

  std::vector<double> scores;
  std::vector<int> labels;  // 1 = qualified
  for (std::size_t i = 0; i < test.size(); ++i) {
    const ReviewRecord* rec = test[i];
    const Prediction& pred = preds[i];
    scores.push_back(pred.p_t);
    labels.push_back(rec->label == 0 ? 1 : 0);
    int argmax = 0;
    for (int c = 1; c < w.cfg.num_classes; ++c)
      if (pred.p_mcc[c] > pred.p_mcc[argmax]) argmax = c;
    rep.confusion[rec->label][argmax]++;
  }
  rep.auc = roc_auc(scores, labels);
  rep.r_at_p80 = recall_at_precision(scores, labels, 0.80);
  rep.r_at_p85 = recall_at_precision(scores, labels, 0.85);
  rep.r_at_p90 = recall_at_precision(scores, labels, 0.90);

  // qualified counterparts are drawn in sku order so the balanced subsets do
  // not depend on the caller's test ordering
  std::vector<std::size_t> qualified_by_sku;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (test[i]->label == 0) qualified_by_sku.push_back(i);
  std::sort(qualified_by_sku.begin(), qualified_by_sku.end(),
            [&](std::size_t a, std::size_t b) { return test[a]->sku < test[b]->sku; });

  auto subset_auc = [&](RuleCategory cat) -> double {
    std::vector<double> s;
    std::vector<int> l;
    std::size_t rejected = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
      if (test[i]->label != 0 &&
          rule_category(static_cast<RuleClass>(test[i]->label)) == cat) {
        s.push_back(scores[i]);
        l.push_back(0);
        ++rejected;
      }
    std::size_t qualified = 0;
    for (std::size_t k = 0; k < qualified_by_sku.size() && qualified < rejected; ++k) {
      s.push_back(scores[qualified_by_sku[k]]);
      l.push_back(1);
      ++qualified;
    }
    if (rejected == 0 || qualified == 0) return -1.0;  // metric omitted
    return roc_auc(s, l);
  };
  rep.auc_single = subset_auc(RuleCategory::Single);
  rep.auc_pair = subset_auc(RuleCategory::Pair);
  rep.auc_multi = subset_auc(RuleCategory::Multi);
  return rep;
}

// ---------------------------------------------------------------------------
// ablation harness (Table-3-style flag ladder)
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string name;
  MuiscConfig cfg;
  EvalReport report;
  double paper_auc = 0.0;  // reference only, not binding on synthetic data
};

inline std::vector<AblationRow> ablation_suite(const Dataset& ds, const MuiscConfig& base,
                                               const TrainOptions& opts) {
  struct Spec {
    const char* name;
    bool hier, dec, nlg, title;
    double paper_auc;
  };
  const Spec specs[] = {
      {"late-fusion McC", false, false, false, false, 0.764},
      {"+hierarchical", true, false, false, false, 0.778},
      {"+encoder-decoder", true, true, false, false, 0.780},
      {"+NLG task", true, true, true, false, 0.792},
      {"+title input", true, true, true, true, 0.800},
  };
  auto train_split = split_of(ds, "train");
  auto val_split = split_of(ds, "val");
  auto test_split = split_of(ds, "test");
  std::vector<AblationRow> rows;
  for (const Spec& s : specs) {
    MuiscConfig cfg = base;
    cfg.hierarchical_fusion = s.hier;
    cfg.use_decoder = s.dec;
    cfg.nlg_task = s.nlg;
    cfg.title_input = s.title;
    Rng rng(Rng::derive(opts.seed, 0xab1a));
    MuiscWeights w = MuiscWeights::create(cfg, rng);
    TrainOptions o = opts;
    o.track_val = false;
    train_muisc(w, train_split, val_split, o);
    rows.push_back({s.name, cfg, evaluate(w, test_split), s.paper_auc});
  }
  return rows;
}

}  // namespace agpis
