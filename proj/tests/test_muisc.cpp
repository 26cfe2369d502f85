#include <gtest/gtest.h>

#include <cmath>

#include "agpis/core/gradcheck.hpp"
#include "agpis/model/muisc.hpp"

using namespace agpis;

namespace {

Image noise_image(int h, int w, Rng& rng) {
  Image im(h, w);
  for (double& p : im.pix) p = rng.uniform();
  return im;
}

std::vector<Image> noise_sequence(const MuiscConfig& cfg, Rng& rng) {
  std::vector<Image> seq;
  for (int k = 0; k < cfg.seq_len; ++k) seq.push_back(noise_image(cfg.img_h, cfg.img_w, rng));
  return seq;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Config, RowCountArithmetic) {
  MuiscConfig desk = MuiscConfig::desk();
  EXPECT_EQ(desk.tokens_per_image(), 17);  // (32/8)^2 + 1
  EXPECT_EQ(desk.fused_rows(), 51);        // 17 * 3

  MuiscConfig paper = MuiscConfig::paper();
  EXPECT_EQ(paper.tokens_per_image(), 197);  // (224/16)^2 + 1
  EXPECT_NO_THROW(paper.validate());
}

TEST(Config, ValidationRejectsBadShapes) {
  MuiscConfig c = MuiscConfig::desk();
  c.patch = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = MuiscConfig::desk();
  c.lambda_mcc = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = MuiscConfig::desk();
  c.mhca_present = {true};  // wrong length for dec_blocks=2
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(EncodeImage, DeskShapeAndPurity) {
  MuiscConfig cfg = MuiscConfig::desk();
  Rng rng(21);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  Image im = noise_image(cfg.img_h, cfg.img_w, rng);
  Tensor f1 = encode_image(im, w);
  EXPECT_EQ(f1.rows(), 17);
  EXPECT_EQ(f1.cols(), cfg.dim);
  Tensor f2 = encode_image(im, w);
  EXPECT_LT(max_abs_diff(f1, f2), 0.0 + 1e-300);  // bitwise identical
}

TEST(EncodeImage, RejectsWrongImageSize) {
  MuiscConfig cfg = MuiscConfig::desk();
  Rng rng(22);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  Image im(16, 16);
  EXPECT_THROW(encode_image(im, w), std::invalid_argument);
}

TEST(FuseSequence, ShapeAndCount) {
  MuiscConfig cfg = MuiscConfig::desk();
  Rng rng(23);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  std::vector<Tensor> feats;
  for (const auto& im : seq) feats.push_back(encode_image(im, w));
  Tensor fe = fuse_sequence(feats, w);
  EXPECT_EQ(fe.rows(), 51);
  EXPECT_EQ(fe.cols(), 64);
  feats.pop_back();
  EXPECT_THROW(fuse_sequence(feats, w), std::logic_error);
}

TEST(FuseSequence, LateFusionEqualsConcatPlusIndexEmbedding) {
  MuiscConfig cfg = MuiscConfig::tiny();
  cfg.hierarchical_fusion = false;
  Rng rng(24);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  std::vector<Tensor> feats;
  for (const auto& im : seq) feats.push_back(encode_image(im, w));
  Tensor fe = fuse_sequence(feats, w);
  std::vector<Tensor> manual;
  for (int k = 0; k < cfg.seq_len; ++k)
    manual.push_back(add_row(feats[k], slice_rows(w.image_index_emb, k, 1)));
  EXPECT_LT(max_abs_diff(fe, concat_rows(manual)), 1e-15);
}

TEST(FuseSequence, OrderSensitivity) {
  MuiscConfig cfg = MuiscConfig::desk();
  Rng rng(25);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  std::vector<Tensor> feats;
  for (const auto& im : seq) feats.push_back(encode_image(im, w));
  Tensor fe = fuse_sequence(feats, w);
  std::swap(feats[1], feats[2]);
  Tensor fe_swapped = fuse_sequence(feats, w);
  EXPECT_GT(max_abs_diff(fe, fe_swapped), 1e-8);
}

TEST(Decode, CausalHiddenStatesIgnoreAppendedTokens) {
  MuiscConfig cfg = MuiscConfig::tiny();
  Rng rng(26);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  std::vector<Tensor> feats;
  for (const auto& im : seq) feats.push_back(encode_image(im, w));
  Tensor fe = fuse_sequence(feats, w);

  DecoderInput shorter;
  shorter.tokens = {5, 9, 2};
  shorter.sep_pos = 2;
  DecoderInput longer = shorter;
  longer.tokens.push_back(7);
  longer.tokens.push_back(11);

  MuiscOutput a = decode(fe, shorter, w);
  MuiscOutput b = decode(fe, longer, w);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < cfg.dim; ++c)
      EXPECT_LT(std::abs(a.hidden.at(r, c) - b.hidden.at(r, c)), 1e-12);
}

TEST(Decode, CrossAttentionSeesSequenceFeature) {
  MuiscConfig cfg = MuiscConfig::tiny();
  Rng rng(27);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  Tensor fe = Tensor::randn(cfg.fused_rows(), cfg.dim, rng, 0.5);
  std::vector<double> pert = fe.data();
  for (auto& v : pert) v += 0.25;
  Tensor fe2 = Tensor::from_data(cfg.fused_rows(), cfg.dim, pert);
  DecoderInput din;
  din.tokens = {5, 2};
  din.sep_pos = 1;
  MuiscOutput a = decode(fe, din, w);
  MuiscOutput b = decode(fe2, din, w);
  EXPECT_GT(max_abs_diff(a.class_logits, b.class_logits), 1e-10);
}

TEST(Decode, MhcaMaskAllOffIgnoresSequenceFeature) {
  MuiscConfig cfg = MuiscConfig::tiny();
  cfg.mhca_present = {false};
  Rng rng(28);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  Tensor fe = Tensor::randn(cfg.fused_rows(), cfg.dim, rng, 0.5);
  Tensor fe2 = Tensor::randn(cfg.fused_rows(), cfg.dim, rng, 0.5);
  DecoderInput din;
  din.tokens = {5, 2};
  din.sep_pos = 1;
  MuiscOutput a = decode(fe, din, w);
  MuiscOutput b = decode(fe2, din, w);
  EXPECT_LT(max_abs_diff(a.class_logits, b.class_logits), 1e-15);
}

TEST(Decode, NoDecoderAblationUsesMeanPooledFeature) {
  MuiscConfig cfg = MuiscConfig::tiny();
  cfg.use_decoder = false;
  Rng rng(29);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  Tensor fe = Tensor::randn(cfg.fused_rows(), cfg.dim, rng, 0.5);
  DecoderInput din;
  din.tokens = {2};
  MuiscOutput out = decode(fe, din, w);
  Tensor expected = linear_head(mean_rows(fe), w.mcc_w, w.mcc_b);
  EXPECT_LT(max_abs_diff(out.class_logits, expected), 1e-15);
  EXPECT_FALSE(out.hidden.defined());
}

TEST(DecoderInputTest, TrainingLayoutAndOverflow) {
  MuiscConfig cfg = MuiscConfig::desk();
  DecoderInput d = DecoderInput::for_training({10, 11}, {3}, 2, 1, cfg);
  ASSERT_EQ(d.tokens.size(), 5u);  // title(2) + sep + feedback(1) + eot
  EXPECT_EQ(d.sep_pos, 2);
  EXPECT_EQ(d.tokens[2], 2);
  EXPECT_EQ(d.tokens[3], 3);
  EXPECT_EQ(d.tokens[4], 1);
  EXPECT_EQ(d.feedback_len, 1);

  cfg.title_input = false;
  DecoderInput n = DecoderInput::for_training({10, 11}, {3}, 2, 1, cfg);
  EXPECT_EQ(n.sep_pos, 0);
  EXPECT_EQ(n.tokens.size(), 3u);

  std::vector<int> long_title(40, 5);
  EXPECT_THROW(DecoderInput::for_training(long_title, {3}, 2, 1, MuiscConfig::desk()),
               std::length_error);
}

TEST(LossNlg, UniformModelGivesLogVocab) {
  MuiscConfig cfg = MuiscConfig::desk();
  Rng rng(30);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  // zero LM head -> logits identically zero -> uniform over V=64
  std::fill(w.lm_w.data().begin(), w.lm_w.data().end(), 0.0);
  std::fill(w.lm_b.data().begin(), w.lm_b.data().end(), 0.0);
  auto seq = noise_sequence(cfg, rng);
  DecoderInput din = DecoderInput::for_training({10, 11}, {3}, 2, 1, cfg);
  MuiscOutput out = muisc_forward(seq, din, w);
  EXPECT_NEAR(loss_nlg(out, din).item(), std::log(64.0), 1e-12);
}

TEST(LossNlg, TeacherForcingSumsConditionalTerms) {
  MuiscConfig cfg = MuiscConfig::tiny();
  Rng rng(31);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  DecoderInput din = DecoderInput::for_training({10, 11}, {3, 7}, 2, 1, cfg);
  MuiscOutput out = muisc_forward(seq, din, w);
  double joint = loss_nlg(out, din).item();
  // per-term oracle from the same logits
  double expect = 0.0;
  for (int j = 0; j < 2; ++j) {
    Tensor row = slice_rows(out.lm_logits, din.sep_pos + j, 1);
    expect += cross_entropy_logits(row, {din.tokens[din.sep_pos + 1 + j]}).item();
  }
  EXPECT_NEAR(joint, expect, 1e-12);
}

TEST(LossNlg, LaterFeedbackTokensDoNotAffectEarlierTerms) {
  MuiscConfig cfg = MuiscConfig::tiny();
  Rng rng(32);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  DecoderInput a = DecoderInput::for_training({10}, {3, 7}, 2, 1, cfg);
  DecoderInput b = DecoderInput::for_training({10}, {3, 9}, 2, 1, cfg);
  MuiscOutput oa = muisc_forward(seq, a, w);
  MuiscOutput ob = muisc_forward(seq, b, w);
  double ta = cross_entropy_logits(slice_rows(oa.lm_logits, a.sep_pos, 1), {3}).item();
  double tb = cross_entropy_logits(slice_rows(ob.lm_logits, b.sep_pos, 1), {3}).item();
  EXPECT_NEAR(ta, tb, 1e-12);
}

TEST(LossNlg, RejectsInferenceInput) {
  MuiscOutput out;
  DecoderInput din;
  din.training = false;
  EXPECT_THROW(loss_nlg(out, din), std::logic_error);
}

TEST(LossMcc, UniformLogitsGiveLogClassCount) {
  Rng rng(33);
  MuiscOutput out;
  out.class_logits = Tensor::zeros(1, 6);
  EXPECT_NEAR(loss_mcc(out, 2).item(), std::log(6.0), 1e-12);
  out.class_logits = Tensor::zeros(1, 45);
  EXPECT_NEAR(loss_mcc(out, 0).item(), std::log(45.0), 1e-12);
}

TEST(LossMcc, ConfidentCorrectClassDrivesLossToZero) {
  MuiscOutput out;
  Tensor logits = Tensor::zeros(1, 6);
  logits.data()[3] = 40.0;
  out.class_logits = logits;
  EXPECT_LT(loss_mcc(out, 3).item(), 1e-12);
  EXPECT_THROW(loss_mcc(out, 6), std::out_of_range);
}

TEST(LossTotal, WeightedCombinationAndDecomposition) {
  MuiscConfig cfg = MuiscConfig::desk();
  EXPECT_DOUBLE_EQ(cfg.lambda_nlg, 0.1);
  EXPECT_DOUBLE_EQ(cfg.lambda_mcc, 1.0);
  Tensor lnlg = Tensor::scalar(4.1589);
  Tensor lmcc = Tensor::scalar(1.7918);
  EXPECT_NEAR(loss_total(lnlg, lmcc, cfg).item(), 2.20769, 1e-5);
  EXPECT_NEAR(loss_total(lnlg, lmcc, cfg).item(),
              cfg.lambda_nlg * lnlg.item() + cfg.lambda_mcc * lmcc.item(), 1e-12);

  cfg.nlg_task = false;
  EXPECT_DOUBLE_EQ(loss_total(lnlg, lmcc, cfg).item(), lmcc.item());
}

TEST(Predict, ProbabilitiesNormalizedAndDeterministic) {
  MuiscConfig cfg = MuiscConfig::tiny();
  Rng rng(34);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  Prediction a = predict(seq, {10, 11}, 2, w);
  Prediction b = predict(seq, {10, 11}, 2, w);
  double sum = 0.0;
  for (double p : a.p_mcc) sum += p;
  EXPECT_LT(std::abs(sum - 1.0), 1e-9);
  EXPECT_GE(a.p_t, 0.0);
  EXPECT_LE(a.p_t, 1.0);
  EXPECT_EQ(a.p_t, b.p_t);  // bitwise determinism
  for (std::size_t i = 0; i < a.p_mcc.size(); ++i) EXPECT_EQ(a.p_mcc[i], b.p_mcc[i]);
}

TEST(Predict, TitleConditioning) {
  MuiscConfig cfg = MuiscConfig::tiny();
  Rng rng(35);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  Prediction a = predict(seq, {10, 11}, 2, w);
  Prediction c = predict(seq, {12, 13}, 2, w);
  EXPECT_NE(a.p_t, c.p_t);

  MuiscConfig noff = cfg;
  noff.title_input = false;
  MuiscWeights w2 = MuiscWeights::create(noff, rng);
  Prediction d = predict(seq, {10, 11}, 2, w2);
  Prediction e = predict(seq, {12, 13}, 2, w2);
  EXPECT_EQ(d.p_t, e.p_t);
}

TEST(EndToEnd, TinyConfigGradientCheck) {
  MuiscConfig cfg = MuiscConfig::tiny();
  Rng rng(36);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  DecoderInput din = DecoderInput::for_training({10, 11}, {3, 7}, 2, 1, cfg);
  auto f = [&](const Tensor&) {
    MuiscOutput out = muisc_forward(seq, din, w);
    return loss_total(loss_nlg(out, din), loss_mcc(out, 1), cfg);
  };
  // spot-check one parameter from each stage; the acceptance harness sweeps all
  EXPECT_LT(grad_check(f, w.patch_proj_w), 1e-4);
  EXPECT_LT(grad_check(f, w.image_index_emb), 1e-4);
  EXPECT_LT(grad_check(f, w.dec_blocks[0].cross_attn.wk), 1e-4);
  EXPECT_LT(grad_check(f, w.mcc_w), 1e-4);
}

TEST(GreedyDecode, TerminatesAndStaysInVocab) {
  MuiscConfig cfg = MuiscConfig::tiny();
  Rng rng(37);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  auto seq = noise_sequence(cfg, rng);
  std::vector<int> gen = greedy_decode(seq, {10, 11}, 2, 1, w, 6);
  EXPECT_LE(gen.size(), 6u);
  for (int t : gen) {
    EXPECT_GE(t, 0);
    EXPECT_LT(t, cfg.vocab);
  }
}
