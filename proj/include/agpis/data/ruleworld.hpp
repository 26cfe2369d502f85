#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "agpis/core/rng.hpp"
#include "agpis/data/image.hpp"

namespace agpis {

// ---------------------------------------------------------------------------
// closed 64-token vocabulary
// ---------------------------------------------------------------------------

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEot = 1;
  static constexpr int kSep = 2;
  static constexpr int kYes = 3;
  static constexpr int kImage = 4;
  static constexpr int kRuleBase = 5;   // logo, blur, duplicate, colormismatch, improperorder
  static constexpr int kDigitBase = 10; // "0".."9"
  static constexpr int kShapeBase = 20; // circle, square, triangle, star
  static constexpr int kColorBase = 24; // 8 hue-bucket names
  static constexpr int kSizeBase = 32;  // small, medium, large
  static constexpr int kSize = 64;

  Vocab() {
    words_.assign(kSize, "");
    set(kPad, "<pad>");
    set(kEot, "<eot>");
    set(kSep, "<s>");
    set(kYes, "yes");
    set(kImage, "image");
    const char* rules[] = {"logo", "blur", "duplicate", "colormismatch", "improperorder"};
    for (int i = 0; i < 5; ++i) set(kRuleBase + i, rules[i]);
    for (int i = 0; i < 10; ++i) set(kDigitBase + i, std::to_string(i));
    const char* shapes[] = {"circle", "square", "triangle", "star"};
    for (int i = 0; i < 4; ++i) set(kShapeBase + i, shapes[i]);
    const char* colors[] = {"red", "orange", "yellow", "green", "cyan", "blue", "purple",
                            "magenta"};
    for (int i = 0; i < 8; ++i) set(kColorBase + i, colors[i]);
    const char* sizes[] = {"small", "medium", "large"};
    for (int i = 0; i < 3; ++i) set(kSizeBase + i, sizes[i]);
    for (int i = kSizeBase + 3; i < kSize; ++i) set(i, "<unused" + std::to_string(i) + ">");
  }

  const std::string& word(int id) const {
    if (id < 0 || id >= kSize) throw std::out_of_range("vocab: id " + std::to_string(id));
    return words_[id];
  }

  int id(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) throw std::out_of_range("vocab: unknown word '" + w + "'");
    return it->second;
  }

  std::vector<int> tokenize(const std::vector<std::string>& words) const {
    std::vector<int> out;
    for (const auto& w : words) out.push_back(id(w));
    return out;
  }

  std::vector<std::string> detokenize(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (int i : ids) out.push_back(word(i));
    return out;
  }

  static int color_bucket(double hue) {
    int b = static_cast<int>((hue - std::floor(hue)) * 8.0);
    return b > 7 ? 7 : b;
  }

 private:
  void set(int id, std::string w) {
    words_[id] = std::move(w);
    index_[words_[id]] = id;
  }
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

inline const Vocab& vocab() {
  static const Vocab v;
  return v;
}

// ---------------------------------------------------------------------------
// rule classes
// ---------------------------------------------------------------------------

enum class RuleClass : int {
  Qualified = 0,
  Logo = 1,           // single-image
  Blur = 2,           // single-image
  Duplicate = 3,      // image-pair
  ColorMismatch = 4,  // image-pair
  ImproperOrder = 5,  // multi-image
};
constexpr int kNumRuleClasses = 6;

enum class RuleCategory { Qualified, Single, Pair, Multi };

inline RuleCategory rule_category(RuleClass r) {
  switch (r) {
    case RuleClass::Qualified: return RuleCategory::Qualified;
    case RuleClass::Logo:
    case RuleClass::Blur: return RuleCategory::Single;
    case RuleClass::Duplicate:
    case RuleClass::ColorMismatch: return RuleCategory::Pair;
    case RuleClass::ImproperOrder: return RuleCategory::Multi;
  }
  throw std::logic_error("rule_category: bad rule");
}

inline int rule_name_token(RuleClass r) {
  return Vocab::kRuleBase + static_cast<int>(r) - 1;
}

// ---------------------------------------------------------------------------
// product rendering
// ---------------------------------------------------------------------------

enum class Shape : int { Circle = 0, Square = 1, Triangle = 2, Star = 3 };

struct ProductSpec {
  Shape shape = Shape::Circle;
  double hue = 0.0;          // [0,1)
  double size = 0.38;        // glyph radius as a fraction of image size
  std::uint64_t texture_seed = 0;

  void validate() const {
    if (hue < 0.0 || hue >= 1.0) throw std::invalid_argument("product spec: hue outside [0,1)");
    if (size < 0.2 || size > 0.48)
      throw std::invalid_argument("product spec: size outside renderable bounds");
  }

  static ProductSpec random(Rng& rng) {
    ProductSpec s;
    s.shape = static_cast<Shape>(rng.uniform_int(4));
    s.hue = rng.uniform();
    s.size = rng.uniform(0.26, 0.44);
    s.texture_seed = rng.next_u64();
    return s;
  }

  // size word: small/medium/large thirds of the renderable range
  int size_token() const {
    if (size < 0.32) return Vocab::kSizeBase + 0;
    if (size < 0.38) return Vocab::kSizeBase + 1;
    return Vocab::kSizeBase + 2;
  }
};

namespace detail_render {

inline bool in_glyph(Shape shape, double u, double v) {
  // (u, v) in glyph-local coordinates, unit radius
  switch (shape) {
    case Shape::Circle:
      return u * u + v * v <= 1.0;
    case Shape::Square:
      return std::fabs(u) <= 0.85 && std::fabs(v) <= 0.85;
    case Shape::Triangle:
      return v >= -0.8 && std::fabs(u) <= (1.0 - (v + 0.8) / 1.8) * 0.95;
    case Shape::Star: {
      double r = std::sqrt(u * u + v * v);
      if (r <= 1e-9) return true;
      double a = std::atan2(v, u);
      double lobe = 0.55 + 0.45 * std::cos(5.0 * a);
      return r <= lobe;
    }
  }
  return false;
}

}  // namespace detail_render

// Core renderer: glyph at given scale/offset with a seeded interior stripe
// texture, an asymmetric highlight dot, and faint background noise.
inline Image render_product(const ProductSpec& spec, int img_size, double scale,
                            double off_x, double off_y, bool mirror) {
  spec.validate();
  double r, g, b;
  hsv_to_rgb(spec.hue, 0.85, 0.85, r, g, b);
  double r2, g2, b2;
  hsv_to_rgb(spec.hue, 0.85, 0.55, r2, g2, b2);  // darker stripe color
  Rng noise(Rng::derive(spec.texture_seed, 0xbac4));
  const double stripe_phase = (spec.texture_seed % 97) / 97.0 * 2.0 * M_PI;
  const double stripe_freq = 3.0 + (spec.texture_seed % 5);
  Image im(img_size, img_size);
  const double cx = img_size * (0.5 + off_x);
  const double cy = img_size * (0.5 + off_y);
  const double radius = img_size * spec.size * scale;
  for (int y = 0; y < img_size; ++y)
    for (int x = 0; x < img_size; ++x) {
      double bg = 0.88 + 0.015 * noise.normal();
      double px = mirror ? img_size - 1 - x : x;
      double u = (px + 0.5 - cx) / radius;
      double v = (y + 0.5 - cy) / radius;
      double rr = bg, gg = bg, bb = bg;
      if (detail_render::in_glyph(spec.shape, u, v)) {
        double stripe = 0.5 + 0.5 * std::sin(stripe_freq * (u + 0.35 * v) * M_PI + stripe_phase);
        if (stripe > 0.55) {
          rr = r; gg = g; bb = b;
        } else {
          rr = r2; gg = g2; bb = b2;
        }
        // asymmetric highlight so mirrored views are distinguishable
        double du = u - 0.35, dv = v + 0.3;
        if (du * du + dv * dv < 0.04) { rr = gg = bb = 0.98; }
      }
      im.at(y, x, 0) = clamp01(rr);
      im.at(y, x, 1) = clamp01(gg);
      im.at(y, x, 2) = clamp01(bb);
    }
  return im;
}

struct ProductViews {
  Image front;   // whole glyph, centered
  Image detail;  // zoomed crop
  Image back;    // mirrored variant
};

inline ProductViews render_views(const ProductSpec& spec, int img_size = 32) {
  ProductViews v;
  v.front = render_product(spec, img_size, 1.0, 0.0, 0.0, false);
  v.detail = render_product(spec, img_size, 2.3, 0.12, -0.08, false);
  v.back = render_product(spec, img_size, 1.0, 0.0, 0.0, true);
  return v;
}

// an extra candidate view at a random scale/offset (pool distractor)
inline Image render_extra_view(const ProductSpec& spec, int img_size, Rng& rng) {
  double scale = rng.uniform(1.2, 1.7);
  double ox = rng.uniform(-0.15, 0.15);
  double oy = rng.uniform(-0.15, 0.15);
  return render_product(spec, img_size, scale, ox, oy, rng.uniform() < 0.5);
}

// ---------------------------------------------------------------------------
// violation injection
// ---------------------------------------------------------------------------

struct BoxAnnotation {
  int image_index = 0;  // position in the sequence
  int x = 0, y = 0, w = 0, h = 0;
};

struct OracleAnnotations {
  int true_primary = 0;                         // pool id of the front view
  std::vector<int> non_compliant;               // pool ids carrying a logo overlay
  std::vector<std::pair<int, int>> dup_pairs;   // pool id pairs with duplicated content
  std::vector<int> violating;                   // sequence positions violating the rule
  std::vector<BoxAnnotation> boxes;             // logo box / duplicated boxes
};

// striped bright rectangle composited in a corner
inline BoxAnnotation overlay_logo(Image& im, Rng& rng, int seq_index) {
  const int lw = std::max(6, im.width / 4);
  const int lh = std::max(4, im.height / 6);
  const int corner = static_cast<int>(rng.uniform_int(4));
  const int x0 = (corner % 2 == 0) ? 1 : im.width - lw - 1;
  const int y0 = (corner / 2 == 0) ? 1 : im.height - lh - 1;
  for (int y = y0; y < y0 + lh; ++y)
    for (int x = x0; x < x0 + lw; ++x) {
      bool stripe = ((x - x0) / 2) % 2 == 0;
      im.at(y, x, 0) = stripe ? 1.0 : 0.05;
      im.at(y, x, 1) = stripe ? 0.95 : 0.05;
      im.at(y, x, 2) = stripe ? 0.1 : 0.4;
    }
  return {seq_index, x0, y0, lw, lh};
}

// jittered copy: translation at most 2 px plus faint noise. Offsets are even
// so the copy stays on the 2px proposal grid of stage 1 — the duplication is
// meant to be detectable, not adversarial.
inline Image jittered_copy(const Image& im, Rng& rng) {
  int dy = (static_cast<int>(rng.uniform_int(3)) - 1) * 2;
  int dx = (static_cast<int>(rng.uniform_int(3)) - 1) * 2;
  Image out = translate(im, dy, dx);
  for (double& p : out.pix) p = clamp01(p + 0.002 * rng.normal());
  return out;
}

struct InjectionResult {
  std::vector<Image> sequence;  // K^t mutated images, order already applied
  std::vector<int> violating;   // sequence positions
  std::vector<BoxAnnotation> boxes;
  std::pair<int, int> dup_pair{-1, -1};  // sequence positions, Duplicate only
  bool order_swapped = false;
};

// Mutates the qualified view order [front, detail, back] per rule. The
// violation magnitudes are fixed floors (logo contrast, >=0.3 hue shift,
// <=2 px jitter) so every injected violation stays detectable.
inline InjectionResult inject_violation(const ProductViews& views, RuleClass rule, Rng& rng) {
  if (rule == RuleClass::Qualified)
    throw std::logic_error("inject_violation: qualified sequences are not mutated");
  InjectionResult res;
  res.sequence = {views.front, views.detail, views.back};
  switch (rule) {
    case RuleClass::Logo: {
      int idx = static_cast<int>(rng.uniform_int(3));
      res.boxes.push_back(overlay_logo(res.sequence[idx], rng, idx));
      res.violating = {idx};
      break;
    }
    case RuleClass::Blur: {
      int idx = static_cast<int>(rng.uniform_int(3));
      res.sequence[idx] = box_blur(res.sequence[idx], 2);
      res.violating = {idx};
      break;
    }
    case RuleClass::Duplicate: {
      int src = static_cast<int>(rng.uniform_int(3));
      int dst = static_cast<int>(rng.uniform_int(2));
      if (dst >= src) ++dst;
      res.sequence[dst] = jittered_copy(res.sequence[src], rng);
      res.dup_pair = {src, dst};
      res.violating = {dst};
      const Image& im = res.sequence[src];
      res.boxes.push_back({src, im.width / 4, im.height / 4, im.width / 2, im.height / 2});
      res.boxes.push_back({dst, im.width / 4, im.height / 4, im.width / 2, im.height / 2});
      break;
    }
    case RuleClass::ColorMismatch: {
      int idx = static_cast<int>(rng.uniform_int(3));
      double shift = 0.3 + rng.uniform(0.0, 0.25);
      res.sequence[idx] = shift_hue(res.sequence[idx], shift);
      res.violating = {idx};
      break;
    }
    case RuleClass::ImproperOrder: {
      // primary becomes the detail crop
      std::swap(res.sequence[0], res.sequence[1]);
      res.order_swapped = true;
      res.violating = {0};
      break;
    }
    default:
      throw std::logic_error("inject_violation: bad rule");
  }
  return res;
}

// qualified -> ["yes"]; else [rule-name, "image", 1-based index digit]
inline std::vector<int> make_feedback(RuleClass rule, int violating_index) {
  if (rule == RuleClass::Qualified) return {Vocab::kYes};
  if (violating_index < 0 || violating_index > 8)
    throw std::out_of_range("make_feedback: violating index " + std::to_string(violating_index));
  return {rule_name_token(rule), Vocab::kImage, Vocab::kDigitBase + violating_index + 1};
}

// ---------------------------------------------------------------------------
// dataset generation
// ---------------------------------------------------------------------------

struct ReviewRecord {
  std::uint64_t sku = 0;
  std::vector<Image> pool;    // K^c candidate images
  std::vector<int> sequence;  // K^t pool indices, primary first
  std::vector<int> title;
  std::vector<int> feedback;  // terminator not included
  int label = 0;              // RuleClass as int
  std::string split;          // train | val | test
  OracleAnnotations oracle;
};

struct GenConfig {
  int count = 1000;
  // Table-1 category mixture: qualified, single-image, image-pair, multi-image
  std::array<double, 4> mixture{0.71, 0.12, 0.07, 0.10};
  std::uint64_t seed = 0;
  int img_size = 32;
  double extra_nc_prob = 0.35;   // chance a pool distractor carries a logo
  double extra_dup_prob = 0.25;  // chance a pool distractor duplicates another

  void validate() const {
    double s = 0.0;
    for (double m : mixture) {
      if (m < 0.0) throw std::invalid_argument("gen config: negative mixture weight");
      s += m;
    }
    if (std::fabs(s - 1.0) > 1e-9)
      throw std::invalid_argument("gen config: mixture sums to " + std::to_string(s) +
                                  ", expected 1");
    if (count < 1) throw std::invalid_argument("gen config: count must be positive");
  }
};

namespace detail_gen {

// exact per-class quotas via largest remainder, categories split evenly
inline std::vector<RuleClass> class_assignment(const GenConfig& cfg) {
  const double fractions[kNumRuleClasses] = {
      cfg.mixture[0],       cfg.mixture[1] / 2.0, cfg.mixture[1] / 2.0,
      cfg.mixture[2] / 2.0, cfg.mixture[2] / 2.0, cfg.mixture[3]};
  int counts[kNumRuleClasses];
  double rema[kNumRuleClasses];
  int assigned = 0;
  for (int i = 0; i < kNumRuleClasses; ++i) {
    double want = fractions[i] * cfg.count;
    counts[i] = static_cast<int>(want);
    rema[i] = want - counts[i];
    assigned += counts[i];
  }
  while (assigned < cfg.count) {
    int best = 0;
    for (int i = 1; i < kNumRuleClasses; ++i)
      if (rema[i] > rema[best]) best = i;
    ++counts[best];
    rema[best] = -1.0;
    ++assigned;
  }
  std::vector<RuleClass> classes;
  classes.reserve(cfg.count);
  for (int i = 0; i < kNumRuleClasses; ++i)
    for (int k = 0; k < counts[i]; ++k) classes.push_back(static_cast<RuleClass>(i));
  Rng rng(Rng::derive(cfg.seed, 0x51a9));
  rng.shuffle(classes);
  return classes;
}

}  // namespace detail_gen

inline ReviewRecord generate_record(std::uint64_t sku, RuleClass rule, const GenConfig& cfg) {
  Rng rng(Rng::derive(cfg.seed, sku));
  ReviewRecord rec;
  rec.sku = sku;
  rec.label = static_cast<int>(rule);

  ProductSpec spec = ProductSpec::random(rng);
  ProductViews views = render_views(spec, cfg.img_size);

  std::vector<Image> seq_images;
  if (rule == RuleClass::Qualified) {
    seq_images = {views.front, views.detail, views.back};
    rec.feedback = make_feedback(rule, -1);
  } else {
    InjectionResult inj = inject_violation(views, rule, rng);
    seq_images = std::move(inj.sequence);
    rec.oracle.violating = inj.violating;
    rec.oracle.boxes = inj.boxes;
    rec.feedback = make_feedback(rule, inj.violating.front());
    if (inj.dup_pair.first >= 0) rec.oracle.dup_pairs.push_back(inj.dup_pair);
  }

  rec.title = {Vocab::kShapeBase + static_cast<int>(spec.shape),
               Vocab::kColorBase + Vocab::color_bucket(spec.hue), spec.size_token()};

  // candidate pool: the 3 sequence views plus K^c-3 distractors, K^c in {6,7,8}
  const int kc = 6 + static_cast<int>(rng.uniform_int(3));
  std::vector<Image> pool = seq_images;
  std::vector<int> nc_local;
  std::vector<std::pair<int, int>> dup_local;
  if (!rec.oracle.dup_pairs.empty()) dup_local.push_back(rec.oracle.dup_pairs.front());
  while (static_cast<int>(pool.size()) < kc) {
    int idx = static_cast<int>(pool.size());
    Image extra = render_extra_view(spec, cfg.img_size, rng);
    double roll = rng.uniform();
    if (roll < cfg.extra_nc_prob) {
      overlay_logo(extra, rng, idx);
      nc_local.push_back(idx);
    } else if (roll < cfg.extra_nc_prob + cfg.extra_dup_prob) {
      int src = static_cast<int>(rng.uniform_int(3));
      extra = jittered_copy(pool[src], rng);
      dup_local.push_back({src, idx});
    }
    pool.push_back(std::move(extra));
  }
  // logo-rule sequence images are themselves non-compliant
  if (rule == RuleClass::Logo)
    for (int v : rec.oracle.violating) nc_local.push_back(v);

  // shuffle pool so the primary is not always index 0
  std::vector<int> perm(pool.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  rng.shuffle(perm);
  std::vector<int> inv(pool.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  std::vector<Image> shuffled(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) shuffled[inv[i]] = pool[i];
  rec.pool = std::move(shuffled);
  rec.sequence = {inv[0], inv[1], inv[2]};
  rec.oracle.true_primary = inv[0];
  for (int id : nc_local) rec.oracle.non_compliant.push_back(inv[id]);
  rec.oracle.dup_pairs.clear();
  for (auto [a, b] : dup_local) rec.oracle.dup_pairs.push_back({inv[a], inv[b]});
  return rec;
}

struct Dataset {
  std::vector<ReviewRecord> records;
};

// (count, mixture, seed) fully determines every byte of the output
inline Dataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  std::vector<RuleClass> classes = detail_gen::class_assignment(cfg);
  Dataset ds;
  ds.records.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i)
    ds.records.push_back(generate_record(static_cast<std::uint64_t>(i), classes[i], cfg));
  // SKU-disjoint 80/10/10 split over a seeded permutation
  std::vector<int> order(cfg.count);
  for (int i = 0; i < cfg.count; ++i) order[i] = i;
  Rng rng(Rng::derive(cfg.seed, 0x5117));
  rng.shuffle(order);
  const int n_train = static_cast<int>(cfg.count * 0.8);
  const int n_val = static_cast<int>(cfg.count * 0.1);
  for (int i = 0; i < cfg.count; ++i) {
    std::string split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    ds.records[order[i]].split = split;
  }
  return ds;
}

}  // namespace agpis
