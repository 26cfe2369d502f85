#pragma once

#include <optional>
#include <string>
#include <vector>

#include "agpis/data/ruleworld.hpp"
#include "agpis/model/muisc.hpp"
#include "agpis/stage1/stage1.hpp"

namespace agpis {

enum class Outcome { Submitted, Rejected, Aborted };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Submitted: return "Submitted";
    case Outcome::Rejected: return "Rejected";
    case Outcome::Aborted: return "Aborted";
  }
  return "?";
}

struct PipelineResult {
  Outcome outcome = Outcome::Aborted;
  std::optional<AbortReason> abort_reason;
  std::vector<int> sequence;  // candidate ids, primary first; empty on abort
  double p_t = 0.0;
  std::vector<double> p_mcc;
  std::vector<int> feedback;  // greedy decode, informational
};

// Fig.-2 flow: primary selection -> non-compliance filter -> pairwise
// duplicate detection and resolution -> sequence assembly -> MUIsC scoring.
// Submitted iff p^t strictly exceeds th_t; a rejected result still carries
// the sequence and scores.
inline PipelineResult run_pipeline(const std::vector<Image>& candidates,
                                   const std::vector<int>& title,
                                   const BinaryScorer& primary_model, const BinaryScorer& nc_model,
                                   const MuiscWeights& muisc, const Stage1Config& s1cfg,
                                   double th_t, std::uint64_t seed) {
  if (candidates.empty()) throw std::invalid_argument("run_pipeline: no candidate images");
  PipelineResult res;
  CandidateSet cands;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    cands.items.push_back({static_cast<int>(i), &candidates[i], 0.0, 0.0});

  SelectOutcome sel = select_primary(cands, primary_model, s1cfg);
  if (sel.abort) {
    res.abort_reason = sel.abort;
    return res;
  }
  const int primary_id = *sel.primary_id;

  FilterOutcome filt = filter_noncompliant(cands, nc_model, s1cfg);
  if (filt.abort) {
    res.abort_reason = filt.abort;
    return res;
  }
  // the non-compliance filter may have taken the primary itself
  bool primary_alive = false;
  for (const auto& c : cands.items) primary_alive |= (c.id == primary_id);
  if (!primary_alive) {
    res.abort_reason = AbortReason::NoPrimary;
    return res;
  }

  std::vector<std::pair<int, int>> dup_pairs;
  for (std::size_t i = 0; i < cands.items.size(); ++i)
    for (std::size_t j = i + 1; j < cands.items.size(); ++j) {
      MatchResult m = match_patches(*cands.items[i].image, *cands.items[j].image, s1cfg);
      if (m.duplicate) dup_pairs.push_back({cands.items[i].id, cands.items[j].id});
    }
  DedupOutcome ded = dedup_resolve(cands, dup_pairs, s1cfg);
  if (ded.abort) {
    res.abort_reason = ded.abort;
    return res;
  }

  res.sequence = assemble_sequence(cands, primary_id, s1cfg.seq_len, seed);
  std::vector<Image> images;
  for (int id : res.sequence) images.push_back(*cands.by_id(id).image);
  Prediction pred = predict(images, title, Vocab::kSep, muisc);
  res.p_t = pred.p_t;
  res.p_mcc = pred.p_mcc;
  res.outcome = res.p_t > th_t ? Outcome::Submitted : Outcome::Rejected;
  res.feedback = greedy_decode(images, title, Vocab::kSep, Vocab::kEot, muisc);
  return res;
}

}  // namespace agpis
