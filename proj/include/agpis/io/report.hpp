#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agpis/io/checkpoint.hpp"
#include "agpis/pipeline.hpp"
#include "agpis/train/metrics.hpp"
#include "agpis/train/trainer.hpp"

namespace agpis {

// flat object of named numbers; omitted subset metrics are skipped
inline nlohmann::ordered_json eval_report_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["auc"] = rep.auc;
  j["r_at_p80"] = rep.r_at_p80;
  j["r_at_p85"] = rep.r_at_p85;
  j["r_at_p90"] = rep.r_at_p90;
  if (rep.auc_single >= 0.0) j["auc_single"] = rep.auc_single;
  if (rep.auc_pair >= 0.0) j["auc_pair"] = rep.auc_pair;
  if (rep.auc_multi >= 0.0) j["auc_multi"] = rep.auc_multi;
  j["sample_count"] = rep.sample_count;
  return j;
}

inline void write_loss_csv(const std::vector<EpochLoss>& curve, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write loss curve: " + path);
  os << "epoch,train_loss,val_loss\n";
  for (const EpochLoss& p : curve)
    os << p.epoch << "," << detail_ckpt::fmt_double(p.train_loss) << ","
       << detail_ckpt::fmt_double(p.val_loss) << "\n";
  if (!os) throw std::runtime_error("short write on loss curve: " + path);
}

inline nlohmann::ordered_json pipeline_result_json(const PipelineResult& res) {
  nlohmann::ordered_json j;
  j["outcome"] = outcome_name(res.outcome);
  if (res.abort_reason) j["abort_reason"] = abort_reason_name(*res.abort_reason);
  j["sequence"] = res.sequence;
  j["p_t"] = res.p_t;
  j["p_mcc"] = res.p_mcc;
  j["feedback"] = res.feedback;
  return j;
}

}  // namespace agpis
