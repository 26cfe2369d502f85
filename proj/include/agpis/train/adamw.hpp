#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "agpis/nn/blocks.hpp"

namespace agpis {

struct AdamWConfig {
  double lr = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// decoupled-weight-decay Adam with bias correction
class AdamW {
 public:
  explicit AdamW(const AdamWConfig& cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  // applies one update using the grads currently accumulated on the params
  void step(ParamStore& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (auto& [name, p] : params.params) {
      State& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(p.size(), 0.0);
        st.v.assign(p.size(), 0.0);
      } else if (st.m.size() != p.size()) {
        throw std::logic_error("adamw: moment shape mismatch for parameter " + name);
      }
      const std::vector<double>& g = p.grad();
      std::vector<double>& w = p.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g[i];
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        // decay is decoupled: proportional to the pre-update weight
        w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
      }
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
  };
  AdamWConfig cfg_;
  long step_ = 0;
  std::map<std::string, State> state_;
};

}  // namespace agpis
