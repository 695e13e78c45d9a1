#pragma once

#include <stdexcept>
#include <vector>

#include "freekd/tensor.hpp"

namespace freekd {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // classic L2, added to the gradient
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;

  void reset(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    for (const Tensor& p : params) {
      m.emplace_back(p.rows, p.cols);
      v.emplace_back(p.rows, p.cols);
    }
    step = 0;
  }
};

inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: param/grad count mismatch");
  if (state.m.size() != params.size()) state.reset(params);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params[p];
    const Tensor& g = grads[p];
    if (!w.same_shape(g)) throw std::invalid_argument("adam_step: shape mismatch");
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (int i = 0; i < w.size(); ++i) {
      const double gi = g.data[i] + cfg.weight_decay * w.data[i];
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      w.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace freekd
