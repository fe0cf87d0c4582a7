#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mmtts/config.hpp"
#include "mmtts/nn.hpp"

namespace mmtts {

// X_t = t*x1 + (1-t)*x0.
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);

// Sinusoidal encoding of the scalar ODE time.
Tensor step_embedding(double t, int dim);

// Non-causal WaveNet drift field v(x, t, c_mel): gated residual blocks with
// the conditioning mel injected pre-gate through 1x1 convolutions and the
// step embedding added per block.
class DriftNet {
 public:
  static DriftNet create(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg,
                         Rng& rng);
  // x, c_mel: [T x n_mels] -> [T x n_mels]
  Var operator()(const Var& x, double t, const Var& c_mel) const;
  Tensor eval(const Tensor& x, double t, const Tensor& c_mel) const;

 private:
  struct Block {
    Conv1d dil;    // C -> 2C, kernel k
    Conv1d cond;   // n_mels -> 2C, 1x1
    Linear step;   // C -> C
    Conv1d out;    // C -> 2C, 1x1
  };
  Conv1d in_proj_;
  Linear step1_, step2_;
  std::vector<Block> blocks_;
  Conv1d skip1_, skip2_;
  int n_mels_ = 0, channels_ = 0, step_dim_ = 0;
};

// mean || (x1 - x0) - v(X_t, t, c_mel) ||^2 over elements.
Var reflow_loss(const DriftNet& net, const Tensor& x0, const Tensor& x1, double t,
                const Tensor& c_mel);

// Generic explicit integrators for dy/dt = f(y, t) from t0 to t1.
Tensor euler_integrate(const std::function<Tensor(const Tensor&, double)>& f, Tensor y0,
                       double t0, double t1, int n_steps);
Tensor rk45_integrate(const std::function<Tensor(const Tensor&, double)>& f, Tensor y0,
                      double t0, double t1, double rtol, double atol);

Tensor sample_euler(const DriftNet& net, const Tensor& x0, const Tensor& c_mel, int n_steps);
Tensor sample_rk45(const DriftNet& net, const Tensor& x0, const Tensor& c_mel, double rtol,
                   double atol);

}  // namespace mmtts
