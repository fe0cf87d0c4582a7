#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmtts/autograd.hpp"

namespace mmtts {

// Named parameter registry. Ordered map keeps checkpoint layout and update
// order deterministic.
class ParamStore {
 public:
  Var create(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  void zero_grad();
  size_t size() const { return params_.size(); }
  const std::map<std::string, Var>& items() const { return params_; }
  std::map<std::string, Var>& items() { return params_; }
  int64_t param_count() const;
  // Overwrites values in place (checkpoint restore).
  void load_values(const std::map<std::string, Tensor>& tensors);
  std::map<std::string, Tensor> snapshot() const;

 private:
  std::map<std::string, Var> params_;
};

Tensor glorot_uniform(int fan_in, int fan_out, std::vector<int> shape, Rng& rng);

struct Linear {
  Var W;  // [in x out]
  Var b;  // [out]
  static Linear create(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);
  Var operator()(const Var& x) const;  // [N x in] -> [N x out]
};

// Channel-major 1-D convolution block, same padding.
struct Conv1d {
  Var W;  // [out x in x k]
  Var b;  // [out]
  static Conv1d create(ParamStore& ps, const std::string& prefix, int in, int out, int k, Rng& rng);
  Var operator()(const Var& x) const;  // [in x T] -> [out x T]
};

struct LayerNorm {
  Var gain;  // [dim]
  Var bias;  // [dim]
  double eps = 1e-5;
  static LayerNorm create(ParamStore& ps, const std::string& prefix, int dim);
  Var operator()(const Var& x) const;  // [T x dim], normalized per row
};

// Multi-layer GRU, batch of one sequence.
struct Gru {
  struct Layer {
    Var w_zr, u_zr, b_zr;  // update/reset gates stacked: [in x 2H], [H x 2H], [2H]
    Var w_n, b_nx;         // candidate, input side
    Var u_n, b_nh;         // candidate, hidden side
  };
  std::vector<Layer> layers;
  int hidden = 0;
  static Gru create(ParamStore& ps, const std::string& prefix, int input, int hidden,
                    int num_layers, Rng& rng);
  Var operator()(const Var& x) const;  // [T x input] -> [T x hidden]
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;
  int dim = 0;
  static MultiHeadAttention create(ParamStore& ps, const std::string& prefix, int dim,
                                   int heads, Rng& rng);
  Var operator()(const Var& x) const;  // self-attention on [T x dim]
};

// Standard sinusoidal position table, [T x dim].
Tensor positional_encoding(int t_len, int dim);

}  // namespace mmtts
