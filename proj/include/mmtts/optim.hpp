#pragma once

#include <map>
#include <string>

#include "mmtts/nn.hpp"

namespace mmtts {

class Adam {
 public:
  explicit Adam(ParamStore& params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  // Moment buffers keyed "<param>.m" / "<param>.v" plus the step counter,
  // so resumed runs continue bit-for-bit.
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& st);

 private:
  ParamStore& params_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace mmtts
