#include "mmtts/optim.hpp"

#include <cmath>

#include "mmtts/errors.hpp"

namespace mmtts {

Adam::Adam(ParamStore& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, var] : params_.items()) {
    m_.emplace(name, Tensor::zeros(var.value().shape()));
    v_.emplace(name, Tensor::zeros(var.value().shape()));
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, var] : params_.items()) {
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    const Tensor& g = var.grad();
    Tensor& w = var.node()->value;
    for (int64_t i = 0; i < w.numel(); ++i) {
      double gi = g.data()[i];
      m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * gi;
      v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * gi * gi;
      double mhat = m.data()[i] / bc1;
      double vhat = v.data()[i] / bc2;
      w.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::map<std::string, Tensor> Adam::state() const {
  std::map<std::string, Tensor> st;
  for (const auto& [name, t] : m_) st.emplace(name + ".m", t);
  for (const auto& [name, t] : v_) st.emplace(name + ".v", t);
  st.emplace("__step__", Tensor::full({1}, static_cast<double>(t_)));
  return st;
}

void Adam::load_state(const std::map<std::string, Tensor>& st) {
  auto it = st.find("__step__");
  if (it == st.end()) throw ConfigError("optimizer state missing step counter");
  t_ = static_cast<int64_t>(it->second.data()[0]);
  for (auto& [name, t] : m_) {
    auto f = st.find(name + ".m");
    if (f == st.end()) throw ConfigError("optimizer state missing " + name + ".m");
    t = f->second;
  }
  for (auto& [name, t] : v_) {
    auto f = st.find(name + ".v");
    if (f == st.end()) throw ConfigError("optimizer state missing " + name + ".v");
    t = f->second;
  }
}

}  // namespace mmtts
