#include "mmtts/reflow.hpp"

#include <cmath>

#include "mmtts/errors.hpp"

namespace mmtts {

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
  if (!x0.same_shape(x1)) throw InvalidInputError("interpolate: shape mismatch");
  if (t < 0.0 || t > 1.0) throw InvalidInputError("interpolate: t must lie in [0, 1]");
  Tensor out = Tensor::zeros(x0.shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = t * x1.data()[i] + (1.0 - t) * x0.data()[i];
  return out;
}

Tensor step_embedding(double t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("step embedding dim must be even");
  Tensor e = Tensor::zeros({dim});
  double s = 1000.0 * t;
  for (int i = 0; i < dim / 2; ++i) {
    double freq = std::pow(10000.0, -2.0 * i / dim);
    e.data()[2 * i] = std::sin(s * freq);
    e.data()[2 * i + 1] = std::cos(s * freq);
  }
  return e;
}

DriftNet DriftNet::create(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg,
                          Rng& rng) {
  DriftNet d;
  d.n_mels_ = cfg.n_mels;
  d.channels_ = cfg.reflow_residual_channels;
  d.step_dim_ = cfg.reflow_step_embed_dim;
  int c = d.channels_;
  d.in_proj_ = Conv1d::create(ps, prefix + ".in", cfg.n_mels, c, 1, rng);
  d.step1_ = Linear::create(ps, prefix + ".step1", d.step_dim_, c, rng);
  d.step2_ = Linear::create(ps, prefix + ".step2", c, c, rng);
  for (int i = 0; i < cfg.reflow_residual_layers; ++i) {
    std::string p = prefix + ".b" + std::to_string(i);
    Block b;
    b.dil = Conv1d::create(ps, p + ".dil", c, 2 * c, cfg.reflow_conv_kernel, rng);
    b.cond = Conv1d::create(ps, p + ".cond", cfg.n_mels, 2 * c, 1, rng);
    b.step = Linear::create(ps, p + ".step", c, c, rng);
    b.out = Conv1d::create(ps, p + ".out", c, 2 * c, 1, rng);
    d.blocks_.push_back(std::move(b));
  }
  d.skip1_ = Conv1d::create(ps, prefix + ".skip1", c, c, 1, rng);
  d.skip2_ = Conv1d::create(ps, prefix + ".skip2", c, cfg.n_mels, 1, rng);
  return d;
}

Var DriftNet::operator()(const Var& x, double t, const Var& c_mel) const {
  if (!x.value().same_shape(c_mel.value()))
    throw InvalidInputError("drift: x and c_mel shapes differ (" + x.value().shape_str() +
                            " vs " + c_mel.value().shape_str() + ")");
  if (x.value().ndim() != 2 || x.value().cols() != n_mels_)
    throw InvalidInputError("drift: expected [T x " + std::to_string(n_mels_) + "] input");

  Var emb = silu(step1_(constant(step_embedding(t, step_dim_).reshaped({1, step_dim_}))));
  emb = silu(step2_(emb));  // [1 x C]

  Var h = relu(in_proj_(transpose(x)));       // [C x T]
  Var cond_in = transpose(c_mel);             // [n_mels x T]
  int c = channels_;
  Var skip_sum = constant(Tensor::zeros({c, h.value().cols()}));
  for (const auto& b : blocks_) {
    Var y = add_col_broadcast(h, reshape(b.step(emb), {c}));
    Var g = add(b.dil(y), b.cond(cond_in));  // [2C x T]
    Var z = mul(tanh_op(slice_rows(g, 0, c)), sigmoid(slice_rows(g, c, 2 * c)));
    Var o = b.out(z);  // [2C x T]
    h = add(h, slice_rows(o, 0, c));
    skip_sum = add(skip_sum, slice_rows(o, c, 2 * c));
  }
  Var s = scale(skip_sum, 1.0 / std::sqrt(static_cast<double>(blocks_.size())));
  s = relu(skip1_(relu(s)));
  return transpose(skip2_(s));
}

Tensor DriftNet::eval(const Tensor& x, double t, const Tensor& c_mel) const {
  NoGradGuard ng;
  return (*this)(Var(x, false), t, Var(c_mel, false)).value();
}

Var reflow_loss(const DriftNet& net, const Tensor& x0, const Tensor& x1, double t,
                const Tensor& c_mel) {
  if (!x0.same_shape(x1)) throw InvalidInputError("reflow_loss: endpoint shape mismatch");
  Tensor xt = interpolate(x0, x1, t);
  Tensor target = Tensor::zeros(x0.shape());
  for (int64_t i = 0; i < target.numel(); ++i) target.data()[i] = x1.data()[i] - x0.data()[i];
  Var v = net(Var(xt, false), t, Var(c_mel, false));
  return mse(v, constant(target));
}

Tensor euler_integrate(const std::function<Tensor(const Tensor&, double)>& f, Tensor y0,
                       double t0, double t1, int n_steps) {
  if (n_steps < 1) throw InvalidInputError("euler: n_steps must be >= 1");
  Tensor y = std::move(y0);
  double h = (t1 - t0) / n_steps;
  for (int k = 0; k < n_steps; ++k) {
    Tensor v = f(y, t0 + k * h);
    for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] += h * v.data()[i];
  }
  return y;
}

// Dormand-Prince 5(4) with PI-free standard step control.
Tensor rk45_integrate(const std::function<Tensor(const Tensor&, double)>& f, Tensor y0,
                      double t0, double t1, double rtol, double atol) {
  if (rtol <= 0.0 || atol <= 0.0) throw InvalidInputError("rk45: tolerances must be positive");
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static const double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                      e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                      e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
  static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;

  Tensor y = std::move(y0);
  int64_t n = y.numel();
  double span = t1 - t0;
  if (span <= 0.0) throw InvalidInputError("rk45: t1 must exceed t0");
  double t = t0;
  double h = span * 0.01;
  Tensor k1 = f(y, t);
  auto lin = [&](std::initializer_list<std::pair<double, const Tensor*>> terms) {
    Tensor r = y;
    for (const auto& [coef, kp] : terms)
      for (int64_t i = 0; i < n; ++i) r.data()[i] += h * coef * kp->data()[i];
    return r;
  };

  int max_steps = 100000;
  for (int step = 0; step < max_steps && t < t1; ++step) {
    if (t + h > t1) h = t1 - t;
    Tensor k2 = f(lin({{a21, &k1}}), t + c2 * h);
    Tensor k3 = f(lin({{a31, &k1}, {a32, &k2}}), t + c3 * h);
    Tensor k4 = f(lin({{a41, &k1}, {a42, &k2}, {a43, &k3}}), t + c4 * h);
    Tensor k5 = f(lin({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}), t + c5 * h);
    Tensor k6 = f(lin({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}), t + h);
    Tensor y5 = lin({{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    Tensor k7 = f(y5, t + h);

    double err_sq = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double err = h * (e1 * k1.data()[i] + e3 * k3.data()[i] + e4 * k4.data()[i] +
                        e5 * k5.data()[i] + e6 * k6.data()[i] + e7 * k7.data()[i]);
      double sc = atol + rtol * std::max(std::abs(y.data()[i]), std::abs(y5.data()[i]));
      err_sq += (err / sc) * (err / sc);
    }
    double err_norm = std::sqrt(err_sq / static_cast<double>(n));

    if (err_norm <= 1.0) {
      t += h;
      y = std::move(y5);
      k1 = std::move(k7);
    }
    double factor;
    if (!std::isfinite(err_norm))
      factor = 0.2;  // non-finite drift: force the step down until underflow
    else if (err_norm > 0.0)
      factor = 0.9 * std::pow(err_norm, -0.2);
    else
      factor = 5.0;
    h *= std::min(5.0, std::max(0.2, factor));
    if (h < 1e-14 * span)
      throw IntegrationError("rk45: step size underflow at t=" + std::to_string(t));
  }
  if (t < t1) throw IntegrationError("rk45: exceeded max step count");
  return y;
}

Tensor sample_euler(const DriftNet& net, const Tensor& x0, const Tensor& c_mel, int n_steps) {
  return euler_integrate([&](const Tensor& y, double t) { return net.eval(y, t, c_mel); }, x0,
                         0.0, 1.0, n_steps);
}

Tensor sample_rk45(const DriftNet& net, const Tensor& x0, const Tensor& c_mel, double rtol,
                   double atol) {
  return rk45_integrate([&](const Tensor& y, double t) { return net.eval(y, t, c_mel); }, x0,
                        0.0, 1.0, rtol, atol);
}

}  // namespace mmtts
