#include "mmtts/nn.hpp"

#include <cmath>

#include "mmtts/errors.hpp"

namespace mmtts {

Var ParamStore::create(const std::string& name, Tensor init) {
  if (params_.count(name)) throw ConfigError("duplicate parameter: " + name);
  Var v(std::move(init), true);
  params_.emplace(name, v);
  return v;
}

Var ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : params_) v.zero_grad();
}

int64_t ParamStore::param_count() const {
  int64_t n = 0;
  for (const auto& [name, v] : params_) n += v.value().numel();
  return n;
}

void ParamStore::load_values(const std::map<std::string, Tensor>& tensors) {
  for (auto& [name, v] : params_) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("checkpoint missing parameter: " + name);
    if (!v.value().same_shape(it->second))
      throw ConfigError("checkpoint shape mismatch for " + name + ": expected " +
                        v.value().shape_str() + ", got " + it->second.shape_str());
    v.node()->value = it->second;
  }
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : params_) out.emplace(name, v.value());
  return out;
}

Tensor glorot_uniform(int fan_in, int fan_out, std::vector<int> shape, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
  return t;
}

Linear Linear::create(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
  Linear l;
  l.W = ps.create(prefix + ".W", glorot_uniform(in, out, {in, out}, rng));
  l.b = ps.create(prefix + ".b", Tensor::zeros({out}));
  return l;
}

Var Linear::operator()(const Var& x) const { return add_row_broadcast(matmul(x, W), b); }

Conv1d Conv1d::create(ParamStore& ps, const std::string& prefix, int in, int out, int k,
                      Rng& rng) {
  Conv1d c;
  c.W = ps.create(prefix + ".W", glorot_uniform(in * k, out * k, {out, in, k}, rng));
  c.b = ps.create(prefix + ".b", Tensor::zeros({out}));
  return c;
}

Var Conv1d::operator()(const Var& x) const { return conv1d(x, W, b); }

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& prefix, int dim) {
  LayerNorm ln;
  ln.gain = ps.create(prefix + ".gain", Tensor::full({dim}, 1.0));
  ln.bias = ps.create(prefix + ".bias", Tensor::zeros({dim}));
  return ln;
}

Var LayerNorm::operator()(const Var& x) const {
  return add_row_broadcast(mul_row_broadcast(row_normalize(x, eps), gain), bias);
}

Gru Gru::create(ParamStore& ps, const std::string& prefix, int input, int hidden,
                int num_layers, Rng& rng) {
  Gru g;
  g.hidden = hidden;
  for (int l = 0; l < num_layers; ++l) {
    int in = (l == 0) ? input : hidden;
    std::string p = prefix + ".l" + std::to_string(l);
    Layer lay;
    lay.w_zr = ps.create(p + ".w_zr", glorot_uniform(in, 2 * hidden, {in, 2 * hidden}, rng));
    lay.u_zr = ps.create(p + ".u_zr", glorot_uniform(hidden, 2 * hidden, {hidden, 2 * hidden}, rng));
    lay.b_zr = ps.create(p + ".b_zr", Tensor::zeros({2 * hidden}));
    lay.w_n = ps.create(p + ".w_n", glorot_uniform(in, hidden, {in, hidden}, rng));
    lay.b_nx = ps.create(p + ".b_nx", Tensor::zeros({hidden}));
    lay.u_n = ps.create(p + ".u_n", glorot_uniform(hidden, hidden, {hidden, hidden}, rng));
    lay.b_nh = ps.create(p + ".b_nh", Tensor::zeros({hidden}));
    g.layers.push_back(lay);
  }
  return g;
}

Var Gru::operator()(const Var& x) const {
  int t_len = x.value().rows();
  Var seq = x;
  for (const auto& lay : layers) {
    // Precompute the input-side projections for the whole sequence.
    Var xz = add_row_broadcast(matmul(seq, lay.w_zr), lay.b_zr);  // [T x 2H]
    Var xn = add_row_broadcast(matmul(seq, lay.w_n), lay.b_nx);   // [T x H]
    Var h = constant(Tensor::zeros({1, hidden}));
    std::vector<Var> outs;
    outs.reserve(t_len);
    for (int t = 0; t < t_len; ++t) {
      Var zr = sigmoid(add(slice_rows(xz, t, t + 1), matmul(h, lay.u_zr)));
      Var z = slice_cols(zr, 0, hidden);
      Var r = slice_cols(zr, hidden, 2 * hidden);
      Var hn = add_row_broadcast(matmul(h, lay.u_n), lay.b_nh);
      Var n = tanh_op(add(slice_rows(xn, t, t + 1), mul(r, hn)));
      // h' = (1-z)*n + z*h
      Var one_minus_z = add_scalar(neg(z), 1.0);
      h = add(mul(one_minus_z, n), mul(z, h));
      outs.push_back(h);
    }
    seq = concat_rows(outs);
  }
  return seq;
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& ps, const std::string& prefix,
                                              int dim, int heads, Rng& rng) {
  if (dim % heads != 0) throw ConfigError("attention dim must divide heads");
  MultiHeadAttention a;
  a.heads = heads;
  a.dim = dim;
  a.wq = Linear::create(ps, prefix + ".q", dim, dim, rng);
  a.wk = Linear::create(ps, prefix + ".k", dim, dim, rng);
  a.wv = Linear::create(ps, prefix + ".v", dim, dim, rng);
  a.wo = Linear::create(ps, prefix + ".o", dim, dim, rng);
  return a;
}

Var MultiHeadAttention::operator()(const Var& x) const {
  int dh = dim / heads;
  Var q = wq(x), k = wk(x), v = wv(x);
  double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  for (int hi = 0; hi < heads; ++hi) {
    Var qh = slice_cols(q, hi * dh, (hi + 1) * dh);
    Var kh = slice_cols(k, hi * dh, (hi + 1) * dh);
    Var vh = slice_cols(v, hi * dh, (hi + 1) * dh);
    Var scores = scale(matmul(qh, transpose(kh)), scale_f);
    Var attn = softmax_rows(scores);
    head_outs.push_back(matmul(attn, vh));
  }
  Var cat = (heads == 1) ? head_outs[0] : concat_cols(head_outs);
  return wo(cat);
}

Tensor positional_encoding(int t_len, int dim) {
  Tensor pe = Tensor::zeros({t_len, dim});
  for (int t = 0; t < t_len; ++t) {
    for (int i = 0; i < dim / 2; ++i) {
      double freq = std::pow(10000.0, -2.0 * i / dim);
      pe.at(t, 2 * i) = std::sin(t * freq);
      pe.at(t, 2 * i + 1) = std::cos(t * freq);
    }
  }
  return pe;
}

}  // namespace mmtts
