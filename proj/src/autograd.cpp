#include "mmtts/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mmtts/errors.hpp"

namespace mmtts {

namespace {

thread_local bool g_grad_enabled = true;

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap emap(const Tensor& t) { return ECMap(t.data(), t.rows(), t.cols()); }
EMap emap(Tensor& t) { return EMap(t.data(), t.rows(), t.cols()); }

void ensure_grad(Node& n) {
  if (!n.grad_ready) {
    n.grad = Tensor::zeros(n.value.shape());
    n.grad_ready = true;
  }
}

bool track(std::initializer_list<const Var*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Var* v : inputs)
    if (v->defined() && v->requires_grad()) return true;
  return false;
}

std::shared_ptr<Node> new_node(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

// Attaches parents + closure only when tracking; otherwise the node is a
// plain value and the tape stays empty (inference mode).
Var finish(std::shared_ptr<Node> n, std::vector<Var> parents,
           std::function<void()> backprop, bool tracked) {
  if (tracked) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Var::wrap(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw InvalidInputError(std::string(op) + ": shape mismatch " +
                            a.value().shape_str() + " vs " + b.value().shape_str());
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const {
  ensure_grad(*node_);
  return node_->grad;
}

void Var::zero_grad() {
  node_->grad = Tensor::zeros(node_->value.shape());
  node_->grad_ready = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Var& root, const Tensor& seed) {
  Node* r = root.node().get();
  if (!r->requires_grad) return;
  ensure_grad(*r);
  if (!seed.same_shape(r->grad)) throw InvalidInputError("backward: seed shape mismatch");
  for (int64_t i = 0; i < seed.numel(); ++i) r->grad.at(static_cast<int>(i)) += seed.at(static_cast<int>(i));

  // Iterative post-order DFS -> topological order.
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(r, 0);
  seen.insert(r);
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) {
      ensure_grad(*n);
      n->backprop();
    }
  }
  // Free the interior so node destruction never recurses through deep chains.
  for (Node* n : topo) {
    if (n->backprop) {
      n->backprop = nullptr;
      n->parents.clear();
    }
  }
}

void backward(const Var& root) {
  if (root.value().numel() != 1)
    throw InvalidInputError("backward: root must be scalar (or pass a seed)");
  backward(root, Tensor::full(root.value().shape(), 1.0));
}

// --- ops ---------------------------------------------------------------

Var constant(Tensor v) { return Var(std::move(v), false); }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  bool tr = track({&a, &b});
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(static_cast<int>(i)) += b.value().at(static_cast<int>(i));
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return finish(std::move(n), {a, b}, [self, pa, pb]() {
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (int64_t i = 0; i < self->grad.numel(); ++i) pa->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i));
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int64_t i = 0; i < self->grad.numel(); ++i) pb->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i));
    }
  }, tr);
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  bool tr = track({&a, &b});
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(static_cast<int>(i)) -= b.value().at(static_cast<int>(i));
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return finish(std::move(n), {a, b}, [self, pa, pb]() {
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (int64_t i = 0; i < self->grad.numel(); ++i) pa->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i));
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int64_t i = 0; i < self->grad.numel(); ++i) pb->grad.at(static_cast<int>(i)) -= self->grad.at(static_cast<int>(i));
    }
  }, tr);
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  bool tr = track({&a, &b});
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(static_cast<int>(i)) *= b.value().at(static_cast<int>(i));
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return finish(std::move(n), {a, b}, [self, pa, pb]() {
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (int64_t i = 0; i < self->grad.numel(); ++i)
        pa->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i)) * pb->value.at(static_cast<int>(i));
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int64_t i = 0; i < self->grad.numel(); ++i)
        pb->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i)) * pa->value.at(static_cast<int>(i));
    }
  }, tr);
}

Var scale(const Var& a, double c) {
  bool tr = track({&a});
  Tensor out = a.value();
  for (auto& x : out.vec()) x *= c;
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa, c]() {
    ensure_grad(*pa);
    for (int64_t i = 0; i < self->grad.numel(); ++i) pa->grad.at(static_cast<int>(i)) += c * self->grad.at(static_cast<int>(i));
  }, tr);
}

Var add_scalar(const Var& a, double c) {
  bool tr = track({&a});
  Tensor out = a.value();
  for (auto& x : out.vec()) x += c;
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa]() {
    ensure_grad(*pa);
    for (int64_t i = 0; i < self->grad.numel(); ++i) pa->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i));
  }, tr);
}

Var neg(const Var& a) { return scale(a, -1.0); }

namespace {
template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF df) {
  bool tr = track({&a});
  Tensor out = a.value();
  for (auto& x : out.vec()) x = f(x);
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa, df]() {
    ensure_grad(*pa);
    for (int64_t i = 0; i < self->grad.numel(); ++i) {
      int ii = static_cast<int>(i);
      pa->grad.at(ii) += self->grad.at(ii) * df(pa->value.at(ii), self->value.at(ii));
    }
  }, tr);
}
}  // namespace

Var relu(const Var& a) {
  return unary_op(a, [](double x) { return x > 0 ? x : 0.0; },
                  [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Var tanh_op(const Var& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Var silu(const Var& a) {
  return unary_op(a, [](double x) { return x / (1.0 + std::exp(-x)); },
                  [](double x, double) {
                    double s = 1.0 / (1.0 + std::exp(-x));
                    return s * (1.0 + x * (1.0 - s));
                  });
}

Var abs_op(const Var& a) {
  return unary_op(a, [](double x) { return std::fabs(x); },
                  [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.value().cols() != b.value().rows())
    throw InvalidInputError("matmul: incompatible shapes " + a.value().shape_str() +
                            " * " + b.value().shape_str());
  bool tr = track({&a, &b});
  Tensor out({a.value().rows(), b.value().cols()});
  emap(out).noalias() = emap(a.value()) * emap(b.value());
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return finish(std::move(n), {a, b}, [self, pa, pb]() {
    if (pa->requires_grad) {
      ensure_grad(*pa);
      emap(pa->grad).noalias() += emap(self->grad) * emap(pb->value).transpose();
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      emap(pb->grad).noalias() += emap(pa->value).transpose() * emap(self->grad);
    }
  }, tr);
}

Var transpose(const Var& a) {
  if (a.value().ndim() != 2) throw InvalidInputError("transpose: rank-2 only");
  bool tr = track({&a});
  auto n = new_node(a.value().transposed());
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa]() {
    ensure_grad(*pa);
    int r = self->grad.rows(), c = self->grad.cols();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) pa->grad.at(j, i) += self->grad.at(i, j);
  }, tr);
}

Var reshape(const Var& a, std::vector<int> shape) {
  bool tr = track({&a});
  auto n = new_node(a.value().reshaped(std::move(shape)));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa]() {
    ensure_grad(*pa);
    for (int64_t i = 0; i < self->grad.numel(); ++i) pa->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i));
  }, tr);
}

Var slice_rows(const Var& a, int r0, int r1) {
  const Tensor& x = a.value();
  if (x.ndim() != 2 || r0 < 0 || r1 > x.rows() || r0 >= r1)
    throw InvalidInputError("slice_rows: bad range");
  bool tr = track({&a});
  int c = x.cols();
  Tensor out({r1 - r0, c});
  std::copy(x.data() + static_cast<size_t>(r0) * c, x.data() + static_cast<size_t>(r1) * c, out.data());
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa, r0, c]() {
    ensure_grad(*pa);
    int rows = self->grad.rows();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < c; ++j) pa->grad.at(r0 + i, j) += self->grad.at(i, j);
  }, tr);
}

Var slice_cols(const Var& a, int c0, int c1) {
  const Tensor& x = a.value();
  if (x.ndim() != 2 || c0 < 0 || c1 > x.cols() || c0 >= c1)
    throw InvalidInputError("slice_cols: bad range");
  bool tr = track({&a});
  Tensor out({x.rows(), c1 - c0});
  for (int i = 0; i < x.rows(); ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = x.at(i, j);
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa, c0]() {
    ensure_grad(*pa);
    for (int i = 0; i < self->grad.rows(); ++i)
      for (int j = 0; j < self->grad.cols(); ++j) pa->grad.at(i, c0 + j) += self->grad.at(i, j);
  }, tr);
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInputError("concat_rows: empty");
  int c = parts[0].value().cols();
  int rtot = 0;
  for (const auto& p : parts) {
    if (p.value().ndim() != 2 || p.value().cols() != c)
      throw InvalidInputError("concat_rows: column mismatch");
    rtot += p.value().rows();
  }
  bool tr = false;
  for (const auto& p : parts)
    if (g_grad_enabled && p.requires_grad()) tr = true;
  Tensor out({rtot, c});
  int r = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().numel(),
              out.data() + static_cast<size_t>(r) * c);
    r += p.value().rows();
  }
  auto n = new_node(std::move(out));
  Node* self = n.get();
  std::vector<Node*> raw;
  std::vector<int> offs;
  int off = 0;
  for (const auto& p : parts) {
    raw.push_back(p.node().get());
    offs.push_back(off);
    off += p.value().rows();
  }
  return finish(std::move(n), parts, [self, raw, offs, c]() {
    for (size_t k = 0; k < raw.size(); ++k) {
      Node* p = raw[k];
      if (!p->requires_grad) continue;
      ensure_grad(*p);
      int rows = p->value.rows();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < c; ++j) p->grad.at(i, j) += self->grad.at(offs[k] + i, j);
    }
  }, tr);
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInputError("concat_cols: empty");
  int r = parts[0].value().rows();
  int ctot = 0;
  for (const auto& p : parts) {
    if (p.value().ndim() != 2 || p.value().rows() != r)
      throw InvalidInputError("concat_cols: row mismatch");
    ctot += p.value().cols();
  }
  bool tr = false;
  for (const auto& p : parts)
    if (g_grad_enabled && p.requires_grad()) tr = true;
  Tensor out({r, ctot});
  int c = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < p.value().cols(); ++j) out.at(i, c + j) = p.value().at(i, j);
    c += p.value().cols();
  }
  auto n = new_node(std::move(out));
  Node* self = n.get();
  std::vector<Node*> raw;
  std::vector<int> offs;
  int off = 0;
  for (const auto& p : parts) {
    raw.push_back(p.node().get());
    offs.push_back(off);
    off += p.value().cols();
  }
  return finish(std::move(n), parts, [self, raw, offs, r]() {
    for (size_t k = 0; k < raw.size(); ++k) {
      Node* p = raw[k];
      if (!p->requires_grad) continue;
      ensure_grad(*p);
      int cols = p->value.cols();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < cols; ++j) p->grad.at(i, j) += self->grad.at(i, offs[k] + j);
    }
  }, tr);
}

Var softmax_rows(const Var& a) {
  if (a.value().ndim() != 2) throw InvalidInputError("softmax_rows: rank-2 only");
  bool tr = track({&a});
  Tensor out = a.value();
  int r = out.rows(), c = out.cols();
  for (int i = 0; i < r; ++i) {
    double mx = out.at(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, out.at(i, j));
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - mx);
      s += out.at(i, j);
    }
    for (int j = 0; j < c; ++j) out.at(i, j) /= s;
  }
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa]() {
    ensure_grad(*pa);
    int r = self->value.rows(), c = self->value.cols();
    for (int i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += self->grad.at(i, j) * self->value.at(i, j);
      for (int j = 0; j < c; ++j)
        pa->grad.at(i, j) += self->value.at(i, j) * (self->grad.at(i, j) - dot);
    }
  }, tr);
}

Var row_normalize(const Var& a, double eps) {
  const Tensor& x = a.value();
  if (x.ndim() != 2 || x.cols() < 1) throw InvalidInputError("row_normalize: rank-2 with columns required");
  bool tr = track({&a});
  int r = x.rows(), c = x.cols();
  Tensor out({r, c});
  Tensor stds({r});
  for (int i = 0; i < r; ++i) {
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += x.at(i, j);
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = x.at(i, j) - mu;
      var += d * d;
    }
    double sd = std::sqrt(var / c);
    stds.at(i) = sd;
    for (int j = 0; j < c; ++j) out.at(i, j) = (x.at(i, j) - mu) / (sd + eps);
  }
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa, eps, stds]() {
    ensure_grad(*pa);
    int r = self->value.rows(), c = self->value.cols();
    for (int i = 0; i < r; ++i) {
      double sd = stds.at(i);
      double denom = sd + eps;
      double gmean = 0.0, gdot = 0.0;
      for (int j = 0; j < c; ++j) {
        gmean += self->grad.at(i, j);
        gdot += self->grad.at(i, j) * self->value.at(i, j);
      }
      gmean /= c;
      // grad_x_j = (g_j - gmean)/(s+eps) - (sum_k g_k y_k) y_j / (c s);
      // the std term vanishes analytically on constant rows (s == 0).
      for (int j = 0; j < c; ++j) {
        double t2 = (sd > 0.0) ? gdot * self->value.at(i, j) / (c * sd) : 0.0;
        pa->grad.at(i, j) += (self->grad.at(i, j) - gmean) / denom - t2;
      }
    }
  }, tr);
}

Var add_row_broadcast(const Var& x, const Var& v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  if (xv.ndim() != 2 || vv.numel() != xv.cols())
    throw InvalidInputError("add_row_broadcast: shape mismatch");
  bool tr = track({&x, &v});
  Tensor out = xv;
  for (int i = 0; i < xv.rows(); ++i)
    for (int j = 0; j < xv.cols(); ++j) out.at(i, j) += vv.at(j);
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* px = x.node().get();
  Node* pv = v.node().get();
  return finish(std::move(n), {x, v}, [self, px, pv]() {
    if (px->requires_grad) {
      ensure_grad(*px);
      for (int64_t i = 0; i < self->grad.numel(); ++i) px->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i));
    }
    if (pv->requires_grad) {
      ensure_grad(*pv);
      int r = self->grad.rows(), c = self->grad.cols();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) pv->grad.at(j) += self->grad.at(i, j);
    }
  }, tr);
}

Var mul_row_broadcast(const Var& x, const Var& v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  if (xv.ndim() != 2 || vv.numel() != xv.cols())
    throw InvalidInputError("mul_row_broadcast: shape mismatch");
  bool tr = track({&x, &v});
  Tensor out = xv;
  for (int i = 0; i < xv.rows(); ++i)
    for (int j = 0; j < xv.cols(); ++j) out.at(i, j) *= vv.at(j);
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* px = x.node().get();
  Node* pv = v.node().get();
  return finish(std::move(n), {x, v}, [self, px, pv]() {
    int r = self->grad.rows(), c = self->grad.cols();
    if (px->requires_grad) {
      ensure_grad(*px);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) px->grad.at(i, j) += self->grad.at(i, j) * pv->value.at(j);
    }
    if (pv->requires_grad) {
      ensure_grad(*pv);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) pv->grad.at(j) += self->grad.at(i, j) * px->value.at(i, j);
    }
  }, tr);
}

Var add_col_broadcast(const Var& x, const Var& v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  if (xv.ndim() != 2 || vv.numel() != xv.rows())
    throw InvalidInputError("add_col_broadcast: shape mismatch");
  bool tr = track({&x, &v});
  Tensor out = xv;
  for (int i = 0; i < xv.rows(); ++i)
    for (int j = 0; j < xv.cols(); ++j) out.at(i, j) += vv.at(i);
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* px = x.node().get();
  Node* pv = v.node().get();
  return finish(std::move(n), {x, v}, [self, px, pv]() {
    if (px->requires_grad) {
      ensure_grad(*px);
      for (int64_t i = 0; i < self->grad.numel(); ++i) px->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i));
    }
    if (pv->requires_grad) {
      ensure_grad(*pv);
      int r = self->grad.rows(), c = self->grad.cols();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) pv->grad.at(i) += self->grad.at(i, j);
    }
  }, tr);
}

Var sum_all(const Var& a) {
  bool tr = track({&a});
  double s = 0.0;
  for (double x : a.value().vec()) s += x;
  auto n = new_node(Tensor({1}, {s}));
  Node* self = n.get();
  Node* pa = a.node().get();
  return finish(std::move(n), {a}, [self, pa]() {
    ensure_grad(*pa);
    double g = self->grad.at(0);
    for (auto& x : pa->grad.vec()) x += g;
  }, tr);
}

Var mean_all(const Var& a) {
  if (a.value().numel() == 0) throw InvalidInputError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().numel()));
}

namespace {
void conv_check(const Tensor& x, const Tensor& w, const Tensor& b, bool depthwise) {
  if (x.ndim() != 2) throw InvalidInputError("conv1d: input must be [C x T]");
  if (w.ndim() != 3) throw InvalidInputError("conv1d: kernel must be rank-3");
  if (w.dim(2) % 2 == 0) throw InvalidInputError("conv1d: kernel width must be odd");
  if (depthwise) {
    if (w.dim(0) != x.dim(0) || w.dim(1) != 1)
      throw InvalidInputError("conv1d_depthwise: kernel [C x 1 x K] must match input channels");
    if (b.numel() != x.dim(0)) throw InvalidInputError("conv1d_depthwise: bias length");
  } else {
    if (w.dim(1) != x.dim(0))
      throw InvalidInputError("conv1d: kernel input channels mismatch");
    if (b.numel() != w.dim(0)) throw InvalidInputError("conv1d: bias length");
  }
}
}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& b) {
  conv_check(x.value(), w.value(), b.value(), false);
  bool tr = track({&x, &w, &b});
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  int cin = xv.rows(), t_len = xv.cols();
  int cout = wv.dim(0), k = wv.dim(2), pad = (k - 1) / 2;
  Tensor out({cout, t_len});
  for (int co = 0; co < cout; ++co) {
    for (int t = 0; t < t_len; ++t) out.at(co, t) = b.value().at(co);
    for (int ci = 0; ci < cin; ++ci) {
      for (int kk = 0; kk < k; ++kk) {
        double wgt = wv.at(co, ci, kk);
        if (wgt == 0.0) continue;
        int lo = std::max(0, pad - kk), hi = std::min(t_len, t_len + pad - kk);
        const double* xp = xv.data() + static_cast<size_t>(ci) * t_len;
        double* op = out.data() + static_cast<size_t>(co) * t_len;
        for (int t = lo; t < hi; ++t) op[t] += wgt * xp[t + kk - pad];
      }
    }
  }
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* px = x.node().get();
  Node* pw = w.node().get();
  Node* pb = b.node().get();
  return finish(std::move(n), {x, w, b}, [self, px, pw, pb, cin, cout, k, pad, t_len]() {
    const Tensor& gy = self->grad;
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int co = 0; co < cout; ++co)
        for (int t = 0; t < t_len; ++t) pb->grad.at(co) += gy.at(co, t);
    }
    if (pw->requires_grad) {
      ensure_grad(*pw);
      for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
          for (int kk = 0; kk < k; ++kk) {
            double s = 0.0;
            int lo = std::max(0, pad - kk), hi = std::min(t_len, t_len + pad - kk);
            for (int t = lo; t < hi; ++t) s += gy.at(co, t) * px->value.at(ci, t + kk - pad);
            pw->grad.at(co, ci, kk) += s;
          }
    }
    if (px->requires_grad) {
      ensure_grad(*px);
      for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
          for (int kk = 0; kk < k; ++kk) {
            double wgt = pw->value.at(co, ci, kk);
            if (wgt == 0.0) continue;
            int lo = std::max(0, pad - kk), hi = std::min(t_len, t_len + pad - kk);
            for (int t = lo; t < hi; ++t) px->grad.at(ci, t + kk - pad) += wgt * gy.at(co, t);
          }
    }
  }, tr);
}

Var conv1d_depthwise(const Var& x, const Var& kziel, const Var& b) {
  conv_check(x.value(), kziel.value(), b.value(), true);
  bool tr = track({&x, &kziel, &b});
  const Tensor& xv = x.value();
  const Tensor& kv = kziel.value();
  int c = xv.rows(), t_len = xv.cols();
  int k = kv.dim(2), pad = (k - 1) / 2;
  Tensor out({c, t_len});
  for (int ci = 0; ci < c; ++ci) {
    for (int t = 0; t < t_len; ++t) out.at(ci, t) = b.value().at(ci);
    for (int kk = 0; kk < k; ++kk) {
      double wgt = kv.at(ci, 0, kk);
      if (wgt == 0.0) continue;
      int lo = std::max(0, pad - kk), hi = std::min(t_len, t_len + pad - kk);
      const double* xp = xv.data() + static_cast<size_t>(ci) * t_len;
      double* op = out.data() + static_cast<size_t>(ci) * t_len;
      for (int t = lo; t < hi; ++t) op[t] += wgt * xp[t + kk - pad];
    }
  }
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* px = x.node().get();
  Node* pk = kziel.node().get();
  Node* pb = b.node().get();
  return finish(std::move(n), {x, kziel, b}, [self, px, pk, pb, c, k, pad, t_len]() {
    const Tensor& gy = self->grad;
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int ci = 0; ci < c; ++ci)
        for (int t = 0; t < t_len; ++t) pb->grad.at(ci) += gy.at(ci, t);
    }
    if (pk->requires_grad) {
      ensure_grad(*pk);
      for (int ci = 0; ci < c; ++ci)
        for (int kk = 0; kk < k; ++kk) {
          double s = 0.0;
          int lo = std::max(0, pad - kk), hi = std::min(t_len, t_len + pad - kk);
          for (int t = lo; t < hi; ++t) s += gy.at(ci, t) * px->value.at(ci, t + kk - pad);
          pk->grad.at(ci, 0, kk) += s;
        }
    }
    if (px->requires_grad) {
      ensure_grad(*px);
      for (int ci = 0; ci < c; ++ci)
        for (int kk = 0; kk < k; ++kk) {
          double wgt = pk->value.at(ci, 0, kk);
          if (wgt == 0.0) continue;
          int lo = std::max(0, pad - kk), hi = std::min(t_len, t_len + pad - kk);
          for (int t = lo; t < hi; ++t) px->grad.at(ci, t + kk - pad) += wgt * gy.at(ci, t);
        }
    }
  }, tr);
}

Var embedding_lookup(const Var& table, const std::vector<int>& ids) {
  const Tensor& tv = table.value();
  if (tv.ndim() != 2) throw InvalidInputError("embedding_lookup: table must be [V x D]");
  if (ids.empty()) throw InvalidInputError("embedding_lookup: empty id sequence");
  for (int id : ids)
    if (id < 0 || id >= tv.rows()) throw InvalidInputError("embedding_lookup: id out of range");
  bool tr = track({&table});
  int d = tv.cols();
  Tensor out({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = tv.at(ids[i], j);
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* pt = table.node().get();
  return finish(std::move(n), {table}, [self, pt, ids, d]() {
    ensure_grad(*pt);
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j) pt->grad.at(ids[i], j) += self->grad.at(static_cast<int>(i), j);
  }, tr);
}

Var dropout(const Var& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw InvalidInputError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  bool tr = track({&x});
  double keep = 1.0 - p;
  Tensor mask(x.value().shape());
  for (auto& m : mask.vec()) m = (rng.uniform() < p) ? 0.0 : 1.0 / keep;
  Tensor out = x.value();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(static_cast<int>(i)) *= mask.at(static_cast<int>(i));
  auto n = new_node(std::move(out));
  Node* self = n.get();
  Node* px = x.node().get();
  return finish(std::move(n), {x}, [self, px, mask]() {
    ensure_grad(*px);
    for (int64_t i = 0; i < self->grad.numel(); ++i)
      px->grad.at(static_cast<int>(i)) += self->grad.at(static_cast<int>(i)) * mask.at(static_cast<int>(i));
  }, tr);
}

Var detach(const Var& x) { return constant(x.value()); }

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  bool tr = track({&a, &b});
  int64_t n_el = a.value().numel();
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i) {
    double d = a.value().at(static_cast<int>(i)) - b.value().at(static_cast<int>(i));
    s += d * d;
  }
  auto n = new_node(Tensor({1}, {s / static_cast<double>(n_el)}));
  Node* self = n.get();
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return finish(std::move(n), {a, b}, [self, pa, pb, n_el]() {
    double g = self->grad.at(0) * 2.0 / static_cast<double>(n_el);
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (int64_t i = 0; i < n_el; ++i)
        pa->grad.at(static_cast<int>(i)) += g * (pa->value.at(static_cast<int>(i)) - pb->value.at(static_cast<int>(i)));
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int64_t i = 0; i < n_el; ++i)
        pb->grad.at(static_cast<int>(i)) -= g * (pa->value.at(static_cast<int>(i)) - pb->value.at(static_cast<int>(i)));
    }
  }, tr);
}

Var mae(const Var& a, const Var& b) {
  check_same_shape(a, b, "mae");
  bool tr = track({&a, &b});
  int64_t n_el = a.value().numel();
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i)
    s += std::fabs(a.value().at(static_cast<int>(i)) - b.value().at(static_cast<int>(i)));
  auto n = new_node(Tensor({1}, {s / static_cast<double>(n_el)}));
  Node* self = n.get();
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return finish(std::move(n), {a, b}, [self, pa, pb, n_el]() {
    double g = self->grad.at(0) / static_cast<double>(n_el);
    for (int64_t i = 0; i < n_el; ++i) {
      double d = pa->value.at(static_cast<int>(i)) - pb->value.at(static_cast<int>(i));
      double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      if (pa->requires_grad) {
        ensure_grad(*pa);
        pa->grad.at(static_cast<int>(i)) += g * sgn;
      }
      if (pb->requires_grad) {
        ensure_grad(*pb);
        pb->grad.at(static_cast<int>(i)) -= g * sgn;
      }
    }
  }, tr);
}

}  // namespace mmtts
