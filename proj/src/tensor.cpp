#include "mmtts/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mmtts/errors.hpp"

namespace mmtts {

namespace {
int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInputError("negative tensor dimension");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
    throw InvalidInputError("tensor data size does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::from(std::vector<double> v) {
  int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor Tensor::from2d(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw InvalidInputError("from2d: no rows");
  int r = static_cast<int>(rows.size());
  int c = static_cast<int>(rows[0].size());
  Tensor t({r, c});
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c)
      throw InvalidInputError("from2d: ragged rows");
    for (int j = 0; j < c; ++j) t.at(i, j) = rows[i][j];
  }
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stdev) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = rng.normal() * stdev;
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != numel())
    throw InvalidInputError("reshape: element count mismatch");
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::transposed() const {
  if (ndim() != 2) throw InvalidInputError("transpose: rank-2 only");
  Tensor t({cols(), rows()});
  for (int i = 0; i < rows(); ++i)
    for (int j = 0; j < cols(); ++j) t.at(j, i) = at(i, j);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::fabs(x));
  return m;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? " x " : "") << shape_[i];
  os << "]";
  return os.str();
}

}  // namespace mmtts
