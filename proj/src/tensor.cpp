#include "velo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace velo {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

DenseTensor DenseTensor::scalar(double v) {
  DenseTensor t{std::vector<std::size_t>{}};
  t.data_ = {v};
  return t;
}

DenseTensor DenseTensor::from(std::vector<std::size_t> shape, std::vector<double> vals) {
  if (shape_numel(shape) != vals.size())
    throw ShapeError("from(): " + std::to_string(vals.size()) + " values for shape of " +
                     std::to_string(shape_numel(shape)));
  DenseTensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(vals);
  return t;
}

std::size_t DenseTensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("dim(): axis out of range");
  return shape_[axis];
}

std::size_t DenseTensor::trailing_cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

void DenseTensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string DenseTensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

static void require_2d(const DenseTensor& t, const char* who) {
  if (t.rank() != 2) throw ShapeError(std::string(who) + ": want rank 2, got " + t.shape_str());
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: " + a.shape_str() + " x " + b.shape_str());
  DenseTensor c{{m, n}};
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

DenseTensor matmul_tn(const DenseTensor& a, const DenseTensor& b) {
  require_2d(a, "matmul_tn");
  require_2d(b, "matmul_tn");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul_tn: " + a.shape_str() + "^T x " + b.shape_str());
  DenseTensor c{{m, n}};
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = pa + kk * m;
    const double* brow = pb + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw ShapeError("matmul_nt: " + a.shape_str() + " x " + b.shape_str() + "^T");
  DenseTensor c{{m, n}};
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      pc[i * n + j] = acc;
    }
  }
  return c;
}

DenseTensor transpose(const DenseTensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  DenseTensor t{{n, m}};
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at2(j, i) = a.at2(i, j);
  return t;
}

static void require_same_shape(const DenseTensor& a, const DenseTensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(who) + ": " + a.shape_str() + " vs " + b.shape_str());
}

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "add");
  DenseTensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

DenseTensor sub(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "sub");
  DenseTensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

DenseTensor mul(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "mul");
  DenseTensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

DenseTensor scale(const DenseTensor& a, double s) {
  DenseTensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= s;
  return c;
}

void add_inplace(DenseTensor& a, const DenseTensor& b, double s) {
  require_same_shape(a, b, "add_inplace");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += s * pb[i];
}

void scale_inplace(DenseTensor& a, double s) {
  double* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] *= s;
}

double sum(const DenseTensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
  return acc;
}

double mean(const DenseTensor& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return sum(a) / static_cast<double>(a.size());
}

double max_value(const DenseTensor& a) {
  if (a.size() == 0) throw ShapeError("max of empty tensor");
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, a[i]);
  return m;
}

double l2_norm(const DenseTensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * a[i];
  return std::sqrt(acc);
}

double dot(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<double> mean_over_rows(const DenseTensor& a) {
  if (a.rank() == 0) return {a[0]};
  const std::size_t n = a.trailing_cols();
  const std::size_t rows = a.size() / n;
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[j] += a[r * n + j];
  for (double& v : out) v /= static_cast<double>(rows);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

void tanh_inplace(DenseTensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::tanh(a[i]);
}

void sigmoid_inplace(DenseTensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = sigmoid_scalar(a[i]);
}

void relu_inplace(DenseTensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void softmax_rows_inplace(DenseTensor& a) {
  require_2d(a, "softmax_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = a.data() + r * cols;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - m);
      z += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= z;
  }
}

}  // namespace velo
