#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace velo {

// Thrown when operand shapes don't line up (matmul, elementwise ops, ...).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles. Rank 0 is a scalar with one element.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<std::size_t> shape, double fill = 0.0);
  static DenseTensor scalar(double v);
  static DenseTensor from(std::vector<std::size_t> shape, std::vector<double> vals);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-d accessors (bounds unchecked; rank checked in debug paths only).
  double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::size_t dim(std::size_t axis) const;
  // Rows/cols as used by the factored second-moment accumulator: the trailing
  // axis is the column count, everything before it is flattened into rows.
  std::size_t trailing_cols() const;

  void fill(double v);
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

// --- linear algebra ---------------------------------------------------------

// C = A * B for 2-d tensors, [m,k] x [k,n] -> [m,n].
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);
// C = A^T * B, [k,m] x [k,n] -> [m,n]. Used heavily by hand backprop.
DenseTensor matmul_tn(const DenseTensor& a, const DenseTensor& b);
// C = A * B^T, [m,k] x [n,k] -> [m,n].
DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b);
DenseTensor transpose(const DenseTensor& a);

// --- elementwise ------------------------------------------------------------

DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor sub(const DenseTensor& a, const DenseTensor& b);
DenseTensor mul(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(const DenseTensor& a, double s);
void add_inplace(DenseTensor& a, const DenseTensor& b, double s = 1.0);
void scale_inplace(DenseTensor& a, double s);

// --- reductions -------------------------------------------------------------

double sum(const DenseTensor& a);
double mean(const DenseTensor& a);
double max_value(const DenseTensor& a);
double l2_norm(const DenseTensor& a);
double dot(const DenseTensor& a, const DenseTensor& b);

// mean over all axes except the trailing one ([.., n] -> [n]).
std::vector<double> mean_over_rows(const DenseTensor& a);

// --- activations ------------------------------------------------------------

double sigmoid_scalar(double x);
void tanh_inplace(DenseTensor& a);
void sigmoid_inplace(DenseTensor& a);
void relu_inplace(DenseTensor& a);

// Row-wise softmax for a [rows, cols] tensor, numerically stabilised by the
// row max. Writes in place.
void softmax_rows_inplace(DenseTensor& a);

}  // namespace velo
