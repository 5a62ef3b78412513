#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "nlmr/common.hpp"

namespace nlmr::quant {

// 16-bit affine coding with one (scale, shift) per column:
//   value(i, j) = int(i, j) * scale_j + shift_j
// scale_j = (max_j - min_j) / 65535 and shift_j = min_j + 32768 * scale_j, so
// the column range maps onto [-32768, 32767]. Columns are stored contiguously
// and zero-padded to a multiple of kPad rows for the SIMD kernels. The AVX-512
// build also keeps the codes in panels of kPanel columns for matvec: within a
// panel, each row pair holds 2 rows x kPanel columns, row-interleaved.
class QuantizedMatrix {
 public:
  static constexpr std::size_t kPad = 32;
  static constexpr std::size_t kPanel = 64;

  QuantizedMatrix() = default;
  /// Throws NumericError on a non-finite entry.
  static QuantizedMatrix Quantize(const Eigen::MatrixXf& m);
  /// Rebuilds from raw parts (rows x cols ints in column order, unpadded).
  static QuantizedMatrix FromParts(std::size_t rows, std::size_t cols, std::span<const std::int16_t> column_major,
                                   std::vector<double> scales, std::vector<double> shifts);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t stride() const { return stride_; }

  std::int16_t Int(std::size_t i, std::size_t j) const { return values_[j * stride_ + i]; }
  double Value(std::size_t i, std::size_t j) const { return Int(i, j) * scales_[j] + shifts_[j]; }
  double scale(std::size_t j) const { return scales_[j]; }
  double shift(std::size_t j) const { return shifts_[j]; }
  std::span<const double> scales() const { return scales_; }
  std::span<const double> shifts() const { return shifts_; }
  /// Sum of the integer codes of column j.
  std::int64_t ColumnSum(std::size_t j) const { return colsum_[j]; }
  const std::int16_t* Column(std::size_t j) const { return values_.data() + j * stride_; }
  /// Panel layout; empty when the kernel does not use it.
  std::span<const std::int16_t> panels() const { return panels_; }

  Eigen::MatrixXd DequantizeExact() const;
  Eigen::MatrixXf Dequantize() const;

  friend bool operator==(const QuantizedMatrix& a, const QuantizedMatrix& b);

 private:
  void Finish();

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::int16_t> values_;
  std::vector<double> scales_;
  std::vector<double> shifts_;
  std::vector<std::int64_t> colsum_;
  std::vector<std::int16_t> panels_;
};

/// Activation vector coded symmetrically onto [-32767, 32767]:
/// x_i ~ code_i * step + center, with step = (max - min) / 65534.
struct QuantizedActivation {
  std::vector<std::int16_t> high;  // code >> 8, in [-128, 127]
  std::vector<std::int16_t> low;   // code & 255, in [0, 255]
  double step = 0.0;
  double center = 0.0;
  double sum = 0.0;  // exact sum of the float inputs
  std::size_t size = 0;

  std::int32_t Code(std::size_t i) const { return high[i] * 256 + low[i]; }
};

QuantizedActivation QuantizeActivation(std::span<const float> x);

/// Integer dot product of column j with the activation codes. Accumulates in
/// int32 over blocks of at most kBlock rows, then in int64; see the bound in
/// the implementation.
std::int64_t IntegerDot(const QuantizedMatrix& q, std::size_t j, const QuantizedActivation& a);

/// y = W^T x for the matrix W that `q` codes; one output per column.
void QuantizedMatVec(const QuantizedMatrix& q, std::span<const float> x, std::span<float> y);
void QuantizedMatVec(const QuantizedMatrix& q, const QuantizedActivation& a, std::span<float> y);

/// Largest |int32 partial sum| the kernels can reach (analytic worst case).
std::int64_t WorstCaseBlockSum();

/// Name of the compiled integer kernel: "avx512-vnni", "avx2" or "scalar".
const char* KernelName();

}  // namespace nlmr::quant
