#include "nlmr/quant/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#if defined(__AVX512BW__) && defined(__AVX512VNNI__)
#define NLMR_KERNEL_AVX512 1
#include <immintrin.h>
#elif defined(__AVX2__)
#define NLMR_KERNEL_AVX2 1
#include <immintrin.h>
#endif

namespace nlmr::quant {

namespace {

constexpr double kLevels = 65535.0;
constexpr double kHalf = 32768.0;

// Scale rounded up to the longest mantissa, and shift snapped to the same
// unit, for which shift + scale * q is exact in double for every int16 q.
std::pair<double, double> ExactGrid(double lo, double hi) {
  const double raw = (hi - lo) / kLevels;
  const double ratio = std::max(std::abs(lo), std::abs(hi)) / raw + 2 * kHalf;
  int bits = std::min(40, static_cast<int>(std::floor(std::log2(0x1p53 / ratio))) - 1);
  int exp = 0;
  std::frexp(raw, &exp);
  const double unit = std::ldexp(1.0, exp - bits);
  const double scale = std::ceil(raw / unit) * unit;
  const double shift = std::nearbyint((lo + kHalf * scale) / unit) * unit;
  return {scale, shift};
}

std::size_t Padded(std::size_t n) {
  return (n + QuantizedMatrix::kPad - 1) / QuantizedMatrix::kPad * QuantizedMatrix::kPad;
}

// The activation code c in [-32767, 32767] is split as c = 256 * high + low with
// high in [-128, 127] and low in [0, 255]; weight codes lie in [-32768, 32767].
// One int32 lane then gains at most 255 * 32768 per product, and a block adds
// kProductsPerLane products to each lane before flushing to int64:
//   256 * 255 * 32768 = 2139095040 < 2^31 - 1.
constexpr std::int64_t kProductsPerLane = 256;

#if NLMR_KERNEL_AVX512
constexpr std::size_t kBlock = 16 * kProductsPerLane;  // 16 lanes, 2 products per lane per 32 rows

std::int64_t Reduce(__m512i v) {
  const __m512i lo = _mm512_cvtepi32_epi64(_mm512_castsi512_si256(v));
  const __m512i hi = _mm512_cvtepi32_epi64(_mm512_extracti64x4_epi64(v, 1));
  return _mm512_reduce_add_epi64(_mm512_add_epi64(lo, hi));
}

// Four columns at once; writes the integer dots to out[0..3].
void Dot4(const std::int16_t* const* cols, const QuantizedActivation& a, std::size_t stride, std::int64_t* out) {
  std::int64_t total[4] = {0, 0, 0, 0};
  for (std::size_t start = 0; start < stride; start += kBlock) {
    const std::size_t end = std::min(stride, start + kBlock);
    __m512i hi[4], lo[4];
    for (int c = 0; c < 4; ++c) hi[c] = lo[c] = _mm512_setzero_si512();
    for (std::size_t i = start; i < end; i += 32) {
      const __m512i h = _mm512_loadu_si512(a.high.data() + i);
      const __m512i l = _mm512_loadu_si512(a.low.data() + i);
      for (int c = 0; c < 4; ++c) {
        const __m512i q = _mm512_loadu_si512(cols[c] + i);
        hi[c] = _mm512_dpwssd_epi32(hi[c], h, q);
        lo[c] = _mm512_dpwssd_epi32(lo[c], l, q);
      }
    }
    for (int c = 0; c < 4; ++c) total[c] += 256 * Reduce(hi[c]) + Reduce(lo[c]);
  }
  std::copy(total, total + 4, out);
}

std::int64_t Dot1(const std::int16_t* col, const QuantizedActivation& a, std::size_t stride) {
  std::int64_t total = 0;
  for (std::size_t start = 0; start < stride; start += kBlock) {
    const std::size_t end = std::min(stride, start + kBlock);
    __m512i hi = _mm512_setzero_si512(), lo = _mm512_setzero_si512();
    for (std::size_t i = start; i < end; i += 32) {
      const __m512i q = _mm512_loadu_si512(col + i);
      hi = _mm512_dpwssd_epi32(hi, _mm512_loadu_si512(a.high.data() + i), q);
      lo = _mm512_dpwssd_epi32(lo, _mm512_loadu_si512(a.low.data() + i), q);
    }
    total += 256 * Reduce(hi) + Reduce(lo);
  }
  return total;
}

// 256 * hi + lo, widened to int64 and added to acc[0] (lanes 0-7) and acc[1] (8-15).
void Flush(__m512i hi, __m512i lo, __m512i* acc) {
  const __m512i h0 = _mm512_cvtepi32_epi64(_mm512_castsi512_si256(hi));
  const __m512i h1 = _mm512_cvtepi32_epi64(_mm512_extracti64x4_epi64(hi, 1));
  const __m512i l0 = _mm512_cvtepi32_epi64(_mm512_castsi512_si256(lo));
  const __m512i l1 = _mm512_cvtepi32_epi64(_mm512_extracti64x4_epi64(lo, 1));
  acc[0] = _mm512_add_epi64(acc[0], _mm512_add_epi64(_mm512_slli_epi64(h0, 8), l0));
  acc[1] = _mm512_add_epi64(acc[1], _mm512_add_epi64(_mm512_slli_epi64(h1, 8), l1));
}

// Integer dots of every column against the activation, one panel at a time.
// Each lane is one column and gains 2 products per row pair.
void PanelDots(const QuantizedMatrix& q, const QuantizedActivation& a, std::int64_t* out) {
  constexpr std::size_t kSub = QuantizedMatrix::kPanel / 16;
  constexpr std::size_t kPairsPerBlock = kProductsPerLane / 2;
  const std::size_t pairs = q.stride() / 2;
  const std::size_t count = (q.cols() + QuantizedMatrix::kPanel - 1) / QuantizedMatrix::kPanel;
  for (std::size_t panel = 0; panel < count; ++panel) {
    const std::int16_t* base = q.panels().data() + panel * pairs * QuantizedMatrix::kPanel * 2;
    __m512i acc[kSub][2];
    for (auto& v : acc) v[0] = v[1] = _mm512_setzero_si512();
    for (std::size_t start = 0; start < pairs; start += kPairsPerBlock) {
      const std::size_t end = std::min(pairs, start + kPairsPerBlock);
      __m512i hi[kSub], lo[kSub];
      for (std::size_t k = 0; k < kSub; ++k) hi[k] = lo[k] = _mm512_setzero_si512();
      for (std::size_t p = start; p < end; ++p) {
        std::int32_t hp, lp;
        std::memcpy(&hp, a.high.data() + 2 * p, sizeof hp);
        std::memcpy(&lp, a.low.data() + 2 * p, sizeof lp);
        const __m512i h = _mm512_set1_epi32(hp);
        const __m512i l = _mm512_set1_epi32(lp);
        const std::int16_t* row = base + p * QuantizedMatrix::kPanel * 2;
        for (std::size_t k = 0; k < kSub; ++k) {
          const __m512i w = _mm512_loadu_si512(row + k * 32);
          hi[k] = _mm512_dpwssd_epi32(hi[k], h, w);
          lo[k] = _mm512_dpwssd_epi32(lo[k], l, w);
        }
      }
      for (std::size_t k = 0; k < kSub; ++k) Flush(hi[k], lo[k], acc[k]);
    }
    for (std::size_t k = 0; k < kSub; ++k) {
      alignas(64) std::int64_t lanes[16];
      _mm512_store_si512(lanes, acc[k][0]);
      _mm512_store_si512(lanes + 8, acc[k][1]);
      const std::size_t first = panel * QuantizedMatrix::kPanel + k * 16;
      for (std::size_t c = 0; c < 16 && first + c < q.cols(); ++c) out[first + c] = lanes[c];
    }
  }
}
#elif NLMR_KERNEL_AVX2
constexpr std::size_t kBlock = 8 * kProductsPerLane;  // 8 lanes, 2 products per lane per 16 rows

std::int64_t Reduce(__m256i v) {
  const __m256i lo = _mm256_cvtepi32_epi64(_mm256_castsi256_si128(v));
  const __m256i hi = _mm256_cvtepi32_epi64(_mm256_extracti128_si256(v, 1));
  alignas(32) std::int64_t parts[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(parts), _mm256_add_epi64(lo, hi));
  return parts[0] + parts[1] + parts[2] + parts[3];
}

void Dot4(const std::int16_t* const* cols, const QuantizedActivation& a, std::size_t stride, std::int64_t* out) {
  std::int64_t total[4] = {0, 0, 0, 0};
  for (std::size_t start = 0; start < stride; start += kBlock) {
    const std::size_t end = std::min(stride, start + kBlock);
    __m256i hi[4], lo[4];
    for (int c = 0; c < 4; ++c) hi[c] = lo[c] = _mm256_setzero_si256();
    for (std::size_t i = start; i < end; i += 16) {
      const __m256i h = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a.high.data() + i));
      const __m256i l = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a.low.data() + i));
      for (int c = 0; c < 4; ++c) {
        const __m256i q = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(cols[c] + i));
        hi[c] = _mm256_add_epi32(hi[c], _mm256_madd_epi16(h, q));
        lo[c] = _mm256_add_epi32(lo[c], _mm256_madd_epi16(l, q));
      }
    }
    for (int c = 0; c < 4; ++c) total[c] += 256 * Reduce(hi[c]) + Reduce(lo[c]);
  }
  std::copy(total, total + 4, out);
}

std::int64_t Dot1(const std::int16_t* col, const QuantizedActivation& a, std::size_t stride) {
  const std::int16_t* cols[4] = {col, col, col, col};
  std::int64_t out[4];
  Dot4(cols, a, stride, out);
  return out[0];
}
#else
std::int64_t Dot1(const std::int16_t* col, const QuantizedActivation& a, std::size_t stride) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < stride; ++i) total += static_cast<std::int64_t>(a.Code(i)) * col[i];
  return total;
}

void Dot4(const std::int16_t* const* cols, const QuantizedActivation& a, std::size_t stride, std::int64_t* out) {
  for (int c = 0; c < 4; ++c) out[c] = Dot1(cols[c], a, stride);
}
#endif

}  // namespace

QuantizedMatrix QuantizedMatrix::Quantize(const Eigen::MatrixXf& m) {
  if (!m.allFinite()) throw NumericError("cannot quantize a matrix with non-finite entries");
  QuantizedMatrix q;
  q.rows_ = static_cast<std::size_t>(m.rows());
  q.cols_ = static_cast<std::size_t>(m.cols());
  q.stride_ = Padded(q.rows_);
  q.values_.assign(q.stride_ * q.cols_, 0);
  q.scales_.assign(q.cols_, 0.0);
  q.shifts_.assign(q.cols_, 0.0);
  for (std::size_t j = 0; j < q.cols_; ++j) {
    if (q.rows_ == 0) continue;
    const auto col = m.col(static_cast<Eigen::Index>(j));
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    if (lo == hi) {
      q.shifts_[j] = lo;
      continue;
    }
    const auto [scale, shift] = ExactGrid(lo, hi);
    q.scales_[j] = scale;
    q.shifts_[j] = shift;
    std::int16_t* out = q.values_.data() + j * q.stride_;
    for (std::size_t i = 0; i < q.rows_; ++i) {
      const double v = col[static_cast<Eigen::Index>(i)];
      double code = std::clamp(std::nearbyint((v - shift) / scale), -32768.0, 32767.0);
      // Settle ties and rounding noise on the nearest reconstruction.
      for (double cand : {code - 1, code + 1}) {
        if (cand < -32768.0 || cand > 32767.0) continue;
        if (std::abs(cand * scale + shift - v) < std::abs(code * scale + shift - v)) code = cand;
      }
      out[i] = static_cast<std::int16_t>(code);
    }
  }
  q.Finish();
  return q;
}

QuantizedMatrix QuantizedMatrix::FromParts(std::size_t rows, std::size_t cols, std::span<const std::int16_t> ints,
                                           std::vector<double> scales, std::vector<double> shifts) {
  if (ints.size() != rows * cols || scales.size() != cols || shifts.size() != cols) {
    throw DataError("quantized matrix parts do not match its dims");
  }
  QuantizedMatrix q;
  q.rows_ = rows;
  q.cols_ = cols;
  q.stride_ = Padded(rows);
  q.values_.assign(q.stride_ * cols, 0);
  for (std::size_t j = 0; j < cols; ++j) {
    std::copy_n(ints.data() + j * rows, rows, q.values_.data() + j * q.stride_);
  }
  q.scales_ = std::move(scales);
  q.shifts_ = std::move(shifts);
  q.Finish();
  return q;
}

void QuantizedMatrix::Finish() {
  colsum_.assign(cols_, 0);
  for (std::size_t j = 0; j < cols_; ++j) {
    for (std::size_t i = 0; i < rows_; ++i) colsum_[j] += Int(i, j);
  }
#if NLMR_KERNEL_AVX512
  const std::size_t count = (cols_ + kPanel - 1) / kPanel;
  const std::size_t pairs = stride_ / 2;
  panels_.assign(count * pairs * kPanel * 2, 0);
  for (std::size_t j = 0; j < cols_; ++j) {
    std::int16_t* panel = panels_.data() + (j / kPanel) * pairs * kPanel * 2;
    for (std::size_t i = 0; i < rows_; ++i) panel[(i / 2) * kPanel * 2 + (j % kPanel) * 2 + i % 2] = Int(i, j);
  }
#endif
}

Eigen::MatrixXd QuantizedMatrix::DequantizeExact() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t j = 0; j < cols_; ++j) {
    for (std::size_t i = 0; i < rows_; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = Value(i, j);
  }
  return m;
}

Eigen::MatrixXf QuantizedMatrix::Dequantize() const { return DequantizeExact().cast<float>(); }

bool operator==(const QuantizedMatrix& a, const QuantizedMatrix& b) {
  return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_ && a.scales_ == b.scales_ &&
         a.shifts_ == b.shifts_;
}

QuantizedActivation QuantizeActivation(std::span<const float> x) {
  QuantizedActivation a;
  a.size = x.size();
  const std::size_t padded = Padded(x.size());
  a.high.assign(padded, 0);
  a.low.assign(padded, 0);
  if (x.empty()) return a;
  const Eigen::Map<const Eigen::ArrayXf> v(x.data(), static_cast<Eigen::Index>(x.size()));
  if (!v.allFinite()) throw NumericError("non-finite activation");
  const double lo = v.minCoeff(), hi = v.maxCoeff();
  a.sum = v.cast<double>().sum();
  a.center = (hi + lo) / 2;
  if (hi == lo) return a;
  a.step = (hi - lo) / 65534.0;
  const Eigen::ArrayXi codes = ((v.cast<double>() - a.center) / a.step).rint().min(32767.0).max(-32767.0).cast<int>();
  for (std::size_t i = 0; i < x.size(); ++i) {
    a.high[i] = static_cast<std::int16_t>(codes[static_cast<Eigen::Index>(i)] >> 8);
    a.low[i] = static_cast<std::int16_t>(codes[static_cast<Eigen::Index>(i)] & 255);
  }
  return a;
}

std::int64_t IntegerDot(const QuantizedMatrix& q, std::size_t j, const QuantizedActivation& a) {
  if (a.size != q.rows()) throw Error("quantized dot: dimension mismatch");
  return Dot1(q.Column(j), a, q.stride());
}

void QuantizedMatVec(const QuantizedMatrix& q, const QuantizedActivation& a, std::span<float> y) {
  if (a.size != q.rows() || y.size() != q.cols()) throw Error("quantized matvec: dimension mismatch");
  auto finish = [&](std::size_t j, std::int64_t dot) {
    y[j] = static_cast<float>(q.scale(j) * (a.step * static_cast<double>(dot) +
                                            a.center * static_cast<double>(q.ColumnSum(j))) +
                              q.shift(j) * a.sum);
  };
  std::size_t j = 0;
#if NLMR_KERNEL_AVX512
  std::vector<std::int64_t> dots(q.cols());
  PanelDots(q, a, dots.data());
  for (; j < q.cols(); ++j) finish(j, dots[j]);
#endif
  for (; j + 4 <= q.cols(); j += 4) {
    const std::int16_t* cols[4] = {q.Column(j), q.Column(j + 1), q.Column(j + 2), q.Column(j + 3)};
    std::int64_t dots[4];
    Dot4(cols, a, q.stride(), dots);
    for (int c = 0; c < 4; ++c) finish(j + static_cast<std::size_t>(c), dots[c]);
  }
  for (; j < q.cols(); ++j) finish(j, Dot1(q.Column(j), a, q.stride()));
}

void QuantizedMatVec(const QuantizedMatrix& q, std::span<const float> x, std::span<float> y) {
  QuantizedMatVec(q, QuantizeActivation(x), y);
}

std::int64_t WorstCaseBlockSum() { return kProductsPerLane * 255 * 32768; }

const char* KernelName() {
#if NLMR_KERNEL_AVX512
  return "avx512-vnni";
#elif NLMR_KERNEL_AVX2
  return "avx2";
#else
  return "scalar";
#endif
}

}  // namespace nlmr::quant
