#include "fairscope/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "fairscope/errors.hpp"

namespace fairscope {

namespace {

bool is_pow2(Index n) { return n >= 1 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. sign = -1 forward, +1 inverse
// (unnormalized).
void fft_pow2(std::complex<double>* data, Index n, int sign) {
  for (Index i = 1, j = 0; i < n; ++i) {
    Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (Index len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen = std::polar(1.0, ang);
    for (Index i = 0; i < n; i += len) {
      std::complex<double> w = 1.0;
      for (Index k = 0; k < len / 2; ++k) {
        const std::complex<double> a = data[i + k];
        const std::complex<double> b = data[i + k + len / 2] * w;
        data[i + k] = a + b;
        data[i + k + len / 2] = a - b;
        w *= wlen;
      }
    }
  }
}

// Direct O(n^2) DFT for non-power-of-two lengths; extents here are tiny.
void dft_direct(std::complex<double>* data, Index n, int sign) {
  std::vector<std::complex<double>> twiddle(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k)
    twiddle[static_cast<std::size_t>(k)] =
        std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                            static_cast<double>(n));
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (Index j = 0; j < n; ++j)
      acc += data[j] * twiddle[static_cast<std::size_t>((j * k) % n)];
    out[static_cast<std::size_t>(k)] = acc;
  }
  std::copy(out.begin(), out.end(), data);
}

void transform_1d(std::complex<double>* data, Index n, int sign) {
  if (is_pow2(n))
    fft_pow2(data, n, sign);
  else
    dft_direct(data, n, sign);
}

// Separable 2D transform over an Eigen complex matrix, in place.
void transform_2d(CMatX& m, int sign) {
  const Index h = m.rows(), w = m.cols();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(std::max(h, w)));
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) buf[static_cast<std::size_t>(c)] = m(r, c);
    transform_1d(buf.data(), w, sign);
    for (Index c = 0; c < w; ++c) m(r, c) = buf[static_cast<std::size_t>(c)];
  }
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) buf[static_cast<std::size_t>(r)] = m(r, c);
    transform_1d(buf.data(), h, sign);
    for (Index r = 0; r < h; ++r) m(r, c) = buf[static_cast<std::size_t>(r)];
  }
}

}  // namespace

Spectrum fft2(const Tensor2D& x) {
  if (x.rows() < 2 || x.cols() < 2)
    throw InvalidInput("fft2: extent must be at least 2x2");
  CMatX m = x.cast<std::complex<double>>();
  transform_2d(m, -1);
  return m;
}

InverseImage ifft2_with_residue(const Spectrum& s) {
  if (s.rows() < 2 || s.cols() < 2)
    throw InvalidInput("ifft2: extent must be at least 2x2");
  CMatX m = s;
  transform_2d(m, +1);
  m /= static_cast<double>(s.rows() * s.cols());
  return {m.real(), m.imag().cwiseAbs().maxCoeff()};
}

Tensor2D ifft2(const Spectrum& s) { return ifft2_with_residue(s).image; }

PcaModel pca_fit(const MatX& rows, Index d_prime) {
  const Index n = rows.rows(), d = rows.cols();
  if (n < 2) throw InvalidInput("pca_fit: need at least 2 samples");
  if (d_prime < 1 || d_prime > std::min(n, d))
    throw InvalidInput("pca_fit: d' must be in [1, min(samples, dim)]");

  PcaModel model;
  model.mean = rows.colwise().mean();
  const MatX centered = rows.rowwise() - model.mean.transpose();
  const MatX cov = centered.adjoint() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<MatX> es(cov);
  if (es.info() != Eigen::Success)
    throw InvalidInput("pca_fit: eigendecomposition failed");

  // Eigen returns ascending order; take the top d' in descending order.
  model.basis.resize(d_prime, d);
  model.variances.resize(d_prime);
  for (Index i = 0; i < d_prime; ++i) {
    model.basis.row(i) = es.eigenvectors().col(d - 1 - i).transpose();
    model.variances(i) = std::max(0.0, es.eigenvalues()(d - 1 - i));
  }

  // Deterministic sign: largest-magnitude entry of each direction positive.
  for (Index i = 0; i < d_prime; ++i) {
    Index arg = 0;
    model.basis.row(i).cwiseAbs().maxCoeff(&arg);
    if (model.basis(i, arg) < 0.0) model.basis.row(i) = -model.basis.row(i);
  }

  const double top = es.eigenvalues().size() > 0
                         ? std::max(0.0, es.eigenvalues()(d - 1))
                         : 0.0;
  Index rank = 0;
  for (Index i = 0; i < d; ++i)
    if (es.eigenvalues()(i) > top * 1e-12 && es.eigenvalues()(i) > 0.0) ++rank;
  model.rank_deficient = rank < d_prime;
  return model;
}

VecX pca_transform(const PcaModel& m, const VecX& h) {
  if (h.size() != m.mean.size())
    throw InvalidInput("pca_transform: dimension mismatch");
  return m.basis * (h - m.mean);
}

MatX pca_transform_rows(const PcaModel& m, const MatX& rows) {
  if (rows.cols() != m.mean.size())
    throw InvalidInput("pca_transform: dimension mismatch");
  return (rows.rowwise() - m.mean.transpose()) * m.basis.transpose();
}

double cosine_similarity(const VecX& a, const VecX& b) {
  if (a.size() != b.size())
    throw InvalidInput("cosine_similarity: dimension mismatch");
  if (a.size() == 0) throw InvalidInput("cosine_similarity: empty vectors");
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return a.dot(b) / (na * nb);
}

double population_variance(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("population_variance: empty list");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(values.size());
}

}  // namespace fairscope
