#pragma once

#include <span>
#include <vector>

#include "fairscope/types.hpp"

namespace fairscope {

// Unshifted, unnormalized forward 2D DFT:
//   F(u,v) = sum_{r,c} x(r,c) * exp(-2*pi*i*(u*r/H + v*c/W)).
// Bin (0,0) is the DC term, equal to the sum of all pixels. Power-of-two
// extents take a radix-2 fast path; other extents fall back to the direct sum.
// Throws InvalidInput when H or W < 2.
Spectrum fft2(const Tensor2D& x);

// Real part of the (1/(H*W))-normalized inverse DFT.
Tensor2D ifft2(const Spectrum& s);

struct InverseImage {
  Tensor2D image;
  double max_imag;  // largest |imaginary| residue, diagnostic only
};
InverseImage ifft2_with_residue(const Spectrum& s);

struct PcaModel {
  VecX mean;       // input-dimension mean of the fitted rows
  MatX basis;      // d' x D, rows orthonormal, descending explained variance
  VecX variances;  // explained variance per retained direction, descending
  bool rank_deficient = false;  // requested d' exceeded the data rank
};

// Principal directions by eigendecomposition of the sample covariance.
// Sign convention: the largest-magnitude entry of each basis row is positive.
PcaModel pca_fit(const MatX& rows, Index d_prime);

// (h - mean) projected onto the basis; dimension d'.
VecX pca_transform(const PcaModel& m, const VecX& h);
MatX pca_transform_rows(const PcaModel& m, const MatX& rows);

// a.b / (|a||b|); 0 when either norm is below 1e-12 (a zero feature carries
// no direction). Throws InvalidInput on dimension mismatch.
double cosine_similarity(const VecX& a, const VecX& b);

// Mean squared deviation from the mean, divided by the count (population
// convention). Throws InvalidInput on an empty list.
double population_variance(std::span<const double> values);

}  // namespace fairscope
