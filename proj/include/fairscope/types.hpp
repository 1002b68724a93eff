#pragma once

#include <Eigen/Core>
#include <complex>

namespace fairscope {

using Index = Eigen::Index;

using VecX = Eigen::VectorXd;
using RowVecX = Eigen::RowVectorXd;
using MatX = Eigen::MatrixXd;
using ArrX = Eigen::ArrayXd;
using ArrXX = Eigen::ArrayXXd;
using CVecX = Eigen::VectorXcd;
using CMatX = Eigen::MatrixXcd;

// Image grid: rows index the vertical axis r (height H), cols the horizontal
// axis c (width W). Intensities are dimensionless, nominally in [0,1].
using Tensor2D = MatX;

// Unshifted 2D DFT grid: rows index the vertical frequency u, cols the
// horizontal frequency v. Same extent as the source image.
using Spectrum = CMatX;

}  // namespace fairscope
