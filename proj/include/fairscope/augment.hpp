#pragma once

#include <filesystem>
#include <vector>

#include "fairscope/rng.hpp"
#include "fairscope/types.hpp"

namespace fairscope {

// Layout of the low-frequency mask over the unshifted spectrum.
//
// `literal`: retain the corner-anchored block 0 <= u < floor(alpha*H),
// 0 <= v < floor(alpha*W). This block is not conjugate-symmetric, so on real
// images the real-part projection halves any retained bin whose mirror falls
// outside the block; low_pass is then not an exact spectral projection.
//
// `centered` (default): retain the floor(alpha*H) rows and floor(alpha*W)
// columns of smallest centered frequency, truncated to a conjugate-symmetric
// set. On real images this is an exact idempotent projection: the spectrum of
// low_pass(x) is the masked spectrum of x, bin for bin.
enum class MaskLayout { literal, centered };

struct FreqMaskConfig {
  double alpha = 0.75;
  MaskLayout layout = MaskLayout::centered;
};

// Per-axis retain flags for length-n transforms.
std::vector<bool> axis_mask(Index n, double alpha, MaskLayout layout);

// H x W mask, 1 = retain, 0 = zero. Separable product of the axis masks.
ArrXX low_pass_mask(Index h, Index w, const FreqMaskConfig& cfg);

// Zeroes the spectrum outside the mask.
Spectrum apply_low_pass_mask(const Spectrum& s, const FreqMaskConfig& cfg);

struct FreqDecomposition {
  Tensor2D low;   // real part of the inverse of the masked spectrum
  Tensor2D high;  // x - low, exact complement
};
FreqDecomposition decompose(const Tensor2D& x, const FreqMaskConfig& cfg);
Tensor2D low_pass(const Tensor2D& x, const FreqMaskConfig& cfg);
Tensor2D high_pass(const Tensor2D& x, const FreqMaskConfig& cfg);

// Square patch to be replaced: mask is 1 (keep x_i) outside, 0 inside.
struct CutPatch {
  Index top = 0;
  Index left = 0;
  Index side = 0;
};

// lambda ~ U(0.1, 0.5), side = round(H*sqrt(lambda)) clamped to fit, position
// uniform over placements that keep the patch inside the image. Draw order:
// lambda, top, left.
CutPatch sample_patch(Index h, Index w, Rng& rng);

// Frequency-aware mix: x' = Mcut (.) LF(x_i) + HF(x_i) + (1-Mcut) (.) LF(x_j).
// Pixels outside the patch are copied from x_i bit for bit. The pair is
// same-class by construction upstream, so the label stays y_i.
Tensor2D freq_cutmix(const Tensor2D& xi, const Tensor2D& xj,
                     const FreqMaskConfig& cfg, Rng& rng);
Tensor2D freq_cutmix_with_patch(const Tensor2D& xi, const Tensor2D& xj,
                                const FreqMaskConfig& cfg, const CutPatch& patch);

// x' = lambda*x_i + (1-lambda)*x_j, lambda ~ Beta(1,1) = U(0,1).
Tensor2D mixup(const Tensor2D& xi, const Tensor2D& xj, Rng& rng);

// Plain pixel-space CutMix with the same patch sampler as freq_cutmix.
Tensor2D cutmix(const Tensor2D& xi, const Tensor2D& xj, Rng& rng);
Tensor2D cutmix_with_patch(const Tensor2D& xi, const Tensor2D& xj,
                           const CutPatch& patch);

// Axis-aligned rectangle of spectrum bins, zeroed by freq_mask.
struct SpectrumRect {
  Index top = 0;
  Index left = 0;
  Index height = 0;
  Index width = 0;
};

// Zeroes a uniformly placed rectangle covering at most 25% of the bins
// (height <= H/2, width <= W/2) on the unshifted spectrum.
Tensor2D freq_mask(const Tensor2D& x, Rng& rng);
Tensor2D freq_mask_rect(const Tensor2D& x, const SpectrumRect& rect);

// 8-bit binary PGM, min-max normalized per image. Header is exactly
// "P5\n<W> <H>\n255\n" followed by W*H bytes. A zero-range image writes zeros.
void write_pgm(const std::filesystem::path& path, const Tensor2D& img);

// Human-inspection dump: x_i, x_j, LF(x_i), HF(x_i), x' as PGM files.
void write_augment_preview(const std::filesystem::path& dir, const Tensor2D& xi,
                           const Tensor2D& xj, const FreqMaskConfig& cfg,
                           Rng& rng);

}  // namespace fairscope
