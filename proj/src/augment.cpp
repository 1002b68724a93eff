#include "fairscope/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "fairscope/errors.hpp"
#include "fairscope/numerics.hpp"

namespace fairscope {

namespace {

void check_same_extent(const Tensor2D& a, const Tensor2D& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput(std::string(op) + ": extent mismatch");
}

}  // namespace

std::vector<bool> axis_mask(Index n, double alpha, MaskLayout layout) {
  std::vector<bool> keep(static_cast<std::size_t>(n), false);
  const Index count =
      std::clamp<Index>(static_cast<Index>(std::floor(alpha * static_cast<double>(n))), 0, n);
  if (layout == MaskLayout::literal) {
    for (Index i = 0; i < count; ++i) keep[static_cast<std::size_t>(i)] = true;
    return keep;
  }
  // Centered: add rows in order of |centered frequency|, as whole conjugate
  // pairs {k, n-k} (DC and Nyquist are self-paired), until the budget is hit.
  Index used = 0;
  if (count >= 1) {
    keep[0] = true;
    used = 1;
    for (Index k = 1; 2 * k <= n; ++k) {
      if (2 * k == n) {
        if (used + 1 <= count) {
          keep[static_cast<std::size_t>(k)] = true;
          ++used;
        }
        break;
      }
      if (used + 2 > count) break;
      keep[static_cast<std::size_t>(k)] = true;
      keep[static_cast<std::size_t>(n - k)] = true;
      used += 2;
    }
  }
  return keep;
}

ArrXX low_pass_mask(Index h, Index w, const FreqMaskConfig& cfg) {
  const auto mu = axis_mask(h, cfg.alpha, cfg.layout);
  const auto mv = axis_mask(w, cfg.alpha, cfg.layout);
  ArrXX mask(h, w);
  for (Index u = 0; u < h; ++u)
    for (Index v = 0; v < w; ++v)
      mask(u, v) = (mu[static_cast<std::size_t>(u)] && mv[static_cast<std::size_t>(v)]) ? 1.0 : 0.0;
  return mask;
}

Spectrum apply_low_pass_mask(const Spectrum& s, const FreqMaskConfig& cfg) {
  return s.array() * low_pass_mask(s.rows(), s.cols(), cfg).cast<std::complex<double>>();
}

FreqDecomposition decompose(const Tensor2D& x, const FreqMaskConfig& cfg) {
  const Spectrum masked = apply_low_pass_mask(fft2(x), cfg);
  Tensor2D low = ifft2(masked);
  Tensor2D high = x - low;
  return {std::move(low), std::move(high)};
}

Tensor2D low_pass(const Tensor2D& x, const FreqMaskConfig& cfg) {
  return ifft2(apply_low_pass_mask(fft2(x), cfg));
}

Tensor2D high_pass(const Tensor2D& x, const FreqMaskConfig& cfg) {
  return decompose(x, cfg).high;
}

CutPatch sample_patch(Index h, Index w, Rng& rng) {
  const double lambda = rng.uniform(0.1, 0.5);
  Index side = static_cast<Index>(
      std::llround(static_cast<double>(h) * std::sqrt(lambda)));
  side = std::clamp<Index>(side, 1, std::min(h, w));
  CutPatch patch;
  patch.side = side;
  patch.top = static_cast<Index>(rng.below(static_cast<std::uint64_t>(h - side + 1)));
  patch.left = static_cast<Index>(rng.below(static_cast<std::uint64_t>(w - side + 1)));
  return patch;
}

Tensor2D freq_cutmix_with_patch(const Tensor2D& xi, const Tensor2D& xj,
                                const FreqMaskConfig& cfg, const CutPatch& patch) {
  check_same_extent(xi, xj, "freq_cutmix");
  const Tensor2D lfi = low_pass(xi, cfg);
  const Tensor2D lfj = low_pass(xj, cfg);
  // Equivalent to Mcut(.)LF(xi) + HF(xi) + (1-Mcut)(.)LF(xj) with
  // HF = xi - LF(xi); written so kept pixels are xi bit for bit.
  Tensor2D out = xi;
  for (Index r = patch.top; r < patch.top + patch.side; ++r)
    for (Index c = patch.left; c < patch.left + patch.side; ++c)
      out(r, c) = xi(r, c) + (lfj(r, c) - lfi(r, c));
  return out;
}

Tensor2D freq_cutmix(const Tensor2D& xi, const Tensor2D& xj,
                     const FreqMaskConfig& cfg, Rng& rng) {
  check_same_extent(xi, xj, "freq_cutmix");
  return freq_cutmix_with_patch(xi, xj, cfg, sample_patch(xi.rows(), xi.cols(), rng));
}

Tensor2D mixup(const Tensor2D& xi, const Tensor2D& xj, Rng& rng) {
  check_same_extent(xi, xj, "mixup");
  const double lambda = rng.uniform01();
  return lambda * xi + (1.0 - lambda) * xj;
}

Tensor2D cutmix_with_patch(const Tensor2D& xi, const Tensor2D& xj,
                           const CutPatch& patch) {
  check_same_extent(xi, xj, "cutmix");
  Tensor2D out = xi;
  out.block(patch.top, patch.left, patch.side, patch.side) =
      xj.block(patch.top, patch.left, patch.side, patch.side);
  return out;
}

Tensor2D cutmix(const Tensor2D& xi, const Tensor2D& xj, Rng& rng) {
  check_same_extent(xi, xj, "cutmix");
  return cutmix_with_patch(xi, xj, sample_patch(xi.rows(), xi.cols(), rng));
}

Tensor2D freq_mask_rect(const Tensor2D& x, const SpectrumRect& rect) {
  Spectrum s = fft2(x);
  for (Index u = rect.top; u < rect.top + rect.height; ++u)
    for (Index v = rect.left; v < rect.left + rect.width; ++v)
      s(u, v) = 0.0;
  return ifft2(s);
}

Tensor2D freq_mask(const Tensor2D& x, Rng& rng) {
  const Index h = x.rows(), w = x.cols();
  SpectrumRect rect;
  rect.height = static_cast<Index>(rng.below(static_cast<std::uint64_t>(h / 2 + 1)));
  rect.width = static_cast<Index>(rng.below(static_cast<std::uint64_t>(w / 2 + 1)));
  rect.top = static_cast<Index>(rng.below(static_cast<std::uint64_t>(h - rect.height + 1)));
  rect.left = static_cast<Index>(rng.below(static_cast<std::uint64_t>(w - rect.width + 1)));
  return freq_mask_rect(x, rect);
}

void write_pgm(const std::filesystem::path& path, const Tensor2D& img) {
  const Index h = img.rows(), w = img.cols();
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  const double range = hi - lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("write_pgm: cannot open " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h * w));
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const double v = range > 0.0 ? (img(r, c) - lo) / range : 0.0;
      bytes[static_cast<std::size_t>(r * w + c)] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void write_augment_preview(const std::filesystem::path& dir, const Tensor2D& xi,
                           const Tensor2D& xj, const FreqMaskConfig& cfg,
                           Rng& rng) {
  std::filesystem::create_directories(dir);
  const FreqDecomposition parts = decompose(xi, cfg);
  const Tensor2D mixed = freq_cutmix(xi, xj, cfg, rng);
  write_pgm(dir / "xi.pgm", xi);
  write_pgm(dir / "xj.pgm", xj);
  write_pgm(dir / "lf_xi.pgm", parts.low);
  write_pgm(dir / "hf_xi.pgm", parts.high);
  write_pgm(dir / "augmented.pgm", mixed);
}

}  // namespace fairscope
