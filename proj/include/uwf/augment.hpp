#pragma once

// Training-time perturbations: flips, domain augmentations (channel scale,
// Gaussian blur, additive noise), general augmentations (affine +
// RandomErasing), and multi-label mixup. Pixel values are not clipped after
// augmentation; batchnorm absorbs range drift.

#include <cmath>
#include <vector>

#include "uwf/common.hpp"
#include "uwf/data.hpp"

namespace uwf {

struct AugmentConfig {
  double p_hflip = 0.3;
  double p_vflip = 0.1;

  double p_domain = 0.9;
  double channel_scale_lo = 0.75, channel_scale_hi = 1.25;
  int blur_kernel = 7;
  double blur_sigma_lo = 0.1, blur_sigma_hi = 1.0;
  double noise_sd = 0.1;

  double p_general = 0.9;
  double p_erase = 0.5;
  double erase_area_lo = 0.05, erase_area_hi = 0.3;
  double erase_aspect_lo = 0.3, erase_aspect_hi = 3.3;
  double affine_rot_deg = 15.0;
  double affine_scale_lo = 0.8, affine_scale_hi = 1.2;
  double affine_shear_deg = 10.0;

  double mixup_alpha = 0.6, mixup_beta = 0.6;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_hflip) || !prob(p_vflip) || !prob(p_domain) ||
        !prob(p_general) || !prob(p_erase))
      throw ConfigError("augment probability outside [0,1]");
    if (channel_scale_lo > channel_scale_hi || blur_sigma_lo > blur_sigma_hi ||
        erase_area_lo > erase_area_hi || erase_aspect_lo > erase_aspect_hi ||
        affine_scale_lo > affine_scale_hi)
      throw ConfigError("augment interval bounds out of order");
  }
};

// ---------------------------------------------------------------------------
// Individual transforms (exposed for direct testing / forced application)
// ---------------------------------------------------------------------------

inline void channel_scale(Image& img, int channel, double factor) {
  float* p = img.pix.data() + static_cast<std::size_t>(channel) * img.h * img.w;
  for (int i = 0; i < img.h * img.w; ++i) p[i] *= static_cast<float>(factor);
}

inline void gaussian_blur(Image& img, int ksize, double sigma) {
  const int r = ksize / 2;
  std::vector<double> kern(ksize);
  double ksum = 0.0;
  for (int k = 0; k < ksize; ++k) {
    double d = k - r;
    kern[k] = std::exp(-d * d / (2.0 * sigma * sigma));
    ksum += kern[k];
  }
  for (auto& v : kern) v /= ksum;
  // separable: horizontal then vertical, clamped borders
  std::vector<float> tmp(img.pix.size());
  for (int c = 0; c < img.c; ++c) {
    for (int i = 0; i < img.h; ++i)
      for (int j = 0; j < img.w; ++j) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          int jj = std::min(img.w - 1, std::max(0, j + k));
          acc += kern[k + r] * img.at(c, i, jj);
        }
        tmp[(static_cast<std::size_t>(c) * img.h + i) * img.w + j] =
            static_cast<float>(acc);
      }
    for (int i = 0; i < img.h; ++i)
      for (int j = 0; j < img.w; ++j) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          int ii = std::min(img.h - 1, std::max(0, i + k));
          acc += kern[k + r] *
                 tmp[(static_cast<std::size_t>(c) * img.h + ii) * img.w + j];
        }
        img.at(c, i, j) = static_cast<float>(acc);
      }
  }
}

inline void add_pixel_noise(Image& img, Rng& rng, double sd) {
  for (auto& v : img.pix) v += static_cast<float>(rng.normal(0.0, sd));
}

// Rotation * shear * scale about the image center, bilinear resampling onto
// the original grid with zero fill outside the source.
inline void affine_transform(Image& img, double rot_deg, double scale,
                             double shear_deg) {
  const double th = rot_deg * M_PI / 180.0, sh = shear_deg * M_PI / 180.0;
  // forward matrix M = R(th) * Shear(sh) * S(scale)
  // R = [c -s; s c], Shear = [1 tan; 0 1], S = scale * I
  const double c = std::cos(th), s = std::sin(th), t = std::tan(sh);
  const double f00 = scale * c, f01 = scale * (c * t - s);
  const double f10 = scale * s, f11 = scale * (s * t + c);
  const double det = f00 * f11 - f01 * f10;
  const double i00 = f11 / det, i01 = -f01 / det;
  const double i10 = -f10 / det, i11 = f00 / det;
  const double cx = 0.5 * img.w, cy = 0.5 * img.h;

  Image out(img.h, img.w, img.c);
  for (int i = 0; i < img.h; ++i)
    for (int j = 0; j < img.w; ++j) {
      double dx = j + 0.5 - cx, dy = i + 0.5 - cy;
      double sx = i00 * dx + i01 * dy + cx - 0.5;
      double sy = i10 * dx + i11 * dy + cy - 0.5;
      int x0 = static_cast<int>(std::floor(sx)),
          y0 = static_cast<int>(std::floor(sy));
      double wx = sx - x0, wy = sy - y0;
      for (int ch = 0; ch < img.c; ++ch) {
        auto pick = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) return 0.0;
          return img.at(ch, yy, xx);
        };
        double v = (1 - wy) * ((1 - wx) * pick(y0, x0) + wx * pick(y0, x0 + 1)) +
                   wy * ((1 - wx) * pick(y0 + 1, x0) + wx * pick(y0 + 1, x0 + 1));
        out.at(ch, i, j) = static_cast<float>(v);
      }
    }
  img = std::move(out);
}

// Replaces a random rectangle with standard-normal noise. Resamples the
// rectangle up to 10 times if it does not fit, then skips.
inline void random_erase(Image& img, Rng& rng, double area_lo, double area_hi,
                         double aspect_lo, double aspect_hi) {
  const double total = static_cast<double>(img.h) * img.w;
  for (int attempt = 0; attempt < 10; ++attempt) {
    double area = rng.uniform(area_lo, area_hi) * total;
    double aspect = rng.uniform(aspect_lo, aspect_hi);  // height / width
    int rh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    int rw = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    if (rh < 1 || rw < 1 || rh > img.h || rw > img.w) continue;
    int i0 = static_cast<int>(rng.below(img.h - rh + 1));
    int j0 = static_cast<int>(rng.below(img.w - rw + 1));
    for (int c = 0; c < img.c; ++c)
      for (int i = i0; i < i0 + rh; ++i)
        for (int j = j0; j < j0 + rw; ++j)
          img.at(c, i, j) = static_cast<float>(rng.normal());
    return;
  }
}

// ---------------------------------------------------------------------------
// Full per-image pipeline. Labels and metadata are never touched.
// ---------------------------------------------------------------------------

inline void apply_augmentations(Image& img, const AugmentConfig& cfg,
                                Rng& rng) {
  if (rng.bernoulli(cfg.p_hflip)) img = hflip(img);
  if (rng.bernoulli(cfg.p_vflip)) img = vflip(img);

  if (rng.bernoulli(cfg.p_domain)) {
    for (int c = 0; c < img.c; ++c)
      channel_scale(img, c,
                    rng.uniform(cfg.channel_scale_lo, cfg.channel_scale_hi));
    gaussian_blur(img, cfg.blur_kernel,
                  rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi));
    add_pixel_noise(img, rng, cfg.noise_sd);
  }

  if (rng.bernoulli(cfg.p_general)) {
    affine_transform(img, rng.uniform(-cfg.affine_rot_deg, cfg.affine_rot_deg),
                     rng.uniform(cfg.affine_scale_lo, cfg.affine_scale_hi),
                     rng.uniform(-cfg.affine_shear_deg, cfg.affine_shear_deg));
    if (rng.bernoulli(cfg.p_erase))
      random_erase(img, rng, cfg.erase_area_lo, cfg.erase_area_hi,
                   cfg.erase_aspect_lo, cfg.erase_aspect_hi);
  }
}

// ---------------------------------------------------------------------------
// Mixup: pairs each input with the next element of a shuffled cyclic order
// and emits two blends per pair (either input leading, fresh lambda each).
// ---------------------------------------------------------------------------

struct MixupSample {
  Image image;
  LabelVector labels;
};

inline MixupSample blend(const MixupSample& a, const MixupSample& b,
                         double lam) {
  if (a.image.pix.size() != b.image.pix.size())
    throw ShapeError("mixup: image shape mismatch");
  MixupSample out;
  out.image = Image(a.image.h, a.image.w, a.image.c);
  for (std::size_t i = 0; i < out.image.pix.size(); ++i)
    out.image.pix[i] = static_cast<float>(lam * a.image.pix[i] +
                                          (1.0 - lam) * b.image.pix[i]);
  for (int l = 0; l < kNumLabels; ++l)
    out.labels[l] = lam * a.labels[l] + (1.0 - lam) * b.labels[l];
  return out;
}

inline std::vector<MixupSample> mixup_batch(const std::vector<MixupSample>& in,
                                            const AugmentConfig& cfg,
                                            Rng& rng) {
  if (in.size() < 2) return in;  // passthrough
  std::vector<int> order(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  std::vector<MixupSample> out;
  out.reserve(2 * in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto& a = in[order[i]];
    const auto& b = in[order[(i + 1) % in.size()]];
    out.push_back(blend(a, b, rng.beta(cfg.mixup_alpha, cfg.mixup_beta)));
    out.push_back(blend(b, a, rng.beta(cfg.mixup_alpha, cfg.mixup_beta)));
  }
  return out;
}

// Asymmetric label smoothing: 0 -> 0.05, 1 -> 0.99, linear in between so
// mixup-blended targets stay consistent.
inline double smooth_label(double y) { return 0.05 + 0.94 * y; }

}  // namespace uwf
