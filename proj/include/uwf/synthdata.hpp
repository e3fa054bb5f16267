#pragma once

// Synthetic patient/eye/image population with per-disease spatially
// localized lesion signatures. Lesion geometry is the ground truth used to
// verify the attention-map pipeline, so regions are fixed in left-eye
// normalized coordinates and mirrored for right eyes.

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "uwf/common.hpp"
#include "uwf/data.hpp"

namespace uwf {

struct PrevalenceTable {
  double healthy = 0.432;
  // disease order: DR, Gla, RD, RVO, AMD, RP, MH (label order minus the
  // leading "diseased")
  std::array<double, kNumDiseases> disease = {0.127, 0.175, 0.078, 0.081,
                                              0.053, 0.020, 0.033};

  void validate() const {
    double sum = healthy;
    for (double p : disease) {
      if (p < 0.0) throw ConfigError("negative prevalence");
      sum += p;
    }
    if (healthy < 0.0) throw ConfigError("negative prevalence");
    if (sum > 1.0 + 1e-9)
      throw ConfigError("prevalences sum to more than 1");
  }
};

struct GenConfig {
  int height = 96;
  int width = 128;
  int n_patients = 500;
  std::uint64_t seed = 0;
  PrevalenceTable prevalence;
  double comorbidity_prob = 0.1;
  double age_mean = 66.0;
  double age_sd = 13.0;
};

enum class LesionShape { Disc, Wedge, Ring };
enum class LesionTexture { Dots, Bump, Ripple, Streaks, Blobs, Speckle, Rings };

// All coordinates are left-eye normalized: cx along width, cy along height,
// radii/lengths as fractions of height.
struct LesionSpec {
  LesionShape shape;
  double cx, cy;
  double r1, r2;            // disc: r1; ring: inner r1, outer r2
  double dir_x, dir_y;      // wedge direction (unit, pixel axes)
  double half_angle;        // wedge, radians
  double length;            // wedge, fraction of height
  LesionTexture texture;
};

// Canonical regions, one per disease. Each covers <= 15% of the image and
// all of them reach into the central posterior-pole analogue so the
// PEPPR-style "most important 10%" retains some signal for every label.
inline const std::array<LesionSpec, kNumDiseases>& lesion_table() {
  static const std::array<LesionSpec, kNumDiseases> table = {{
      // DR: dotted disc inferior to the optic disc analogue
      {LesionShape::Disc, 0.47, 0.58, 0.24, 0, 0, 0, 0, 0,
       LesionTexture::Dots},
      // Gla: smooth bump at the optic disc analogue, nasal-superior of the
      // DR dotted disc so the two only partially overlap
      {LesionShape::Disc, 0.34, 0.42, 0.24, 0, 0, 0, 0, 0,
       LesionTexture::Bump},
      // RD: bullous detachment dome with rippled folds at the posterior pole
      {LesionShape::Disc, 0.45, 0.57, 0.23, 0, 0, 0, 0, 0,
       LesionTexture::Ripple},
      // RVO: wedge fanning upward from below the optic disc analogue,
      // kept clear of the upper lid/lash zone
      {LesionShape::Wedge, 0.40, 0.70, 0, 0, 0.0, -1.0, 34.0 * M_PI / 180.0,
       0.56, LesionTexture::Streaks},
      // AMD: blobby disc at the macula analogue
      {LesionShape::Disc, 0.57, 0.56, 0.24, 0, 0, 0, 0, 0,
       LesionTexture::Blobs},
      // RP: peripheral speckled ring
      {LesionShape::Ring, 0.46, 0.50, 0.10, 0.27, 0, 0, 0, 0,
       LesionTexture::Speckle},
      // MH: concentric-ring disc at the macula analogue, overlapping the
      // AMD disc as both sit at the posterior pole
      {LesionShape::Disc, 0.52, 0.52, 0.23, 0, 0, 0, 0, 0,
       LesionTexture::Rings},
  }};
  return table;
}

namespace detail {

// Stable per-pixel hash in [0,1); shared by all images of one eye so that
// lesion micro-texture is consistent across repeat imaging.
inline double pixel_hash(std::uint64_t seed, int i, int j) {
  return double(splitmix64(seed ^ (std::uint64_t(i) << 32 ^
                                   std::uint64_t(std::uint32_t(j)))) >>
                11) *
         0x1.0p-53;
}

}  // namespace detail

class SynthGenerator {
 public:
  explicit SynthGenerator(GenConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.prevalence.validate();
    if (cfg_.n_patients < 1) throw ConfigError("n_patients must be >= 1");
  }

  // Canonical boolean mask for one disease label (1..7) and eye.
  static std::vector<std::uint8_t> lesion_region(int label, Eye eye, int h,
                                                 int w) {
    if (label <= 0 || label >= kNumLabels)
      throw ContractError(
          "lesion_region is defined per disease, not for 'diseased'");
    const LesionSpec& s = lesion_table()[label - 1];
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 0);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double x = (j + 0.5) / w;
        if (eye == Eye::Right) x = 1.0 - x;
        double y = (i + 0.5) / h;
        if (inside(s, x, y, h, w, 0.0, 0.0))
          mask[static_cast<std::size_t>(i) * w + j] = 1;
      }
    return mask;
  }

  Dataset generate() const {
    Dataset ds;
    for (int p = 0; p < cfg_.n_patients; ++p) add_patient(ds, p);
    ds.index_patients();
    return ds;
  }

  const GenConfig& config() const { return cfg_; }

 private:
  static bool inside(const LesionSpec& s, double x, double y, int h, int w,
                     double jx, double jy) {
    const double cxp = (s.cx + jx) * w, cyp = (s.cy + jy) * h;
    const double xp = x * w, yp = y * h;
    const double dx = xp - cxp, dy = yp - cyp;
    const double dist = std::sqrt(dx * dx + dy * dy);
    switch (s.shape) {
      case LesionShape::Disc:
        return dist <= s.r1 * h;
      case LesionShape::Ring:
        return dist >= s.r1 * h && dist <= s.r2 * h;
      case LesionShape::Wedge: {
        if (dist > s.length * h || dist <= 1e-9) return dist <= 1e-9;
        double cosang = (dx * s.dir_x + dy * s.dir_y) / dist;
        return cosang >= std::cos(s.half_angle);
      }
    }
    return false;
  }

  // Additive lesion texture per channel, in canonical pixel coordinates.
  static void texture_value(const LesionSpec& s, double xp, double yp,
                            double dist_px, double rad_px,
                            std::uint64_t eye_hash_seed, double out[2]) {
    const int xi = static_cast<int>(xp), yi = static_cast<int>(yp);
    auto hash = [&](int scale) {
      return detail::pixel_hash(eye_hash_seed, yi / scale, xi / scale);
    };
    out[0] = out[1] = 0.0;
    switch (s.texture) {
      case LesionTexture::Dots:
        out[0] = 0.12 + (hash(2) < 0.42 ? 0.60 : 0.0);
        out[1] = 0.05;
        break;
      case LesionTexture::Bump: {
        // smooth dome with coarse mottling so the signature has local
        // structure, not just a low-frequency brightness shift
        double f = rad_px > 0 ? std::max(0.0, 1.0 - dist_px / rad_px) : 0.0;
        bool cell = hash(4) < 0.38;
        out[0] = 0.10 + 0.10 * f + (cell ? 0.34 : 0.0);
        out[1] = 0.08 + 0.06 * f + (cell ? 0.20 : 0.0);
        break;
      }
      case LesionTexture::Ripple:
        out[1] = 0.18 + (std::sin(2.0 * M_PI * xp / 9.0) > 0.0 ? 0.66 : 0.0);
        out[0] = 0.06;
        break;
      case LesionTexture::Streaks:
        // horizontal bands, and the only periodic channel-0 texture, so the
        // orientation x channel signature is unique among the seven lesions
        out[0] = 0.16 + (std::sin(2.0 * M_PI * yp / 11.0) > 0.0 ? 0.68 : 0.0);
        out[1] = 0.05;
        break;
      case LesionTexture::Blobs: {
        // channel-1-dominant mid-scale blobs: the only isotropic mid-scale
        // channel-1 signature, keeping it separable from the channel-0
        // dot/cell family
        bool blob = hash(3) < 0.50;
        out[0] = 0.10 + (blob ? 0.14 : 0.0);
        out[1] = 0.14 + (blob ? 0.50 : 0.0);
        break;
      }
      case LesionTexture::Speckle:
        out[1] = 0.16 + (hash(2) < 0.55 ? 0.58 : 0.0);
        out[0] = 0.04;
        break;
      case LesionTexture::Rings: {
        double v =
            0.12 + (std::cos(2.0 * M_PI * dist_px / 5.5) > 0.0 ? 0.52 : 0.0);
        out[0] = out[1] = v;
        break;
      }
    }
  }

  struct EyeGeometry {
    std::array<double, kNumDiseases> jx{}, jy{};  // center jitter, normalized
    std::array<double, kNumDiseases> amp{};       // amplitude scale
    std::uint64_t hash_seed = 0;                  // micro-texture stream
  };

  void add_patient(Dataset& ds, int pidx) const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "P%05d", pidx);
    const std::string pid(buf);
    Rng rng(mix_seed(cfg_.seed, static_cast<std::uint64_t>(pidx)));

    // stratum draw; leftover probability mass falls to healthy
    std::vector<int> diseases;
    double u = rng.uniform();
    double acc = 0.0;
    for (int d = 0; d < kNumDiseases; ++d) {
      acc += cfg_.prevalence.disease[d];
      if (u < acc) {
        diseases.push_back(d);
        break;
      }
    }
    if (!diseases.empty() && rng.bernoulli(cfg_.comorbidity_prob)) {
      int second = static_cast<int>(rng.below(kNumDiseases - 1));
      if (second >= diseases[0]) ++second;
      diseases.push_back(second);
    }

    double age = std::clamp(rng.normal(cfg_.age_mean, cfg_.age_sd), 18.0, 95.0);
    Sex sex = rng.bernoulli(0.5) ? Sex::Female : Sex::Male;

    // repeat imaging is common: 1-4 images per eye, most patients with
    // several views
    double uv = rng.uniform();
    int n_images = uv < 0.05 ? 1
                   : uv < 0.15 ? 2
                   : uv < 0.30 ? 3
                   : uv < 0.55 ? 4
                   : uv < 0.78 ? 5
                   : uv < 0.92 ? 6
                   : uv < 0.98 ? 7
                               : 8;
    Eye primary = rng.bernoulli(0.5) ? Eye::Left : Eye::Right;
    bool two_eyes = n_images >= 2 && rng.bernoulli(0.7);
    if (!two_eyes && n_images > 4) n_images = 4;

    std::array<EyeGeometry, 2> geom;  // [left, right]
    for (int e = 0; e < 2; ++e) {
      Rng erng(mix_seed(mix_seed(cfg_.seed, fnv1a64(pid)),
                        0x5eedull + static_cast<std::uint64_t>(e)));
      geom[e].hash_seed = erng.next_u64();
      for (int d = 0; d < kNumDiseases; ++d) {
        geom[e].jx[d] = erng.normal(0.0, 0.012);
        geom[e].jy[d] = erng.normal(0.0, 0.012);
        geom[e].amp[d] = erng.uniform(0.9, 1.1);
      }
    }

    for (int k = 0; k < n_images; ++k) {
      Eye eye = two_eyes ? (k % 2 == 0 ? primary : other(primary)) : primary;
      ImageSample s;
      s.patient_id = pid;
      s.age = age;
      s.sex = sex;
      s.eye = eye;
      s.labels.fill(0.0);
      for (int d : diseases) s.labels[disease_to_label(d)] = 1.0;
      s.labels[0] = diseases.empty() ? 0.0 : 1.0;
      char ibuf[48];
      std::snprintf(ibuf, sizeof(ibuf), "images/%s_%c_%d.raw", pid.c_str(),
                    eye == Eye::Left ? 'L' : 'R', k);
      s.path = ibuf;

      Rng irng(mix_seed(mix_seed(cfg_.seed, fnv1a64(pid)),
                        static_cast<std::uint64_t>(k)));
      s.pixels = render(diseases, eye, geom[eye == Eye::Left ? 0 : 1], irng);
      ds.samples.push_back(std::move(s));
    }
  }

  static Eye other(Eye e) { return e == Eye::Left ? Eye::Right : Eye::Left; }

  Image render(const std::vector<int>& diseases, Eye eye,
               const EyeGeometry& geom, Rng& rng) const {
    const int h = cfg_.height, w = cfg_.width;
    Image img(h, w, 2);

    // smooth background: per-channel base + central vignette + a few
    // low-frequency bumps
    struct Bump {
      double cx, cy, amp, sigma;
    };
    std::array<Bump, 3> bumps;
    for (auto& b : bumps) {
      b.cx = rng.uniform(0.0, w);
      b.cy = rng.uniform(0.0, h);
      b.amp = rng.uniform(-0.05, 0.05);
      b.sigma = rng.uniform(15.0, 40.0);
    }
    const double vx = 0.5 * w, vy = 0.5 * h, vs = 0.5 * h;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double d2 = (j + 0.5 - vx) * (j + 0.5 - vx) +
                    (i + 0.5 - vy) * (i + 0.5 - vy);
        double vig = 0.15 * std::exp(-d2 / (2.0 * vs * vs));
        double lf = 0.0;
        for (const auto& b : bumps) {
          double bd2 = (j + 0.5 - b.cx) * (j + 0.5 - b.cx) +
                       (i + 0.5 - b.cy) * (i + 0.5 - b.cy);
          lf += b.amp * std::exp(-bd2 / (2.0 * b.sigma * b.sigma));
        }
        img.at(0, i, j) = static_cast<float>(0.30 + vig + lf +
                                             rng.uniform(0.0, 0.02));
        img.at(1, i, j) = static_cast<float>(0.22 + 0.8 * vig + lf +
                                             rng.uniform(0.0, 0.02));
      }

    // lesions
    double img_amp = rng.uniform(0.97, 1.03);
    for (int d : diseases) {
      const LesionSpec& spec = lesion_table()[d];
      const double amp = geom.amp[d] * img_amp;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          double x = (j + 0.5) / w;
          if (eye == Eye::Right) x = 1.0 - x;
          double y = (i + 0.5) / h;
          if (!inside(spec, x, y, h, w, geom.jx[d], geom.jy[d])) continue;
          double xp = x * w, yp = y * h;
          double cxp = (spec.cx + geom.jx[d]) * w,
                 cyp = (spec.cy + geom.jy[d]) * h;
          double dist = std::hypot(xp - cxp, yp - cyp);
          double tex[2];
          texture_value(spec, xp, yp, dist, spec.r1 * h, geom.hash_seed, tex);
          img.at(0, i, j) += static_cast<float>(amp * tex[0]);
          img.at(1, i, j) += static_cast<float>(amp * tex[1]);
        }
    }

    // distractors: reflection blobs and eyelash-like occluders, on every
    // image regardless of disease status
    int n_blobs = static_cast<int>(rng.below(6));
    for (int b = 0; b < n_blobs; ++b) {
      double bx = rng.uniform(0.0, w), by = rng.uniform(0.0, h);
      double sig = rng.uniform(2.0, 5.0), amp = rng.uniform(0.25, 0.6);
      double ch1_ratio = rng.uniform(0.15, 0.55);
      int r = static_cast<int>(3 * sig) + 1;
      for (int i = std::max(0, int(by) - r); i < std::min(h, int(by) + r); ++i)
        for (int j = std::max(0, int(bx) - r); j < std::min(w, int(bx) + r);
             ++j) {
          double d2 = (j + 0.5 - bx) * (j + 0.5 - bx) +
                      (i + 0.5 - by) * (i + 0.5 - by);
          double v = amp * std::exp(-d2 / (2.0 * sig * sig));
          img.at(0, i, j) += static_cast<float>(v);
          img.at(1, i, j) += static_cast<float>(ch1_ratio * v);
        }
    }
    // occasional small high-frequency glint: a speckled or striped patch in
    // channel 1 that mimics lesion micro-texture at much smaller extent
    if (rng.bernoulli(0.45)) {
      double gx = rng.uniform(8.0, w - 8.0), gy = rng.uniform(8.0, h - 8.0);
      double grad = rng.uniform(5.0, 8.0), gamp = rng.uniform(0.25, 0.4);
      int mode = static_cast<int>(rng.below(3));
      int ch = mode == 1 ? 1 : 0;
      int r = static_cast<int>(grad) + 1;
      for (int i = std::max(0, int(gy) - r); i < std::min(h, int(gy) + r); ++i)
        for (int j = std::max(0, int(gx) - r); j < std::min(w, int(gx) + r);
             ++j) {
          double d2 = (j + 0.5 - gx) * (j + 0.5 - gx) +
                      (i + 0.5 - gy) * (i + 0.5 - gy);
          if (d2 > grad * grad) continue;
          bool on = mode == 2 ? std::sin(2.0 * M_PI * j / 9.0) > 0.0
                              : std::sin(2.0 * M_PI * i / 7.0) > 0.0;
          if (on) img.at(ch, i, j) += static_cast<float>(gamp);
        }
    }
    if (rng.bernoulli(0.4)) {
      int n_lashes = 2 + static_cast<int>(rng.below(4));
      for (int l = 0; l < n_lashes; ++l) {
        bool top = rng.bernoulli(0.5);
        double x0 = rng.uniform(0.0, w);
        double slope = rng.uniform(-0.8, 0.8);
        double curve = rng.uniform(-0.02, 0.02);
        int len = 10 + static_cast<int>(rng.below(16));
        for (int t = 0; t < len && t < h; ++t) {
          int i = top ? t : h - 1 - t;
          int j = static_cast<int>(x0 + slope * t + curve * t * t);
          for (int dj = 0; dj <= 1; ++dj)
            if (j + dj >= 0 && j + dj < w) {
              img.at(0, i, j + dj) *= 0.6f;
              img.at(1, i, j + dj) *= 0.6f;
            }
        }
      }
    }

    for (auto& v : img.pix) v = std::min(1.0f, std::max(0.0f, v));
    return img;
  }

  GenConfig cfg_;
};

inline Dataset generate_population(const GenConfig& cfg) {
  return SynthGenerator(cfg).generate();
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                         const ArtifactMeta& meta) {
  std::filesystem::create_directories(dir / "images");
  Dataset copy = ds;
  copy.dir = dir;
  for (const auto& s : copy.samples) write_raw_image(dir / s.path, s.pixels);
  write_manifest(copy, meta);
}

// ---------------------------------------------------------------------------
// Distribution-shifted variant: crop-and-rescale, aspect distortion, and a
// watermark glyph with probability 0.5. Labels and metadata carry over.
// ---------------------------------------------------------------------------

struct ShiftConfig {
  double crop_min = 0.85;       // minimum retained scale for the random crop
  double aspect_jitter = 0.15;  // width multiplier range +-
  double watermark_prob = 0.5;
};

inline Dataset generate_shifted(std::uint64_t seed, const Dataset& base,
                                const ShiftConfig& cfg = {}) {
  Dataset out;
  out.dir = base.dir;
  for (std::size_t idx = 0; idx < base.samples.size(); ++idx) {
    const ImageSample& src = base.samples[idx];
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(idx)));
    const Image& im = src.pixels;

    double s = rng.uniform(cfg.crop_min, 1.0);
    int ch_ = std::max(1, static_cast<int>(std::lround(im.h * s)));
    int cw_ = std::max(1, static_cast<int>(std::lround(im.w * s)));
    int oy = static_cast<int>(rng.below(im.h - ch_ + 1));
    int ox = static_cast<int>(rng.below(im.w - cw_ + 1));
    Image crop(ch_, cw_, im.c);
    for (int c = 0; c < im.c; ++c)
      for (int i = 0; i < ch_; ++i)
        for (int j = 0; j < cw_; ++j)
          crop.at(c, i, j) = im.at(c, oy + i, ox + j);

    double aspect =
        rng.uniform(1.0 - cfg.aspect_jitter, 1.0 + cfg.aspect_jitter);
    int nw = std::max(1, static_cast<int>(std::lround(im.w * aspect)));
    Image shifted = bilinear_resize(crop, im.h, nw);

    if (rng.bernoulli(cfg.watermark_prob)) {
      int gh = 12, gw = 28;
      int corner = static_cast<int>(rng.below(4));
      int i0 = (corner / 2 == 0) ? 4 : shifted.h - 4 - gh;
      int j0 = (corner % 2 == 0) ? 4 : shifted.w - 4 - gw;
      for (int i = 0; i < gh && i0 + i < shifted.h; ++i)
        for (int j = 0; j < gw && j0 + j < shifted.w; ++j) {
          bool grid = (i % 4 == 0) || (j % 4 == 0);
          float v = grid ? 0.25f : 0.95f;
          for (int c = 0; c < shifted.c; ++c)
            shifted.at(c, std::max(0, i0 + i), std::max(0, j0 + j)) = v;
        }
    }

    ImageSample dst = src;
    dst.pixels = std::move(shifted);
    dst.path = "images/shifted_" +
               std::filesystem::path(src.path).filename().string();
    out.samples.push_back(std::move(dst));
  }
  out.index_patients();
  return out;
}

}  // namespace uwf
