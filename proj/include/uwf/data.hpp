#pragma once

// Image samples, the raw on-disk image format and the dataset manifest.
//
// Raw image file: 16-byte header (magic "UWF0", u32 H, W, C little-endian)
// followed by C*H*W little-endian float32 values, channel-major.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwf/common.hpp"

namespace uwf {

enum class Eye { Left, Right };
enum class Sex { Female, Male };

inline std::string to_string(Eye e) { return e == Eye::Left ? "left" : "right"; }
inline std::string to_string(Sex s) {
  return s == Sex::Female ? "female" : "male";
}
inline Eye eye_from_string(const std::string& s) {
  if (s == "left") return Eye::Left;
  if (s == "right") return Eye::Right;
  throw FormatError("unknown eye: " + s);
}
inline Sex sex_from_string(const std::string& s) {
  if (s == "female") return Sex::Female;
  if (s == "male") return Sex::Male;
  throw FormatError("unknown sex: " + s);
}

// Channel-major pixel container.
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<float> pix;  // c*h*w

  Image() = default;
  Image(int h_, int w_, int c_)
      : h(h_), w(w_), c(c_),
        pix(static_cast<std::size_t>(c_) * h_ * w_, 0.0f) {}

  float& at(int ch, int i, int j) {
    return pix[(static_cast<std::size_t>(ch) * h + i) * w + j];
  }
  float at(int ch, int i, int j) const {
    return pix[(static_cast<std::size_t>(ch) * h + i) * w + j];
  }
};

inline Image hflip(const Image& img) {
  Image out(img.h, img.w, img.c);
  for (int ch = 0; ch < img.c; ++ch)
    for (int i = 0; i < img.h; ++i)
      for (int j = 0; j < img.w; ++j)
        out.at(ch, i, j) = img.at(ch, i, img.w - 1 - j);
  return out;
}

inline Image vflip(const Image& img) {
  Image out(img.h, img.w, img.c);
  for (int ch = 0; ch < img.c; ++ch)
    for (int i = 0; i < img.h; ++i)
      for (int j = 0; j < img.w; ++j)
        out.at(ch, i, j) = img.at(ch, img.h - 1 - i, j);
  return out;
}

inline Image bilinear_resize(const Image& img, int nh, int nw) {
  if (nh == img.h && nw == img.w) return img;
  Image out(nh, nw, img.c);
  const double sy = double(img.h) / nh, sx = double(img.w) / nw;
  for (int ch = 0; ch < img.c; ++ch)
    for (int i = 0; i < nh; ++i) {
      double fy = (i + 0.5) * sy - 0.5;
      int y0 = static_cast<int>(std::floor(fy));
      double wy = fy - y0;
      int ya = std::min(std::max(y0, 0), img.h - 1);
      int yb = std::min(std::max(y0 + 1, 0), img.h - 1);
      for (int j = 0; j < nw; ++j) {
        double fx = (j + 0.5) * sx - 0.5;
        int x0 = static_cast<int>(std::floor(fx));
        double wx = fx - x0;
        int xa = std::min(std::max(x0, 0), img.w - 1);
        int xb = std::min(std::max(x0 + 1, 0), img.w - 1);
        double v = (1 - wy) * ((1 - wx) * img.at(ch, ya, xa) +
                               wx * img.at(ch, ya, xb)) +
                   wy * ((1 - wx) * img.at(ch, yb, xa) +
                         wx * img.at(ch, yb, xb));
        out.at(ch, i, j) = static_cast<float>(v);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Raw image format
// ---------------------------------------------------------------------------

inline void write_raw_image(const std::filesystem::path& path,
                            const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open for write: " + path.string());
  f.write("UWF0", 4);
  std::uint32_t dims[3] = {static_cast<std::uint32_t>(img.h),
                           static_cast<std::uint32_t>(img.w),
                           static_cast<std::uint32_t>(img.c)};
  f.write(reinterpret_cast<const char*>(dims), 12);
  f.write(reinterpret_cast<const char*>(img.pix.data()),
          static_cast<std::streamsize>(img.pix.size() * sizeof(float)));
  if (!f) throw FormatError("write failed: " + path.string());
}

inline Image read_raw_image(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open: " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "UWF0", 4) != 0)
    throw FormatError("bad magic in " + path.string());
  std::uint32_t dims[3];
  f.read(reinterpret_cast<char*>(dims), 12);
  if (!f) throw FormatError("truncated header in " + path.string());
  Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
            static_cast<int>(dims[2]));
  f.read(reinterpret_cast<char*>(img.pix.data()),
         static_cast<std::streamsize>(img.pix.size() * sizeof(float)));
  if (!f) throw FormatError("truncated pixel data in " + path.string());
  return img;
}

// ---------------------------------------------------------------------------
// Samples, patients, manifest
// ---------------------------------------------------------------------------

struct ImageSample {
  std::string patient_id;
  double age = 0.0;
  Sex sex = Sex::Female;
  Eye eye = Eye::Left;
  LabelVector labels{};
  std::string path;  // relative to the dataset directory
  Image pixels;      // may be empty until loaded
};

struct PatientRecord {
  std::string patient_id;
  double age = 0.0;
  Sex sex = Sex::Female;
  // eye -> indices into Dataset::samples
  std::map<Eye, std::vector<int>> eyes;
};

struct Dataset {
  std::filesystem::path dir;
  std::vector<ImageSample> samples;
  std::map<std::string, PatientRecord> patients;

  void index_patients() {
    patients.clear();
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
      const auto& s = samples[i];
      auto& p = patients[s.patient_id];
      p.patient_id = s.patient_id;
      p.age = s.age;
      p.sex = s.sex;
      p.eyes[s.eye].push_back(i);
    }
  }
};

struct ArtifactMeta {
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
  std::string stage;

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"config_digest", config_digest},
            {"stage", stage}};
  }
};

inline void write_manifest(const Dataset& ds, const ArtifactMeta& meta) {
  nlohmann::json j;
  j["meta"] = meta.to_json();
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    nlohmann::json r;
    r["patient_id"] = s.patient_id;
    r["age"] = s.age;
    r["sex"] = to_string(s.sex);
    r["eye"] = to_string(s.eye);
    r["labels"] = s.labels;
    r["path"] = s.path;
    recs.push_back(std::move(r));
  }
  std::ofstream f(ds.dir / "manifest.json");
  f << j.dump(2) << "\n";
  if (!f) throw FormatError("failed writing manifest");
}

// Loads the manifest; pixel data is read per sample when load_pixels is set.
inline Dataset load_dataset(const std::filesystem::path& dir,
                            bool load_pixels = true) {
  auto mpath = dir / "manifest.json";
  std::ifstream f(mpath);
  if (!f)
    throw StageDependencyError("missing dataset manifest: " + mpath.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid manifest json: " + std::string(e.what()));
  }
  Dataset ds;
  ds.dir = dir;
  for (const auto& r : j.at("records")) {
    ImageSample s;
    s.patient_id = r.at("patient_id").get<std::string>();
    s.age = r.at("age").get<double>();
    s.sex = sex_from_string(r.at("sex").get<std::string>());
    s.eye = eye_from_string(r.at("eye").get<std::string>());
    auto labels = r.at("labels").get<std::vector<double>>();
    if (labels.size() != kNumLabels)
      throw FormatError("manifest record with wrong label count");
    std::copy(labels.begin(), labels.end(), s.labels.begin());
    s.path = r.at("path").get<std::string>();
    if (load_pixels) s.pixels = read_raw_image(dir / s.path);
    ds.samples.push_back(std::move(s));
  }
  ds.index_patients();
  return ds;
}

}  // namespace uwf
