#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace uwf {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto exit codes.
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StageDependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Hashing. Used for deriving per-object RNG streams and for config digests.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

// ---------------------------------------------------------------------------
// Seeded RNG. xoshiro-free: splitmix64 state stepping, with hand-rolled
// uniform/normal/beta so the byte stream is identical across standard
// libraries.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; one value per call (the pair's second half is discarded to
  // keep the stream position independent of call parity).
  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(2.0 * M_PI * u2);
  }

  // Johnk's beta sampler; exact for a,b < 1 which covers mixup's (0.6, 0.6).
  double beta(double a, double b) {
    for (int i = 0; i < 1000; ++i) {
      double u = std::pow(uniform(), 1.0 / a);
      double v = std::pow(uniform(), 1.0 / b);
      if (u + v > 0.0 && u + v <= 1.0) return u / (u + v);
    }
    return 0.5;  // unreachable in practice
  }

  // Seeded Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Label vocabulary. Order is fixed across the whole pipeline.
// ---------------------------------------------------------------------------

inline constexpr int kNumLabels = 8;
inline constexpr int kNumDiseases = 7;
inline constexpr std::array<const char*, kNumLabels> kLabelNames = {
    "diseased", "DR", "Gla", "RD", "RVO", "AMD", "RP", "MH"};

// Disease index within the 7-disease set is label index - 1.
inline int disease_to_label(int disease) { return disease + 1; }

using LabelVector = std::array<double, kNumLabels>;

inline void check_label_vector(const LabelVector& y) {
  for (double v : y)
    if (!(v >= 0.0 && v <= 1.0))
      throw ContractError("label entry outside [0,1]");
}

inline int env_thread_cap() {
  if (const char* s = std::getenv("UWF_AUDIT_THREADS")) {
    int n = std::atoi(s);
    if (n > 0) return n;
  }
  return 1;
}

}  // namespace uwf
