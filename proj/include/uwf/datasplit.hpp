#pragma once

// Patient-level stratification labels and leak-free 70/15/15 splits.
//
// Stratification rules: (1) the disease occurring most frequently across a
// patient's images, (2) ties broken toward the globally rarest tied disease
// (image-level counts over the whole dataset), (3) "healthy" only if no
// image of the patient carries any disease.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwf/common.hpp"
#include "uwf/data.hpp"

namespace uwf {

enum class SplitSet { Train = 0, Validation = 1, Test = 2 };

inline std::string to_string(SplitSet s) {
  switch (s) {
    case SplitSet::Train:
      return "train";
    case SplitSet::Validation:
      return "validation";
    case SplitSet::Test:
      return "test";
  }
  return "?";
}

inline SplitSet split_set_from_string(const std::string& s) {
  if (s == "train") return SplitSet::Train;
  if (s == "validation") return SplitSet::Validation;
  if (s == "test") return SplitSet::Test;
  throw FormatError("unknown split set: " + s);
}

// Stratification label: -1 = healthy, otherwise disease index 0..6.
constexpr int kHealthyStratum = -1;

inline std::string stratum_name(int stratum) {
  return stratum == kHealthyStratum
             ? "healthy"
             : kLabelNames[disease_to_label(stratum)];
}

// Image-level disease counts over the whole dataset; position in the
// returned vector orders diseases from common to rare.
inline std::vector<int> prevalence_order(const Dataset& ds) {
  std::array<std::int64_t, kNumDiseases> counts{};
  for (const auto& s : ds.samples)
    for (int d = 0; d < kNumDiseases; ++d)
      if (s.labels[disease_to_label(d)] >= 0.5) ++counts[d];
  std::vector<int> order(kNumDiseases);
  for (int d = 0; d < kNumDiseases; ++d) order[d] = d;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return a < b;
  });
  return order;
}

inline int assign_stratification_label(const Dataset& ds,
                                       const PatientRecord& patient,
                                       const std::vector<int>& prev_order) {
  std::array<int, kNumDiseases> counts{};
  int n_images = 0;
  for (const auto& [eye, idxs] : patient.eyes)
    for (int idx : idxs) {
      ++n_images;
      for (int d = 0; d < kNumDiseases; ++d)
        if (ds.samples[idx].labels[disease_to_label(d)] >= 0.5) ++counts[d];
    }
  if (n_images == 0)
    throw ContractError("patient without images: " + patient.patient_id);

  int best = kHealthyStratum, best_count = 0;
  // rank[d]: larger = rarer
  std::array<int, kNumDiseases> rank{};
  for (std::size_t pos = 0; pos < prev_order.size(); ++pos)
    rank[prev_order[pos]] = static_cast<int>(pos);
  for (int d = 0; d < kNumDiseases; ++d) {
    if (counts[d] == 0) continue;
    if (counts[d] > best_count ||
        (counts[d] == best_count && best != kHealthyStratum &&
         rank[d] > rank[best])) {
      best = d;
      best_count = counts[d];
    }
  }
  return best;
}

struct SplitAssignment {
  // A plain list so integrity violations (a patient in two sets) are
  // representable and detectable.
  std::vector<std::pair<std::string, SplitSet>> entries;
  std::array<double, 3> fractions = {0.70, 0.15, 0.15};
  // stratum -> per-set patient counts
  std::map<int, std::array<int, 3>> stratum_counts;

  std::map<std::string, SplitSet> as_map() const {
    std::map<std::string, SplitSet> m;
    for (const auto& [pid, set] : entries) m[pid] = set;
    return m;
  }
};

// Largest-remainder apportionment of n patients over the three sets.
// Remainder ties fill in the order train, test, validation so rare strata
// stay learnable first and measurable second.
inline std::array<int, 3> apportion(int n, const std::array<double, 3>& frac) {
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int s = 0; s < 3; ++s) {
    double t = frac[s] * n;
    counts[s] = static_cast<int>(std::floor(t));
    rem[s] = t - counts[s];
    assigned += counts[s];
  }
  // priority: train(0), test(2), validation(1)
  const std::array<int, 3> prio = {0, 2, 1};
  std::array<int, 3> order = prio;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    int pa = a == 0 ? 0 : (a == 2 ? 1 : 2);
    int pb = b == 0 ? 0 : (b == 2 ? 1 : 2);
    return pa < pb;
  });
  for (int k = 0; k < n - assigned; ++k) ++counts[order[k % 3]];
  return counts;
}

inline SplitAssignment split_patients(const Dataset& ds,
                                      const std::array<double, 3>& fractions,
                                      std::uint64_t seed) {
  double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");

  const auto prev = prevalence_order(ds);
  std::map<int, std::vector<std::string>> strata;
  for (const auto& [pid, rec] : ds.patients)
    strata[assign_stratification_label(ds, rec, prev)].push_back(pid);

  SplitAssignment out;
  out.fractions = fractions;
  for (auto& [stratum, pids] : strata) {
    std::sort(pids.begin(), pids.end());
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(stratum + 1000)));
    rng.shuffle(pids);
    auto counts = apportion(static_cast<int>(pids.size()), fractions);
    out.stratum_counts[stratum] = counts;
    std::size_t pos = 0;
    const std::array<SplitSet, 3> sets = {SplitSet::Train,
                                          SplitSet::Validation, SplitSet::Test};
    for (int s = 0; s < 3; ++s)
      for (int k = 0; k < counts[s]; ++k)
        out.entries.emplace_back(pids[pos++], sets[s]);
  }
  std::sort(out.entries.begin(), out.entries.end());
  return out;
}

// Returns the patient ids violating the exactly-one-set invariant (either
// appearing in several sets or missing from the split entirely).
inline std::vector<std::string> verify_no_leakage(const SplitAssignment& split,
                                                  const Dataset& ds) {
  std::map<std::string, std::set<SplitSet>> seen;
  for (const auto& [pid, set] : split.entries) seen[pid].insert(set);
  std::vector<std::string> violations;
  for (const auto& [pid, sets] : seen)
    if (sets.size() != 1) violations.push_back(pid);
  for (const auto& [pid, rec] : ds.patients)
    if (!seen.count(pid)) violations.push_back(pid);
  std::sort(violations.begin(), violations.end());
  violations.erase(std::unique(violations.begin(), violations.end()),
                   violations.end());
  return violations;
}

inline void write_split_json(const SplitAssignment& split,
                             const std::filesystem::path& path,
                             const ArtifactMeta& meta) {
  nlohmann::json j;
  j["meta"] = meta.to_json();
  auto& a = j["assignments"] = nlohmann::json::object();
  for (const auto& [pid, set] : split.entries) a[pid] = to_string(set);
  auto& c = j["stratum_counts"] = nlohmann::json::object();
  for (const auto& [stratum, counts] : split.stratum_counts)
    c[stratum_name(stratum)] = {{"train", counts[0]},
                                {"validation", counts[1]},
                                {"test", counts[2]}};
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  if (!f) throw FormatError("failed writing " + path.string());
}

inline SplitAssignment load_split_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw StageDependencyError("missing split file: " + path.string());
  nlohmann::json j;
  f >> j;
  SplitAssignment split;
  for (const auto& [pid, set] : j.at("assignments").items())
    split.entries.emplace_back(pid,
                               split_set_from_string(set.get<std::string>()));
  return split;
}

// Sample indices belonging to one split set.
inline std::vector<int> samples_in_set(const Dataset& ds,
                                       const SplitAssignment& split,
                                       SplitSet set) {
  auto m = split.as_map();
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i) {
    auto it = m.find(ds.samples[i].patient_id);
    if (it != m.end() && it->second == set) out.push_back(i);
  }
  return out;
}

}  // namespace uwf
