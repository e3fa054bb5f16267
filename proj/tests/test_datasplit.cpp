// Stratification rules, largest-remainder apportionment, and split
// integrity.

#include <gtest/gtest.h>

#include "uwf/datasplit.hpp"
#include "uwf/synthdata.hpp"

using namespace uwf;

namespace {

// minimal dataset builder: one entry per (patient, eye, label set)
struct Builder {
  Dataset ds;
  void add(const std::string& pid, Eye eye, std::vector<int> diseases) {
    ImageSample s;
    s.patient_id = pid;
    s.eye = eye;
    s.labels.fill(0.0);
    for (int d : diseases) s.labels[disease_to_label(d)] = 1.0;
    s.labels[0] = diseases.empty() ? 0.0 : 1.0;
    s.path = "images/x.raw";
    ds.samples.push_back(std::move(s));
  }
  Dataset done() {
    ds.index_patients();
    return ds;
  }
};

}  // namespace

TEST(Apportion, LargestRemainderExactCases) {
  // 10 patients at 70/15/15: floors are 7/1/1, one leftover goes to the
  // largest remainder (tie at 0.5/0.5 -> train-before-test priority order,
  // but train has remainder 0 here, so test gets it)
  auto c = apportion(10, {0.70, 0.15, 0.15});
  EXPECT_EQ(c[0], 7);
  EXPECT_EQ(c[1], 1);
  EXPECT_EQ(c[2], 2);
  EXPECT_EQ(c[0] + c[1] + c[2], 10);

  // 1 patient: everything must land in train (priority train first)
  c = apportion(1, {0.70, 0.15, 0.15});
  EXPECT_EQ(c[0], 1);
  EXPECT_EQ(c[1], 0);
  EXPECT_EQ(c[2], 0);

  // 2 patients: remainders 0.4/0.3/0.3, the leftover goes to train
  c = apportion(2, {0.70, 0.15, 0.15});
  EXPECT_EQ(c[0], 2);
  EXPECT_EQ(c[1], 0);
  EXPECT_EQ(c[2], 0);

  // 3 patients: remainders 0.1/0.45/0.45, tie resolves test before validation
  c = apportion(3, {0.70, 0.15, 0.15});
  EXPECT_EQ(c[0], 2);
  EXPECT_EQ(c[1], 0);
  EXPECT_EQ(c[2], 1);

  c = apportion(0, {0.70, 0.15, 0.15});
  EXPECT_EQ(c[0] + c[1] + c[2], 0);
}

TEST(Apportion, MatchesBruteForceOverManySizes) {
  const std::array<double, 3> frac = {0.70, 0.15, 0.15};
  for (int n = 0; n <= 200; ++n) {
    auto c = apportion(n, frac);
    EXPECT_EQ(c[0] + c[1] + c[2], n);
    for (int s = 0; s < 3; ++s) {
      EXPECT_GE(c[s], static_cast<int>(std::floor(frac[s] * n)));
      EXPECT_LE(c[s], static_cast<int>(std::floor(frac[s] * n)) + 1);
    }
  }
}

TEST(Stratification, MostFrequentDiseaseWins) {
  Builder b;
  b.add("P1", Eye::Left, {0});   // DR twice
  b.add("P1", Eye::Right, {0});
  b.add("P1", Eye::Left, {4});   // AMD once
  // plenty of DR elsewhere so DR is globally common
  for (int i = 0; i < 5; ++i) b.add("Q" + std::to_string(i), Eye::Left, {0});
  Dataset ds = b.done();
  auto prev = prevalence_order(ds);
  EXPECT_EQ(assign_stratification_label(ds, ds.patients.at("P1"), prev), 0);
}

TEST(Stratification, TieBreaksToGloballyRarerDisease) {
  Builder b;
  b.add("P1", Eye::Left, {0, 4});  // DR and AMD once each
  for (int i = 0; i < 6; ++i) b.add("C" + std::to_string(i), Eye::Left, {0});
  b.add("R1", Eye::Left, {4});  // AMD globally rarer than DR
  Dataset ds = b.done();
  auto prev = prevalence_order(ds);
  EXPECT_EQ(assign_stratification_label(ds, ds.patients.at("P1"), prev), 4);
}

TEST(Stratification, HealthyOnlyWhenNoImageDiseased) {
  Builder b;
  b.add("P1", Eye::Left, {});
  b.add("P1", Eye::Right, {});
  b.add("P2", Eye::Left, {});
  b.add("P2", Eye::Right, {6});
  Dataset ds = b.done();
  auto prev = prevalence_order(ds);
  EXPECT_EQ(assign_stratification_label(ds, ds.patients.at("P1"), prev),
            kHealthyStratum);
  EXPECT_EQ(assign_stratification_label(ds, ds.patients.at("P2"), prev), 6);
}

TEST(Split, FractionsMustSumToOne) {
  Builder b;
  b.add("P1", Eye::Left, {});
  Dataset ds = b.done();
  EXPECT_THROW(split_patients(ds, {0.5, 0.2, 0.2}, 0), ConfigError);
}

TEST(Split, NoLeakageAcrossSeedsAndPopulations) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenConfig cfg;
    cfg.n_patients = 60 + static_cast<int>(seed) * 13;
    cfg.seed = seed * 7 + 1;
    Dataset ds = generate_population(cfg);
    auto split = split_patients(ds, {0.70, 0.15, 0.15}, seed);
    EXPECT_TRUE(verify_no_leakage(split, ds).empty());
    EXPECT_EQ(split.entries.size(), ds.patients.size());
  }
}

TEST(Split, ViolationsAreDetected) {
  Builder b;
  b.add("P1", Eye::Left, {});
  b.add("P2", Eye::Left, {});
  b.add("P3", Eye::Left, {});
  Dataset ds = b.done();
  SplitAssignment broken;
  broken.entries = {{"P1", SplitSet::Train}, {"P1", SplitSet::Test},
                    {"P2", SplitSet::Train}};
  auto v = verify_no_leakage(broken, ds);
  ASSERT_EQ(v.size(), 2u);  // P1 in two sets, P3 missing
  EXPECT_EQ(v[0], "P1");
  EXPECT_EQ(v[1], "P3");
}

TEST(Split, StratumProportionsRespected) {
  GenConfig cfg;
  cfg.n_patients = 500;
  cfg.seed = 5;
  Dataset ds = generate_population(cfg);
  auto split = split_patients(ds, {0.70, 0.15, 0.15}, 11);
  for (const auto& [stratum, counts] : split.stratum_counts) {
    int n = counts[0] + counts[1] + counts[2];
    auto expect = apportion(n, {0.70, 0.15, 0.15});
    EXPECT_EQ(counts, expect) << stratum_name(stratum);
  }
}

TEST(Split, DeterministicAndJsonRoundTrip) {
  GenConfig cfg;
  cfg.n_patients = 80;
  cfg.seed = 2;
  Dataset ds = generate_population(cfg);
  auto a = split_patients(ds, {0.70, 0.15, 0.15}, 3);
  auto b = split_patients(ds, {0.70, 0.15, 0.15}, 3);
  EXPECT_EQ(a.entries, b.entries);
  auto c = split_patients(ds, {0.70, 0.15, 0.15}, 4);
  EXPECT_NE(a.entries, c.entries);

  auto dir = std::filesystem::temp_directory_path() / "uwf_test_split";
  std::filesystem::create_directories(dir);
  write_split_json(a, dir / "split.json", {3, 1, "split"});
  auto loaded = load_split_json(dir / "split.json");
  EXPECT_EQ(loaded.as_map(), a.as_map());
  EXPECT_THROW(load_split_json(dir / "nope.json"), StageDependencyError);
}
