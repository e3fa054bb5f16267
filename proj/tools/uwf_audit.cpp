// Command-line driver for the retinal-image audit pipeline.
//
//   uwf_audit <gen|split|train|eval|explain|peppr|report> [options]
//
// Exit codes: 0 ok, 2 configuration error, 3 missing stage dependency,
// 4 undefined metric, 1 anything else.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "uwf/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "run";
  long long seed = -1;  // -1: keep the config's seed
};

uwf::RunConfig resolve_config(const CommonOpts& opts) {
  uwf::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = uwf::load_config(opts.config_path);
  cfg.out_dir = opts.out_dir;
  if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  return cfg;
}

void add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config_path, "JSON run configuration");
  sub->add_option("--out", opts.out_dir, "run output directory");
  sub->add_option("--seed", opts.seed, "override the configured seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic ultra-widefield retinal screening audit"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool with_experts = false;
  bool skip_baseline = false;
  int peppr_repeats = -1;

  auto* gen = app.add_subcommand("gen", "generate the synthetic population");
  auto* split = app.add_subcommand("split", "patient-level stratified split");
  auto* train = app.add_subcommand("train", "train the multi-label model");
  auto* eval = app.add_subcommand("eval", "evaluate on the test split");
  auto* explain = app.add_subcommand("explain", "global attention maps");
  auto* peppr = app.add_subcommand("peppr", "erasure/restoration audit");
  auto* report = app.add_subcommand("report", "assemble the run report");
  for (auto* sub : {gen, split, train, eval, explain, peppr, report})
    add_common(sub, opts);
  train->add_flag("--experts", with_experts,
                  "also train the per-disease expert ensemble");
  train->add_flag("--no-baseline", skip_baseline,
                  "skip the age+sex logistic baseline");
  peppr->add_option("--repeats", peppr_repeats,
                    "noise repeats per mask step (default from config)");

  CLI11_PARSE(app, argc, argv);

  try {
    uwf::RunConfig cfg = resolve_config(opts);
    if (gen->parsed()) {
      uwf::stage_gen(cfg);
    } else if (split->parsed()) {
      uwf::stage_split(cfg);
    } else if (train->parsed()) {
      uwf::stage_train(cfg, with_experts, !skip_baseline);
    } else if (eval->parsed()) {
      uwf::stage_eval(cfg);
    } else if (explain->parsed()) {
      uwf::stage_explain(cfg);
    } else if (peppr->parsed()) {
      if (peppr_repeats > 0) cfg.peppr_repeats = peppr_repeats;
      uwf::stage_peppr(cfg);
    } else if (report->parsed()) {
      uwf::stage_report(cfg);
    }
  } catch (const uwf::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const uwf::StageDependencyError& e) {
    std::fprintf(stderr, "stage dependency error: %s\n", e.what());
    return 3;
  } catch (const uwf::UndefinedMetricError& e) {
    std::fprintf(stderr, "undefined metric: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
