#pragma once

// Stage orchestration: gen -> split -> train -> eval -> explain -> peppr ->
// report, all driven by one RunConfig. Every artifact embeds {seed,
// config_digest, stage} and nothing embeds timestamps, so rerunning a stage
// with the same config yields byte-identical output.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "uwf/augment.hpp"
#include "uwf/common.hpp"
#include "uwf/data.hpp"
#include "uwf/datasplit.hpp"
#include "uwf/eval.hpp"
#include "uwf/explain.hpp"
#include "uwf/model.hpp"
#include "uwf/peppr.hpp"
#include "uwf/synthdata.hpp"
#include "uwf/train.hpp"

namespace uwf {

struct RunConfig {
  std::filesystem::path out_dir = "run";
  std::uint64_t seed = 0;
  GenConfig gen;
  bool make_shifted = true;
  std::array<double, 3> split_fractions = {0.70, 0.15, 0.15};
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  std::vector<double> max_fprs = {0.03, 0.40};
  int peppr_repeats = 1;

  void validate() const {
    gen.prevalence.validate();
    model.validate();
    train.validate();
    augment.validate();
    if (model.height != gen.height || model.width != gen.width)
      throw ConfigError("model resolution must match generated images");
    for (double f : max_fprs)
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("max_fpr outside (0,1]");
    if (peppr_repeats < 1) throw ConfigError("peppr_repeats must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// JSON round-trip. Unknown keys are rejected nowhere; missing keys keep
// defaults, so configs stay forward-compatible.
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["gen"] = {{"height", c.gen.height},
              {"width", c.gen.width},
              {"n_patients", c.gen.n_patients},
              {"comorbidity_prob", c.gen.comorbidity_prob},
              {"age_mean", c.gen.age_mean},
              {"age_sd", c.gen.age_sd},
              {"healthy_prevalence", c.gen.prevalence.healthy},
              {"disease_prevalence", c.gen.prevalence.disease}};
  j["make_shifted"] = c.make_shifted;
  j["split_fractions"] = c.split_fractions;
  j["model"] = {{"in_channels", c.model.in_channels},
                {"height", c.model.height},
                {"width", c.model.width},
                {"stem_stride", c.model.stem_stride},
                {"stage_widths", c.model.stage_widths},
                {"stage_strides", c.model.stage_strides},
                {"blocks_per_stage", c.model.blocks_per_stage},
                {"head_hidden", c.model.head_hidden},
                {"dropout_pool", c.model.dropout_pool},
                {"dropout_hidden", c.model.dropout_hidden},
                {"prelu_init", c.model.prelu_init},
                {"n_outputs", c.model.n_outputs}};
  j["train"] = {{"eta_max", c.train.eta_max},
                {"restart_epochs", c.train.restart_epochs},
                {"momentum", c.train.momentum},
                {"ema_decay", c.train.ema_decay},
                {"weight_penalty", c.train.weight_penalty},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size}};
  j["augment"] = {{"p_hflip", c.augment.p_hflip},
                  {"p_vflip", c.augment.p_vflip},
                  {"p_domain", c.augment.p_domain},
                  {"p_general", c.augment.p_general},
                  {"p_erase", c.augment.p_erase},
                  {"noise_sd", c.augment.noise_sd},
                  {"mixup_alpha", c.augment.mixup_alpha},
                  {"mixup_beta", c.augment.mixup_beta}};
  j["max_fprs"] = c.max_fprs;
  j["peppr_repeats"] = c.peppr_repeats;
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("gen")) {
      const auto& g = j["gen"];
      c.gen.height = g.value("height", c.gen.height);
      c.gen.width = g.value("width", c.gen.width);
      c.gen.n_patients = g.value("n_patients", c.gen.n_patients);
      c.gen.comorbidity_prob =
          g.value("comorbidity_prob", c.gen.comorbidity_prob);
      c.gen.age_mean = g.value("age_mean", c.gen.age_mean);
      c.gen.age_sd = g.value("age_sd", c.gen.age_sd);
      c.gen.prevalence.healthy =
          g.value("healthy_prevalence", c.gen.prevalence.healthy);
      if (g.contains("disease_prevalence")) {
        auto v = g["disease_prevalence"].get<std::vector<double>>();
        if (v.size() != kNumDiseases)
          throw ConfigError("disease_prevalence needs 7 entries");
        std::copy(v.begin(), v.end(), c.gen.prevalence.disease.begin());
      }
    }
    c.make_shifted = j.value("make_shifted", c.make_shifted);
    if (j.contains("split_fractions")) {
      auto v = j["split_fractions"].get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("split_fractions needs 3 entries");
      std::copy(v.begin(), v.end(), c.split_fractions.begin());
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.in_channels = m.value("in_channels", c.model.in_channels);
      c.model.height = m.value("height", c.model.height);
      c.model.width = m.value("width", c.model.width);
      c.model.stem_stride = m.value("stem_stride", c.model.stem_stride);
      c.model.stage_widths = m.value("stage_widths", c.model.stage_widths);
      c.model.stage_strides = m.value("stage_strides", c.model.stage_strides);
      c.model.blocks_per_stage =
          m.value("blocks_per_stage", c.model.blocks_per_stage);
      c.model.head_hidden = m.value("head_hidden", c.model.head_hidden);
      c.model.dropout_pool = m.value("dropout_pool", c.model.dropout_pool);
      c.model.dropout_hidden =
          m.value("dropout_hidden", c.model.dropout_hidden);
      c.model.prelu_init = m.value("prelu_init", c.model.prelu_init);
      c.model.n_outputs = m.value("n_outputs", c.model.n_outputs);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.eta_max = t.value("eta_max", c.train.eta_max);
      c.train.restart_epochs =
          t.value("restart_epochs", c.train.restart_epochs);
      c.train.momentum = t.value("momentum", c.train.momentum);
      c.train.ema_decay = t.value("ema_decay", c.train.ema_decay);
      c.train.weight_penalty =
          t.value("weight_penalty", c.train.weight_penalty);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
    }
    if (j.contains("augment")) {
      const auto& a = j["augment"];
      c.augment.p_hflip = a.value("p_hflip", c.augment.p_hflip);
      c.augment.p_vflip = a.value("p_vflip", c.augment.p_vflip);
      c.augment.p_domain = a.value("p_domain", c.augment.p_domain);
      c.augment.p_general = a.value("p_general", c.augment.p_general);
      c.augment.p_erase = a.value("p_erase", c.augment.p_erase);
      c.augment.noise_sd = a.value("noise_sd", c.augment.noise_sd);
      c.augment.mixup_alpha = a.value("mixup_alpha", c.augment.mixup_alpha);
      c.augment.mixup_beta = a.value("mixup_beta", c.augment.mixup_beta);
    }
    c.max_fprs = j.value("max_fprs", c.max_fprs);
    c.peppr_repeats = j.value("peppr_repeats", c.peppr_repeats);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid json: ") + e.what());
  }
  return config_from_json(j);
}

inline std::uint64_t config_digest(const RunConfig& c) {
  return fnv1a64(config_to_json(c).dump());
}

inline ArtifactMeta make_meta(const RunConfig& c, const std::string& stage) {
  return ArtifactMeta{c.seed, config_digest(c), stage};
}

// ---------------------------------------------------------------------------
// Stage: gen
// ---------------------------------------------------------------------------

inline std::filesystem::path dataset_dir(const RunConfig& c) {
  return c.out_dir / "dataset";
}
inline std::filesystem::path shifted_dir(const RunConfig& c) {
  return c.out_dir / "dataset_shifted";
}

inline void stage_gen(const RunConfig& cfg) {
  cfg.validate();
  GenConfig g = cfg.gen;
  g.seed = cfg.seed;
  Dataset ds = generate_population(g);
  save_dataset(ds, dataset_dir(cfg), make_meta(cfg, "gen"));
  if (cfg.make_shifted) {
    Dataset shifted = generate_shifted(mix_seed(cfg.seed, 0x5817F7ull), ds);
    save_dataset(shifted, shifted_dir(cfg), make_meta(cfg, "gen"));
  }
}

// ---------------------------------------------------------------------------
// Stage: split
// ---------------------------------------------------------------------------

inline void stage_split(const RunConfig& cfg) {
  cfg.validate();
  Dataset ds = load_dataset(dataset_dir(cfg), /*load_pixels=*/false);
  auto split = split_patients(ds, cfg.split_fractions, cfg.seed);
  auto violations = verify_no_leakage(split, ds);
  if (!violations.empty())
    throw ContractError("split integrity violated for patient " +
                        violations.front());
  write_split_json(split, cfg.out_dir / "split.json", make_meta(cfg, "split"));
}

// ---------------------------------------------------------------------------
// Stage: train
// ---------------------------------------------------------------------------

inline void stage_train(const RunConfig& cfg, bool with_experts = false,
                        bool with_baseline = true) {
  cfg.validate();
  Dataset ds = load_dataset(dataset_dir(cfg));
  auto split = load_split_json(cfg.out_dir / "split.json");

  auto result = train_model<float>(ds, split, cfg.model, cfg.train, cfg.augment);
  save_checkpoint(result.params, cfg.out_dir / "model.ckpt",
                  config_digest(cfg), cfg.seed);
  write_epoch_log(result.epochs, cfg.model, cfg.out_dir / "train_log.csv",
                  make_meta(cfg, "train"));

  if (with_baseline) {
    auto train_idx = samples_in_set(ds, split, SplitSet::Train);
    auto baseline = LogisticBaseline::fit(ds, train_idx);
    nlohmann::json j;
    j["meta"] = make_meta(cfg, "train").to_json();
    j["age_min"] = baseline.age_min;
    j["age_max"] = baseline.age_max;
    for (int l = 0; l < kNumLabels; ++l)
      j["coef"][kLabelNames[l]] = baseline.coef[l];
    std::ofstream f(cfg.out_dir / "baseline.json");
    f << j.dump(2) << "\n";
    if (!f) throw FormatError("failed writing baseline.json");
  }

  if (with_experts) {
    auto experts = train_expert_ensemble<float>(ds, split, cfg.model,
                                                cfg.train, cfg.augment);
    nlohmann::json j;
    j["meta"] = make_meta(cfg, "train").to_json();
    auto& arr = j["experts"] = nlohmann::json::array();
    for (const auto& e : experts) {
      char name[32];
      std::snprintf(name, sizeof(name), "expert_%d.ckpt", e.disease);
      save_checkpoint(e.params, cfg.out_dir / name, config_digest(cfg),
                      cfg.seed);
      arr.push_back({{"disease", e.disease},
                     {"label", kLabelNames[disease_to_label(e.disease)]},
                     {"checkpoint", name},
                     {"use_ema", e.use_ema},
                     {"val_auc", e.val_auc}});
    }
    std::ofstream f(cfg.out_dir / "experts.json");
    f << j.dump(2) << "\n";
    if (!f) throw FormatError("failed writing experts.json");
  }
}

// ---------------------------------------------------------------------------
// Parameter selection: raw weights vs their EMA, decided once on the
// validation "diseased" AUC and reused by eval/explain/peppr.
// ---------------------------------------------------------------------------

template <typename T>
ParameterSet<T> choose_eval_params(ParameterSet<T>& trained,
                                   const ModelConfig& mcfg, const Dataset& ds,
                                   const std::vector<int>& val_idx,
                                   bool* used_ema = nullptr) {
  auto auc_of = [&](ParameterSet<T>& p) {
    if (val_idx.empty()) return 0.5;
    auto preds = score_samples(p, mcfg, ds, val_idx);
    try {
      return label_auc(preds, 0);
    } catch (const UndefinedMetricError&) {
      return 0.5;
    }
  };
  double raw = auc_of(trained);
  auto ema = trained.with_ema_values();
  double avg = auc_of(ema);
  const bool pick_ema = avg >= raw;
  if (used_ema) *used_ema = pick_ema;
  if (pick_ema) return ema;
  ParameterSet<T> copy = trained.with_ema_values();  // shape template
  for (std::size_t i = 0; i < copy.entries.size(); ++i)
    copy.entries[i].tensor->value = trained.entries[i].tensor->value;
  copy.init_ema_from_values();
  return copy;
}

// ---------------------------------------------------------------------------
// Stage: eval
// ---------------------------------------------------------------------------

inline nlohmann::json label_metrics_json(
    const std::vector<WeightedPrediction>& val_preds,
    const std::vector<WeightedPrediction>& test_preds, int n_outputs,
    const std::vector<double>& max_fprs) {
  nlohmann::json out = nlohmann::json::object();
  for (int l = 0; l < n_outputs; ++l) {
    nlohmann::json m;
    try {
      m["auc"] = label_auc(test_preds, l);
    } catch (const UndefinedMetricError&) {
      m["auc"] = nullptr;
    }
    m["brier"] = label_brier(test_preds, l);
    auto& thr = m["thresholds"] = nlohmann::json::array();
    for (double max_fpr : max_fprs) {
      nlohmann::json t;
      t["max_fpr"] = max_fpr;
      try {
        auto roc = label_roc(val_preds, l);
        auto policy = select_threshold(roc, max_fpr);
        t["threshold"] = policy.threshold;
        t["val_tpr"] = policy.tpr;
        t["val_fpr"] = policy.fpr;
        // apply on test
        double tp = 0, fn = 0, fp = 0, tn = 0;
        for (const auto& p : test_preds) {
          bool pos = p.targets[l] >= 0.5;
          bool flag = p.scores[l] >= policy.threshold;
          if (pos)
            (flag ? tp : fn) += p.weight;
          else
            (flag ? fp : tn) += p.weight;
        }
        if (tp + fn > 0)
          t["test_tpr"] = tp / (tp + fn);
        else
          t["test_tpr"] = nullptr;
        if (fp + tn > 0)
          t["test_fpr"] = fp / (fp + tn);
        else
          t["test_fpr"] = nullptr;
      } catch (const UndefinedMetricError&) {
        t["threshold"] = nullptr;
      }
      thr.push_back(std::move(t));
    }
    out[kLabelNames[l]] = std::move(m);
  }
  return out;
}

inline void stage_eval(const RunConfig& cfg) {
  cfg.validate();
  Dataset ds = load_dataset(dataset_dir(cfg));
  auto split = load_split_json(cfg.out_dir / "split.json");
  auto val_idx = samples_in_set(ds, split, SplitSet::Validation);
  auto test_idx = samples_in_set(ds, split, SplitSet::Test);

  auto trained =
      load_checkpoint<float>(cfg.model, cfg.out_dir / "model.ckpt");
  bool used_ema = false;
  auto params = choose_eval_params(trained, cfg.model, ds, val_idx, &used_ema);

  nlohmann::json j;
  j["meta"] = make_meta(cfg, "eval").to_json();

  auto val_preds = score_samples(params, cfg.model, ds, val_idx);
  auto test_preds = score_samples(params, cfg.model, ds, test_idx);
  j["multilabel"]["used_ema"] = used_ema;
  j["multilabel"]["labels"] = label_metrics_json(
      val_preds, test_preds, cfg.model.n_outputs, cfg.max_fprs);

  // expert ensemble, when trained
  if (std::filesystem::exists(cfg.out_dir / "experts.json")) {
    std::ifstream ef(cfg.out_dir / "experts.json");
    nlohmann::json ej;
    ef >> ej;
    ModelConfig ecfg = cfg.model;
    ecfg.n_outputs = 1;
    std::vector<std::vector<WeightedPrediction>> expert_preds(kNumDiseases);
    for (const auto& e : ej.at("experts")) {
      int d = e.at("disease").get<int>();
      auto ckpt = load_checkpoint<float>(
          ecfg, cfg.out_dir / e.at("checkpoint").get<std::string>());
      auto p = e.at("use_ema").get<bool>()
                   ? ckpt.with_ema_values()
                   : std::move(ckpt);
      expert_preds[d] = score_samples(p, ecfg, ds, test_idx);
    }
    auto expert_val = [&](const nlohmann::json& ej_) {
      std::vector<std::vector<WeightedPrediction>> out(kNumDiseases);
      ModelConfig vcfg = cfg.model;
      vcfg.n_outputs = 1;
      for (const auto& e : ej_.at("experts")) {
        int d = e.at("disease").get<int>();
        auto ckpt = load_checkpoint<float>(
            vcfg, cfg.out_dir / e.at("checkpoint").get<std::string>());
        auto p = e.at("use_ema").get<bool>() ? ckpt.with_ema_values()
                                             : std::move(ckpt);
        out[d] = score_samples(p, vcfg, ds, val_idx);
      }
      return out;
    };
    auto expert_val_preds = expert_val(ej);

    auto assemble = [&](const std::vector<std::vector<WeightedPrediction>>& ep,
                        const std::vector<int>& idxs) {
      std::vector<WeightedPrediction> out(idxs.size());
      for (std::size_t k = 0; k < idxs.size(); ++k) {
        out[k] = ep[0][k];
        out[k].scores.fill(0.0);
        std::vector<double> all;
        for (int d = 0; d < kNumDiseases; ++d) {
          double s = ep[d][k].scores[0];
          out[k].scores[disease_to_label(d)] = s;
          all.push_back(s);
        }
        out[k].scores[0] = ensemble_aggregate(all, EnsembleStat::Max);
      }
      return out;
    };
    auto ens_test = assemble(expert_preds, test_idx);
    auto ens_val = assemble(expert_val_preds, val_idx);
    j["ensemble"]["labels"] =
        label_metrics_json(ens_val, ens_test, kNumLabels, cfg.max_fprs);
  }

  // age+sex baseline, when trained
  if (std::filesystem::exists(cfg.out_dir / "baseline.json")) {
    std::ifstream bf(cfg.out_dir / "baseline.json");
    nlohmann::json bj;
    bf >> bj;
    LogisticBaseline baseline;
    baseline.age_min = bj.at("age_min").get<double>();
    baseline.age_max = bj.at("age_max").get<double>();
    for (int l = 0; l < kNumLabels; ++l)
      baseline.coef[l] =
          bj.at("coef").at(kLabelNames[l]).get<std::array<double, 3>>();
    auto score_baseline = [&](const std::vector<int>& idxs) {
      std::vector<WeightedPrediction> preds(idxs.size());
      for (std::size_t k = 0; k < idxs.size(); ++k) {
        const auto& s = ds.samples[idxs[k]];
        preds[k].image_index = idxs[k];
        preds[k].patient_id = s.patient_id;
        preds[k].eye = s.eye;
        preds[k].scores = baseline.predict(s);
        preds[k].targets = s.labels;
      }
      assign_eye_weights(preds);
      return preds;
    };
    j["baseline"]["labels"] =
        label_metrics_json(score_baseline(val_idx), score_baseline(test_idx),
                           kNumLabels, cfg.max_fprs);
  }

  // distribution-shifted test set, when generated
  if (std::filesystem::exists(shifted_dir(cfg) / "manifest.json")) {
    Dataset sds = load_dataset(shifted_dir(cfg));
    std::vector<int> stest;
    auto smap = split.as_map();
    for (int i = 0; i < static_cast<int>(sds.samples.size()); ++i) {
      auto it = smap.find(sds.samples[i].patient_id);
      if (it != smap.end() && it->second == SplitSet::Test) stest.push_back(i);
    }
    auto spreds = score_samples(params, cfg.model, sds, stest);
    nlohmann::json sj = nlohmann::json::object();
    for (int l = 0; l < cfg.model.n_outputs; ++l) {
      try {
        sj[kLabelNames[l]]["auc"] = label_auc(spreds, l);
      } catch (const UndefinedMetricError&) {
        sj[kLabelNames[l]]["auc"] = nullptr;
      }
      sj[kLabelNames[l]]["brier"] = label_brier(spreds, l);
    }
    j["shifted"]["labels"] = std::move(sj);
  }

  std::ofstream f(cfg.out_dir / "metrics.json");
  f << j.dump(2) << "\n";
  if (!f) throw FormatError("failed writing metrics.json");
}

// ---------------------------------------------------------------------------
// Stage: explain
// ---------------------------------------------------------------------------

inline void stage_explain(const RunConfig& cfg) {
  cfg.validate();
  Dataset ds = load_dataset(dataset_dir(cfg));
  auto split = load_split_json(cfg.out_dir / "split.json");
  auto val_idx = samples_in_set(ds, split, SplitSet::Validation);
  if (val_idx.empty()) throw ConfigError("validation split is empty");

  auto trained = load_checkpoint<float>(cfg.model, cfg.out_dir / "model.ckpt");
  auto params = choose_eval_params(trained, cfg.model, ds, val_idx);

  std::vector<Image> images;
  images.reserve(val_idx.size());
  for (int i : val_idx)
    images.push_back(preprocess(ds.samples[i], cfg.model.height,
                                cfg.model.width));
  auto maps = build_global_maps(params, cfg.model, images);

  auto dir = cfg.out_dir / "explain";
  std::filesystem::create_directories(dir);
  const auto meta = make_meta(cfg, "explain");
  for (const auto& m : maps.label_maps) {
    write_attention_raw(m, dir / ("map_" + m.scope + ".raw"));
    render_heatmap(m, dir / ("map_" + m.scope + ".pgm"),
                   dir / ("map_" + m.scope + ".json"), meta);
  }
  write_attention_raw(maps.combined, dir / "map_combined.raw");
  render_heatmap(maps.combined, dir / "map_combined.pgm",
                 dir / "map_combined.json", meta);
}

// ---------------------------------------------------------------------------
// Stage: peppr
// ---------------------------------------------------------------------------

inline void stage_peppr(const RunConfig& cfg) {
  cfg.validate();
  auto map_path = cfg.out_dir / "explain" / "map_combined.raw";
  if (!std::filesystem::exists(map_path))
    throw StageDependencyError("missing attention map: " + map_path.string() +
                               " (run explain first)");
  auto map = read_attention_raw(map_path);

  Dataset ds = load_dataset(dataset_dir(cfg));
  auto split = load_split_json(cfg.out_dir / "split.json");
  auto val_idx = samples_in_set(ds, split, SplitSet::Validation);
  auto test_idx = samples_in_set(ds, split, SplitSet::Test);

  auto trained = load_checkpoint<float>(cfg.model, cfg.out_dir / "model.ckpt");
  auto params = choose_eval_params(trained, cfg.model, ds, val_idx);

  auto sched = build_mask_schedule(map);
  auto report = run_peppr(params, cfg.model, ds, test_idx, sched,
                          cfg.peppr_repeats, mix_seed(cfg.seed, 0x9E99ull));
  write_peppr_csv(report, cfg.model.n_outputs, cfg.out_dir / "peppr.csv",
                  make_meta(cfg, "peppr"));
}

// ---------------------------------------------------------------------------
// Stage: report
// ---------------------------------------------------------------------------

inline void stage_report(const RunConfig& cfg) {
  cfg.validate();
  auto mpath = cfg.out_dir / "metrics.json";
  std::ifstream mf(mpath);
  if (!mf)
    throw StageDependencyError("missing metrics: " + mpath.string() +
                               " (run eval first)");
  nlohmann::json metrics;
  mf >> metrics;

  std::ostringstream md;
  const auto meta = make_meta(cfg, "report");
  md << "# Run report\n\n";
  md << "seed: " << meta.seed << "  \nconfig digest: " << meta.config_digest
     << "\n\n";

  auto table = [&](const std::string& title, const nlohmann::json& labels) {
    md << "## " << title << "\n\n";
    md << "| label | AUC | Brier |\n|---|---|---|\n";
    for (int l = 0; l < kNumLabels; ++l) {
      if (!labels.contains(kLabelNames[l])) continue;
      const auto& m = labels[kLabelNames[l]];
      md << "| " << kLabelNames[l] << " | ";
      if (m.contains("auc") && !m["auc"].is_null())
        md << std::fixed << std::setprecision(4) << m["auc"].get<double>();
      else
        md << "n/a";
      md << " | ";
      if (m.contains("brier") && !m["brier"].is_null())
        md << std::fixed << std::setprecision(4) << m["brier"].get<double>();
      else
        md << "n/a";
      md << " |\n";
    }
    md << "\n";
  };

  if (metrics.contains("multilabel"))
    table("Multi-label model (test)", metrics["multilabel"]["labels"]);
  if (metrics.contains("ensemble"))
    table("Expert ensemble (test)", metrics["ensemble"]["labels"]);
  if (metrics.contains("baseline"))
    table("Age+sex baseline (test)", metrics["baseline"]["labels"]);
  if (metrics.contains("shifted"))
    table("Multi-label model (shifted test)", metrics["shifted"]["labels"]);

  if (std::filesystem::exists(cfg.out_dir / "peppr.csv")) {
    md << "## Attention audit\n\nsee `peppr.csv` for the erasure/restoration"
          " AUC table.\n";
  }

  std::ofstream f(cfg.out_dir / "report.md");
  f << md.str();
  if (!f) throw FormatError("failed writing report.md");
}

}  // namespace uwf
