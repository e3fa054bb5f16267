#pragma once

// SGD with momentum, cosine annealing with warm restarts (updated after
// every mini-batch, so the schedule position takes fractional values),
// per-step parameter EMA, and the L2 weight penalty applied as its analytic
// gradient 2*beta*theta. Step order within a batch: sgd -> ema -> lr tick.

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>

#include "uwf/augment.hpp"
#include "uwf/common.hpp"
#include "uwf/data.hpp"
#include "uwf/datasplit.hpp"
#include "uwf/eval.hpp"
#include "uwf/model.hpp"

namespace uwf {

struct TrainConfig {
  double eta_max = 0.05;   // desk-scale default; the full recipe uses 0.1
  double restart_epochs = 10.0;  // T_i
  double momentum = 0.9;
  double ema_decay = 0.999;
  double weight_penalty = 0.5e-6;
  int epochs = 15;
  int batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(eta_max > 0.0)) throw ConfigError("eta_max must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("momentum must be in [0,1)");
    if (!(ema_decay > 0.0 && ema_decay < 1.0))
      throw ConfigError("ema_decay must be in (0,1)");
    if (weight_penalty < 0.0) throw ConfigError("weight_penalty must be >= 0");
    if (!(restart_epochs > 0.0)) throw ConfigError("restart_epochs must be > 0");
    if (epochs < 1 || batch_size < 1)
      throw ConfigError("epochs and batch_size must be >= 1");
  }
};

inline double cosine_lr(double t_cur, double t_i, double eta_max) {
  return 0.5 * (1.0 + std::cos(M_PI * t_cur / t_i)) * eta_max;
}

template <typename T>
struct SgdState {
  std::vector<std::vector<T>> velocity;  // parallel to trainable entries

  explicit SgdState(const ParameterSet<T>& p) {
    for (const auto& e : p.entries)
      velocity.push_back(e.trainable ? std::vector<T>(e.tensor->size(), T(0))
                                     : std::vector<T>());
  }
};

template <typename T>
void sgd_step(ParameterSet<T>& p, SgdState<T>& state, double lr,
              double momentum, double weight_penalty) {
  for (std::size_t i = 0; i < p.entries.size(); ++i) {
    auto& e = p.entries[i];
    if (!e.trainable) continue;
    e.tensor->ensure_grad();
    auto& v = state.velocity[i];
    const T g = static_cast<T>(momentum);
    const T two_beta = static_cast<T>(2.0 * weight_penalty);
    const T eta = static_cast<T>(lr);
    for (std::size_t k = 0; k < v.size(); ++k) {
      T eff = e.tensor->grad[k] + two_beta * e.tensor->value[k];
      v[k] = g * v[k] + eff;
      e.tensor->value[k] -= eta * v[k];
    }
  }
}

template <typename T>
void ema_update(ParameterSet<T>& p, double decay) {
  const T a = static_cast<T>(decay);
  for (std::size_t i = 0; i < p.entries.size(); ++i) {
    auto& shadow = p.ema[i];
    const auto& live = p.entries[i].tensor->value;
    for (std::size_t k = 0; k < shadow.size(); ++k)
      shadow[k] = a * shadow[k] + (T(1) - a) * live[k];
  }
}

// ---------------------------------------------------------------------------
// Training loop over preprocessed (left-eye-canonical, model-resolution)
// samples. Targets are full label vectors; heads with fewer outputs use the
// leading entries.
// ---------------------------------------------------------------------------

struct TrainSample {
  Image image;  // canonical orientation, model resolution
  LabelVector labels{};
};

struct EpochStats {
  int epoch = 0;
  double lr_end = 0.0;
  double train_loss = 0.0;
  std::vector<double> val_auc_theta;  // per label; NaN when undefined
  std::vector<double> val_auc_ema;
};

template <typename T>
struct TrainResult {
  ParameterSet<T> params;
  std::vector<EpochStats> epochs;
};

// Per-epoch validation callback result: per-label AUCs (NaN where
// undefined) plus the mean positive-vs-negative probability margin over the
// defined labels. The margin feeds epoch selection only; the log keeps the
// AUC columns.
struct ValidationStats {
  std::vector<double> auc;
  double margin = 0.0;
};

template <typename T>
using ValidationFn = std::function<ValidationStats(ParameterSet<T>&)>;

template <typename T>
TrainResult<T> train_loop(const std::vector<TrainSample>& train_samples,
                          const ModelConfig& mcfg, const TrainConfig& tcfg,
                          const AugmentConfig& acfg,
                          const ValidationFn<T>& validate = {}) {
  mcfg.validate();
  tcfg.validate();
  acfg.validate();
  if (train_samples.empty()) throw ConfigError("empty training set");

  TrainResult<T> result{init_parameters<T>(mcfg, tcfg.seed), {}};
  auto& params = result.params;
  SgdState<T> sgd(params);

  const std::size_t n = train_samples.size();
  const std::size_t plane =
      static_cast<std::size_t>(mcfg.in_channels) * mcfg.height * mcfg.width;
  double t_cur = 0.0;
  double lr = cosine_lr(0.0, tcfg.restart_epochs, tcfg.eta_max);

  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  // With a validation callback, the returned parameters are the epoch
  // snapshots with the best validation score — tracked separately for the
  // live weights and the EMA shadow, since they peak at different epochs.
  // The score averages the mean and the worst per-label AUC so one
  // collapsed label cannot hide behind a good average, plus a smaller
  // reward for the probability margin so that among similarly ranked
  // epochs the better separated (more confident) snapshot wins. Without
  // validation the final epoch is returned.
  double best_theta_score = -1.0, best_ema_score = -1.0;
  std::vector<std::vector<T>> best_theta, best_ema;
  // With warm restarts the parameters at a completed cycle end (learning
  // rate ~0) are the converged snapshot; epochs past the restart climb back
  // to high learning rates and drift before re-converging. When at least
  // one cycle completes, the returned parameters are the most recent
  // cycle-end snapshot; otherwise the keep-best-epoch selection applies.
  std::vector<std::vector<T>> cycle_theta, cycle_ema;
  auto epoch_score = [](const ValidationStats& v) {
    double s = 0.0, lo = 2.0;
    int cnt = 0;
    for (double a : v.auc)
      if (!std::isnan(a)) {
        s += a;
        lo = std::min(lo, a);
        ++cnt;
      }
    return cnt ? 0.5 * (s / cnt + lo) + 0.25 * v.margin : -1.0;
  };

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    Rng erng(mix_seed(tcfg.seed, 0xE70C000ull + epoch));
    erng.shuffle(order);

    double loss_sum = 0.0;
    int n_batches = 0;
    for (std::size_t start = 0; start < n; start += tcfg.batch_size) {
      const std::size_t bsz = std::min<std::size_t>(tcfg.batch_size, n - start);
      Rng brng(mix_seed(mix_seed(tcfg.seed, epoch), 0xBA7C000ull + start));

      std::vector<MixupSample> batch;
      batch.reserve(bsz);
      for (std::size_t k = 0; k < bsz; ++k) {
        const auto& s = train_samples[order[start + k]];
        MixupSample m{s.image, s.labels};
        apply_augmentations(m.image, acfg, brng);
        batch.push_back(std::move(m));
      }
      auto blended = mixup_batch(batch, acfg, brng);

      const int bn = static_cast<int>(blended.size());
      auto x = make_tensor<T>(
          Shape{bn, mcfg.in_channels, mcfg.height, mcfg.width});
      std::vector<double> targets;
      targets.reserve(static_cast<std::size_t>(bn) * mcfg.n_outputs);
      for (int b = 0; b < bn; ++b) {
        for (std::size_t k = 0; k < plane; ++k)
          x->value[b * plane + k] = static_cast<T>(blended[b].image.pix[k]);
        for (int l = 0; l < mcfg.n_outputs; ++l)
          targets.push_back(blended[b].labels[l]);
      }

      Tape<T> tape;
      params.zero_grad();
      auto fwd = model_forward(tape, params, mcfg, x, /*train=*/true, brng);
      auto loss =
          multilabel_loss_flat(tape, fwd.logits, targets, /*smoothing=*/true);
      tape.backward(loss);
      loss_sum += static_cast<double>(loss->value[0]);
      ++n_batches;

      sgd_step(params, sgd, lr, tcfg.momentum, tcfg.weight_penalty);
      ema_update(params, tcfg.ema_decay);

      t_cur += static_cast<double>(bsz) / static_cast<double>(n);
      if (t_cur >= tcfg.restart_epochs - 1e-12) {
        t_cur = 0.0;
        cycle_theta.clear();
        for (const auto& e : params.entries)
          cycle_theta.push_back(e.tensor->value);
        cycle_ema = params.ema;
      }
      lr = cosine_lr(t_cur, tcfg.restart_epochs, tcfg.eta_max);
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr_end = lr;
    st.train_loss = loss_sum / std::max(1, n_batches);
    if (validate) {
      auto vs_theta = validate(params);
      auto ema_params = params.with_ema_values();
      auto vs_ema = validate(ema_params);
      st.val_auc_theta = vs_theta.auc;
      st.val_auc_ema = vs_ema.auc;
      if (double sc = epoch_score(vs_theta); sc > best_theta_score) {
        best_theta_score = sc;
        best_theta.clear();
        for (const auto& e : params.entries)
          best_theta.push_back(e.tensor->value);
      }
      if (double sc = epoch_score(vs_ema); sc > best_ema_score) {
        best_ema_score = sc;
        best_ema = params.ema;
      }
    }
    result.epochs.push_back(std::move(st));
  }

  if (!cycle_theta.empty()) {
    for (std::size_t i = 0; i < params.entries.size(); ++i)
      params.entries[i].tensor->value = cycle_theta[i];
    params.ema = cycle_ema;
  } else {
    if (!best_theta.empty())
      for (std::size_t i = 0; i < params.entries.size(); ++i)
        params.entries[i].tensor->value = best_theta[i];
    if (!best_ema.empty()) params.ema = best_ema;
  }
  return result;
}

// Per-label validation AUCs against a dataset subset; NaN where a label has
// a single class.
template <typename T>
ValidationFn<T> make_validator(const Dataset& ds, const std::vector<int>& idxs,
                               const ModelConfig& mcfg) {
  return [&ds, idxs, mcfg](ParameterSet<T>& params) {
    auto preds = score_samples(params, mcfg, ds, idxs);
    ValidationStats out;
    out.auc.assign(mcfg.n_outputs, std::numeric_limits<double>::quiet_NaN());
    double margin_sum = 0.0;
    int margin_cnt = 0;
    for (int l = 0; l < mcfg.n_outputs; ++l) {
      try {
        out.auc[l] = label_auc(preds, l);
      } catch (const UndefinedMetricError&) {
        continue;
      }
      double sp = 0.0, sn = 0.0;
      int np = 0, nn = 0;
      for (const auto& p : preds) {
        if (p.targets[l] >= 0.5) {
          sp += p.scores[l];
          ++np;
        } else {
          sn += p.scores[l];
          ++nn;
        }
      }
      if (np > 0 && nn > 0) {
        margin_sum += sp / np - sn / nn;
        ++margin_cnt;
      }
    }
    if (margin_cnt) out.margin = margin_sum / margin_cnt;
    return out;
  };
}

inline void write_epoch_log(const std::vector<EpochStats>& epochs,
                            const ModelConfig& mcfg,
                            const std::filesystem::path& path,
                            const ArtifactMeta& meta) {
  std::ofstream f(path);
  f << "# seed=" << meta.seed << " config_digest=" << meta.config_digest
    << " stage=" << meta.stage << "\n";
  f << "epoch,lr,train_loss";
  for (int l = 0; l < mcfg.n_outputs; ++l)
    f << ",val_auc_theta_" << kLabelNames[l];
  for (int l = 0; l < mcfg.n_outputs; ++l)
    f << ",val_auc_ema_" << kLabelNames[l];
  f << "\n";
  f << std::setprecision(10);
  for (const auto& e : epochs) {
    f << e.epoch << "," << e.lr_end << "," << e.train_loss;
    auto dump = [&](const std::vector<double>& v) {
      for (int l = 0; l < mcfg.n_outputs; ++l)
        f << "," << (l < static_cast<int>(v.size()) ? v[l] : std::nan(""));
    };
    dump(e.val_auc_theta);
    dump(e.val_auc_ema);
    f << "\n";
  }
  if (!f) throw FormatError("failed writing epoch log");
}

// ---------------------------------------------------------------------------
// Main-model training from a dataset + split
// ---------------------------------------------------------------------------

template <typename T>
std::vector<TrainSample> collect_train_samples(const Dataset& ds,
                                               const std::vector<int>& idxs,
                                               const ModelConfig& mcfg) {
  std::vector<TrainSample> out;
  out.reserve(idxs.size());
  for (int i : idxs) {
    TrainSample s;
    s.image = preprocess(ds.samples[i], mcfg.height, mcfg.width);
    s.labels = ds.samples[i].labels;
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
TrainResult<T> train_model(const Dataset& ds, const SplitAssignment& split,
                           const ModelConfig& mcfg, const TrainConfig& tcfg,
                           const AugmentConfig& acfg) {
  auto train_idx = samples_in_set(ds, split, SplitSet::Train);
  auto val_idx = samples_in_set(ds, split, SplitSet::Validation);
  if (train_idx.empty()) throw ConfigError("train split is empty");
  auto samples = collect_train_samples<T>(ds, train_idx, mcfg);
  auto validator =
      val_idx.empty() ? ValidationFn<T>{} : make_validator<T>(ds, val_idx, mcfg);
  return train_loop<T>(samples, mcfg, tcfg, acfg, validator);
}

// ---------------------------------------------------------------------------
// Ensemble of experts: one binary model per disease, trained on that
// disease's images plus an equal count of healthy images from the train
// split. Validation picks theta vs theta_EMA per expert.
// ---------------------------------------------------------------------------

template <typename T>
struct ExpertModel {
  int disease = 0;  // 0..6
  ParameterSet<T> params;
  bool use_ema = false;
  double val_auc = 0.0;
};

template <typename T>
ExpertModel<T> train_expert(const Dataset& ds, const SplitAssignment& split,
                            int disease, const ModelConfig& base_cfg,
                            const TrainConfig& tcfg,
                            const AugmentConfig& acfg) {
  ModelConfig mcfg = base_cfg;
  mcfg.n_outputs = 1;

  const int label = disease_to_label(disease);
  auto train_idx = samples_in_set(ds, split, SplitSet::Train);
  std::vector<int> pos, healthy;
  for (int i : train_idx) {
    if (ds.samples[i].labels[label] >= 0.5)
      pos.push_back(i);
    else if (ds.samples[i].labels[0] < 0.5)
      healthy.push_back(i);
  }
  if (pos.empty())
    throw ConfigError(std::string("no training images for disease ") +
                      kLabelNames[label]);
  Rng rng(mix_seed(tcfg.seed, 0xE8BE87ull + disease));
  rng.shuffle(healthy);
  if (healthy.size() > pos.size()) healthy.resize(pos.size());

  std::vector<TrainSample> samples;
  for (int i : pos) {
    TrainSample s;
    s.image = preprocess(ds.samples[i], mcfg.height, mcfg.width);
    s.labels.fill(0.0);
    s.labels[0] = 1.0;
    samples.push_back(std::move(s));
  }
  for (int i : healthy) {
    TrainSample s;
    s.image = preprocess(ds.samples[i], mcfg.height, mcfg.width);
    s.labels.fill(0.0);
    samples.push_back(std::move(s));
  }

  TrainConfig etcfg = tcfg;
  etcfg.seed = mix_seed(tcfg.seed, 0xE8BEADull + disease);

  // same recipe as the main model, including keep-best-epoch on the
  // validation split, scored on this expert's disease label
  auto val_idx = samples_in_set(ds, split, SplitSet::Validation);
  auto eval_auc = [&](ParameterSet<T>& params) {
    auto preds = score_samples(params, mcfg, ds, val_idx);
    std::vector<double> s, w;
    std::vector<int> y;
    for (const auto& p : preds) {
      s.push_back(p.scores[0]);
      y.push_back(ds.samples[p.image_index].labels[label] >= 0.5 ? 1 : 0);
      w.push_back(p.weight);
    }
    try {
      return weighted_auc(s, y, w);
    } catch (const UndefinedMetricError&) {
      return 0.5;
    }
  };

  auto eval_margin = [&](ParameterSet<T>& params) {
    auto preds = score_samples(params, mcfg, ds, val_idx);
    double sp = 0.0, sn = 0.0;
    int np = 0, nn = 0;
    for (const auto& p : preds) {
      if (ds.samples[p.image_index].labels[label] >= 0.5) {
        sp += p.scores[0];
        ++np;
      } else {
        sn += p.scores[0];
        ++nn;
      }
    }
    return np > 0 && nn > 0 ? sp / np - sn / nn : 0.0;
  };

  ValidationFn<T> validator = [&eval_auc, &eval_margin](ParameterSet<T>& params) {
    return ValidationStats{{eval_auc(params)}, eval_margin(params)};
  };
  auto result = train_loop<T>(samples, mcfg, etcfg, acfg, validator);

  ExpertModel<T> expert{disease, std::move(result.params), false, 0.0};
  double auc_theta = eval_auc(expert.params);
  auto ema_params = expert.params.with_ema_values();
  double auc_ema = eval_auc(ema_params);
  expert.use_ema = auc_ema >= auc_theta;
  expert.val_auc = std::max(auc_theta, auc_ema);
  return expert;
}

template <typename T>
std::vector<ExpertModel<T>> train_expert_ensemble(const Dataset& ds,
                                                  const SplitAssignment& split,
                                                  const ModelConfig& base_cfg,
                                                  const TrainConfig& tcfg,
                                                  const AugmentConfig& acfg) {
  std::vector<ExpertModel<T>> experts;
  for (int d = 0; d < kNumDiseases; ++d)
    experts.push_back(train_expert<T>(ds, split, d, base_cfg, tcfg, acfg));
  return experts;
}

// ---------------------------------------------------------------------------
// Age+sex logistic baseline: one regularized logistic regression per label,
// plain full-batch gradient descent, min-max scaled age, C = 1.
// ---------------------------------------------------------------------------

struct LogisticBaseline {
  double age_min = 0.0, age_max = 1.0;
  // per label: w_age, w_sex, bias
  std::array<std::array<double, 3>, kNumLabels> coef{};

  static LogisticBaseline fit(const Dataset& ds,
                              const std::vector<int>& train_idx) {
    if (train_idx.empty()) throw ConfigError("baseline: empty training set");
    LogisticBaseline m;
    m.age_min = 1e300;
    m.age_max = -1e300;
    for (int i : train_idx) {
      m.age_min = std::min(m.age_min, ds.samples[i].age);
      m.age_max = std::max(m.age_max, ds.samples[i].age);
    }
    if (m.age_max <= m.age_min) m.age_max = m.age_min + 1.0;

    const std::size_t n = train_idx.size();
    std::vector<std::array<double, 2>> x(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& s = ds.samples[train_idx[k]];
      x[k] = {(s.age - m.age_min) / (m.age_max - m.age_min),
              s.sex == Sex::Male ? 1.0 : 0.0};
    }
    const double C = 1.0;
    for (int l = 0; l < kNumLabels; ++l) {
      double w0 = 0.0, w1 = 0.0, b = 0.0;
      for (int it = 0; it < 2000; ++it) {
        double g0 = w0 / C, g1 = w1 / C, gb = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          double z = w0 * x[k][0] + w1 * x[k][1] + b;
          double p = 1.0 / (1.0 + std::exp(-z));
          double d = p - ds.samples[train_idx[k]].labels[l];
          g0 += d * x[k][0];
          g1 += d * x[k][1];
          gb += d;
        }
        const double lr = 2.0 / n;
        w0 -= lr * g0;
        w1 -= lr * g1;
        b -= lr * gb;
      }
      m.coef[l] = {w0, w1, b};
    }
    return m;
  }

  LabelVector predict(const ImageSample& s) const {
    LabelVector out{};
    double xa = (s.age - age_min) / (age_max - age_min);
    double xs = s.sex == Sex::Male ? 1.0 : 0.0;
    for (int l = 0; l < kNumLabels; ++l) {
      double z = coef[l][0] * xa + coef[l][1] * xs + coef[l][2];
      out[l] = 1.0 / (1.0 + std::exp(-z));
    }
    return out;
  }
};

}  // namespace uwf
