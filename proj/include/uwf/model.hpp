#pragma once

// Reduced-depth residual backbone plus the prediction head: one hidden
// layer of 128 PReLU units, dropout 0.1 after pooling and 0.5 after the
// hidden layer, eight sigmoid outputs. Callers receive raw logits; the
// last-stage feature maps are retained for attention mapping.

#include <filesystem>
#include <fstream>
#include <map>

#include "uwf/common.hpp"
#include "uwf/data.hpp"
#include "uwf/tensor.hpp"

namespace uwf {

struct ModelConfig {
  int in_channels = 2;
  int height = 96;
  int width = 128;
  int stem_stride = 2;
  std::vector<int> stage_widths = {16, 32, 64};
  std::vector<int> stage_strides = {2, 2, 1};
  int blocks_per_stage = 2;
  int head_hidden = 128;
  double dropout_pool = 0.1;
  double dropout_hidden = 0.5;
  double prelu_init = 0.25;
  int n_outputs = 8;

  void validate() const {
    if (n_outputs < 1) throw ConfigError("n_outputs must be >= 1");
    if (stage_widths.empty() || stage_widths.size() != stage_strides.size())
      throw ConfigError("stage_widths/stage_strides mismatch");
    if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
    if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  }
};

template <typename T>
struct ParameterSet {
  struct Entry {
    std::string name;
    TensorPtr<T> tensor;
    bool trainable = true;
  };
  std::vector<Entry> entries;
  std::vector<std::vector<T>> ema;  // parallel to entries
  std::map<std::string, int> index;

  TensorPtr<T>& get(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw ContractError("unknown parameter: " + name);
    return entries[it->second].tensor;
  }

  TensorPtr<T>& declare(const std::string& name, Shape shape, bool trainable) {
    Entry e;
    e.name = name;
    e.tensor = make_tensor<T>(std::move(shape), trainable);
    e.trainable = trainable;
    index[name] = static_cast<int>(entries.size());
    entries.push_back(std::move(e));
    return entries.back().tensor;
  }

  void init_ema_from_values() {
    ema.clear();
    for (const auto& e : entries) ema.push_back(e.tensor->value);
  }

  void zero_grad() {
    for (auto& e : entries)
      if (e.trainable) e.tensor->zero_grad();
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries)
      if (e.trainable) n += e.tensor->size();
    return n;
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.tensor->size();
    return n;
  }

  // A standalone copy whose live values are the EMA shadow (for evaluating
  // the averaged model without touching the training parameters).
  ParameterSet with_ema_values() const {
    ParameterSet out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& t = out.declare(entries[i].name, entries[i].tensor->shape,
                            entries[i].trainable);
      t->value = ema[i];
    }
    out.init_ema_from_values();
    return out;
  }
};

namespace detail {

template <typename T>
void kaiming_uniform(std::vector<T>& w, int fan_in, Rng& rng) {
  // uniform Kaiming with a = sqrt(5): bound = sqrt(6 / ((1+a^2) fan_in))
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace detail

template <typename T>
ParameterSet<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterSet<T> p;
  Rng rng(mix_seed(seed, 0x4d4f44454cull));  // "MODEL"

  auto conv = [&](const std::string& name, int cout, int cin, int k) {
    auto& w = p.declare(name + ".w", Shape{cout, cin, k, k}, true);
    detail::kaiming_uniform(w->value, cin * k * k, rng);
  };
  auto bn = [&](const std::string& name, int c) {
    auto& g = p.declare(name + ".gamma", Shape{c}, true);
    std::fill(g->value.begin(), g->value.end(), T(1));
    p.declare(name + ".beta", Shape{c}, true);
    p.declare(name + ".running_mean", Shape{c}, false);
    auto& rv = p.declare(name + ".running_var", Shape{c}, false);
    std::fill(rv->value.begin(), rv->value.end(), T(1));
  };

  conv("stem.conv", cfg.stage_widths[0], cfg.in_channels, 3);
  bn("stem.bn", cfg.stage_widths[0]);

  int cin = cfg.stage_widths[0];
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    const int cout = cfg.stage_widths[s];
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const std::string base =
          "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = b == 0 ? cfg.stage_strides[s] : 1;
      conv(base + ".conv1", cout, cin, 3);
      bn(base + ".bn1", cout);
      conv(base + ".conv2", cout, cout, 3);
      bn(base + ".bn2", cout);
      if (stride != 1 || cin != cout) {
        conv(base + ".down.conv", cout, cin, 1);
        bn(base + ".down.bn", cout);
      }
      cin = cout;
    }
  }

  const int feat = cfg.stage_widths.back();
  auto& w1 = p.declare("head.fc1.w", Shape{cfg.head_hidden, feat}, true);
  detail::kaiming_uniform(w1->value, feat, rng);
  auto& b1 = p.declare("head.fc1.b", Shape{cfg.head_hidden}, true);
  detail::kaiming_uniform(b1->value, feat, rng);
  auto& alpha = p.declare("head.prelu.alpha", Shape{cfg.head_hidden}, true);
  std::fill(alpha->value.begin(), alpha->value.end(), T(cfg.prelu_init));
  auto& w2 = p.declare("head.fc2.w", Shape{cfg.n_outputs, cfg.head_hidden},
                       true);
  detail::kaiming_uniform(w2->value, cfg.head_hidden, rng);
  auto& b2 = p.declare("head.fc2.b", Shape{cfg.n_outputs}, true);
  detail::kaiming_uniform(b2->value, cfg.head_hidden, rng);

  p.init_ema_from_values();
  return p;
}

template <typename T>
struct ForwardResult {
  TensorPtr<T> logits;    // [N, n_outputs], pre-sigmoid
  TensorPtr<T> features;  // last-stage activation maps [N, C, Hf, Wf]
};

template <typename T>
ForwardResult<T> model_forward(Tape<T>& tape, ParameterSet<T>& p,
                               const ModelConfig& cfg, const TensorPtr<T>& x,
                               bool train, Rng& rng) {
  if (x->shape.size() != 4 || x->shape[1] != cfg.in_channels ||
      x->shape[2] != cfg.height || x->shape[3] != cfg.width)
    throw ShapeError("model_forward: input shape " + shape_str(x->shape) +
                     " does not match config");

  auto bn = [&](const std::string& name, const TensorPtr<T>& in) {
    return tape.batchnorm(in, p.get(name + ".gamma"), p.get(name + ".beta"),
                          p.get(name + ".running_mean"),
                          p.get(name + ".running_var"), train);
  };

  auto h = tape.conv2d(x, p.get("stem.conv.w"), nullptr, cfg.stem_stride, 1);
  h = tape.relu(bn("stem.bn", h));

  int cin = cfg.stage_widths[0];
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    const int cout = cfg.stage_widths[s];
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const std::string base =
          "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = b == 0 ? cfg.stage_strides[s] : 1;
      auto y = tape.relu(
          bn(base + ".bn1",
             tape.conv2d(h, p.get(base + ".conv1.w"), nullptr, stride, 1)));
      y = bn(base + ".bn2",
             tape.conv2d(y, p.get(base + ".conv2.w"), nullptr, 1, 1));
      TensorPtr<T> shortcut = h;
      if (stride != 1 || cin != cout)
        shortcut = bn(base + ".down.bn",
                      tape.conv2d(h, p.get(base + ".down.conv.w"), nullptr,
                                  stride, 0));
      h = tape.relu(tape.add(y, shortcut));
      cin = cout;
    }
  }
  auto features = h;

  auto v = tape.global_avg_pool(features);
  v = tape.dropout(v, cfg.dropout_pool, rng, train);
  v = tape.linear(v, p.get("head.fc1.w"), p.get("head.fc1.b"));
  v = tape.prelu(v, p.get("head.prelu.alpha"));
  v = tape.dropout(v, cfg.dropout_hidden, rng, train);
  auto logits = tape.linear(v, p.get("head.fc2.w"), p.get("head.fc2.b"));
  return {logits, features};
}

// Smoothed or raw multi-label logistic loss; mean over batch rows, summed
// over labels.
template <typename T>
TensorPtr<T> multilabel_loss(Tape<T>& tape, const TensorPtr<T>& logits,
                             const std::vector<LabelVector>& targets,
                             bool smoothing) {
  if (logits->shape.size() != 2 ||
      logits->shape[0] != static_cast<int>(targets.size()))
    throw ShapeError("multilabel_loss: target batch size mismatch");
  const int n_out = logits->shape[1];
  std::vector<T> t;
  t.reserve(targets.size() * n_out);
  for (const auto& y : targets) {
    check_label_vector(y);
    for (int l = 0; l < n_out; ++l) {
      double v = y[l];
      t.push_back(static_cast<T>(smoothing ? 0.05 + 0.94 * v : v));
    }
  }
  return tape.bce_with_logits(logits, t);
}

// Flat-target variant for heads with fewer than eight outputs.
template <typename T>
TensorPtr<T> multilabel_loss_flat(Tape<T>& tape, const TensorPtr<T>& logits,
                                  const std::vector<double>& flat_targets,
                                  bool smoothing) {
  if (static_cast<std::size_t>(logits->size()) != flat_targets.size())
    throw ShapeError("multilabel_loss_flat: target count mismatch");
  std::vector<T> t;
  t.reserve(flat_targets.size());
  for (double v : flat_targets) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ContractError("loss target outside [0,1]");
    t.push_back(static_cast<T>(smoothing ? 0.05 + 0.94 * v : v));
  }
  return tape.bce_with_logits(logits, t);
}

// ---------------------------------------------------------------------------
// Checkpoint: magic "UWFM", u32 version, u64 config digest, u64 seed,
// u64 value count, then theta followed by theta_EMA as little-endian
// float32 in declaration order.
// ---------------------------------------------------------------------------

template <typename T>
void save_checkpoint(const ParameterSet<T>& p,
                     const std::filesystem::path& path, std::uint64_t digest,
                     std::uint64_t seed) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write checkpoint: " + path.string());
  f.write("UWFM", 4);
  std::uint32_t version = 1;
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&digest), 8);
  f.write(reinterpret_cast<const char*>(&seed), 8);
  std::uint64_t count = p.total_values();
  f.write(reinterpret_cast<const char*>(&count), 8);
  auto write_stream = [&](bool use_ema) {
    for (std::size_t i = 0; i < p.entries.size(); ++i) {
      const auto& vals = use_ema ? p.ema[i] : p.entries[i].tensor->value;
      for (T v : vals) {
        float fv = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&fv), 4);
      }
    }
  };
  write_stream(false);
  write_stream(true);
  if (!f) throw FormatError("checkpoint write failed: " + path.string());
}

template <typename T>
ParameterSet<T> load_checkpoint(const ModelConfig& cfg,
                                const std::filesystem::path& path,
                                std::uint64_t* digest_out = nullptr,
                                std::uint64_t* seed_out = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw StageDependencyError("missing checkpoint: " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "UWFM", 4) != 0)
    throw FormatError("bad checkpoint magic in " + path.string());
  std::uint32_t version;
  std::uint64_t digest, seed, count;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&digest), 8);
  f.read(reinterpret_cast<char*>(&seed), 8);
  f.read(reinterpret_cast<char*>(&count), 8);
  if (!f) throw FormatError("truncated checkpoint header");

  ParameterSet<T> p = init_parameters<T>(cfg, 0);
  if (count != p.total_values())
    throw FormatError("checkpoint value count does not match model config");
  auto read_stream = [&](bool to_ema) {
    for (std::size_t i = 0; i < p.entries.size(); ++i) {
      auto& vals = to_ema ? p.ema[i] : p.entries[i].tensor->value;
      for (auto& v : vals) {
        float fv;
        f.read(reinterpret_cast<char*>(&fv), 4);
        v = static_cast<T>(fv);
      }
    }
  };
  read_stream(false);
  read_stream(true);
  if (!f) throw FormatError("truncated checkpoint data");
  if (digest_out) *digest_out = digest;
  if (seed_out) *seed_out = seed;
  return p;
}

}  // namespace uwf
