#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "valign/metrics.hpp"

namespace valign {

inline constexpr std::string_view kSepMarker = "[sep]";

// "{value} [sep] {content} [sep]", the judge's input text.
class SerializedInput {
 public:
  const std::string& text() const noexcept { return text_; }

 private:
  explicit SerializedInput(std::string text) : text_(std::move(text)) {}
  friend SerializedInput serialize_input(std::string_view value, std::string_view content);

  std::string text_;
};

inline SerializedInput serialize_input(std::string_view value, std::string_view content) {
  if (text::trim(value).empty()) throw InputError("cannot serialize an empty value");
  if (text::trim(content).empty()) throw InputError("cannot serialize empty content");
  if (value.find(kSepMarker) != std::string_view::npos || content.find(kSepMarker) != std::string_view::npos) {
    throw InputError("input contains the reserved marker [sep]");
  }
  std::string out;
  out.reserve(value.size() + content.size() + 14);
  out.append(value).append(" [sep] ").append(content).append(" [sep]");
  return SerializedInput(std::move(out));
}

using SparseVector = std::vector<std::pair<std::uint32_t, double>>;  // sorted by bucket

inline constexpr std::size_t kDefaultFeatureDim = std::size_t{1} << 18;
inline constexpr std::uint64_t kDefaultHashSeed = 0x5eed;

inline bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

inline std::uint32_t feature_bucket(std::string_view feature, std::size_t feature_dim, std::uint64_t hash_seed) {
  const std::uint64_t h = fnv1a64(feature, 0xcbf29ce484222325ULL ^ mix64(hash_seed));
  return static_cast<std::uint32_t>(h & (feature_dim - 1));
}

// Lowercased whitespace tokens; unigram features "u <tok>" and adjacent
// bigram features "b <tok> <tok>", hashed to buckets with counts.
inline SparseVector featurize(const SerializedInput& input, std::size_t feature_dim, std::uint64_t hash_seed) {
  if (!is_power_of_two(feature_dim)) throw ConfigError("feature_dim must be a power of two >= 2");
  const auto tokens = text::split_whitespace(text::to_lower(input.text()));
  std::vector<std::uint32_t> buckets;
  buckets.reserve(tokens.size() * 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    buckets.push_back(feature_bucket("u " + tokens[i], feature_dim, hash_seed));
    if (i + 1 < tokens.size()) {
      buckets.push_back(feature_bucket("b " + tokens[i] + " " + tokens[i + 1], feature_dim, hash_seed));
    }
  }
  std::sort(buckets.begin(), buckets.end());
  SparseVector out;
  for (auto b : buckets) {
    if (!out.empty() && out.back().first == b) {
      out.back().second += 1.0;
    } else {
      out.emplace_back(b, 1.0);
    }
  }
  return out;
}

struct Prediction {
  Label label = Label::sexist;
  std::array<double, kNumLabels> probabilities{};
};

// Argmax with ties resolved by label order.
inline Label argmax_label(const std::array<double, kNumLabels>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumLabels; ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return kLabelOrder[best];
}

inline std::array<double, kNumLabels> softmax(const std::array<double, kNumLabels>& logits) {
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::array<double, kNumLabels> p{};
  double z = 0.0;
  for (std::size_t i = 0; i < kNumLabels; ++i) z += (p[i] = std::exp(logits[i] - hi));
  for (auto& v : p) v /= z;
  return p;
}

// Multinomial logistic regression over hashed features.
struct ClassifierModel {
  std::size_t feature_dim = kDefaultFeatureDim;
  std::uint64_t hash_seed = kDefaultHashSeed;
  std::vector<double> weights;  // label-major, kNumLabels x feature_dim
  std::array<double, kNumLabels> bias{};

  static ClassifierModel zeros(std::size_t feature_dim, std::uint64_t hash_seed) {
    if (!is_power_of_two(feature_dim)) throw ConfigError("feature_dim must be a power of two >= 2");
    ClassifierModel m;
    m.feature_dim = feature_dim;
    m.hash_seed = hash_seed;
    m.weights.assign(kNumLabels * feature_dim, 0.0);
    return m;
  }

  std::array<double, kNumLabels> logits(const SparseVector& x) const {
    std::array<double, kNumLabels> out = bias;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      const double* row = weights.data() + l * feature_dim;
      for (const auto& [b, v] : x) out[l] += row[b] * v;
    }
    return out;
  }

  SparseVector features(std::string_view value, std::string_view content) const {
    return featurize(serialize_input(value, content), feature_dim, hash_seed);
  }

  bool finite() const {
    auto ok = [](double v) { return std::isfinite(v); };
    return std::all_of(weights.begin(), weights.end(), ok) && std::all_of(bias.begin(), bias.end(), ok);
  }

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

inline Prediction predict_features(const ClassifierModel& model, const SparseVector& x) {
  Prediction p;
  p.probabilities = softmax(model.logits(x));
  p.label = argmax_label(p.probabilities);
  return p;
}

inline Prediction predict(const ClassifierModel& model, std::string_view value, std::string_view content) {
  return predict_features(model, model.features(value, content));
}

inline std::vector<Prediction> predict_all(const ClassifierModel& model, const std::vector<Triplet>& test) {
  std::vector<Prediction> out;
  out.reserve(test.size());
  for (const auto& t : test) out.push_back(predict(model, t.value, t.content));
  return out;
}

struct TrainConfig {
  std::size_t feature_dim = kDefaultFeatureDim;
  std::uint64_t hash_seed = kDefaultHashSeed;
  double learning_rate = 5e-2;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> train_loss;  // mean cross-entropy per epoch
  std::vector<double> val_weighted_f1;
  std::size_t best_epoch = 0;      // 1-based
  double best_val_weighted_f1 = 0.0;
  bool early_stopped = false;
};

struct TrainOutcome {
  ClassifierModel model;
  TrainHistory history;
};

inline std::vector<Label> labels_of(const std::vector<Prediction>& preds) {
  std::vector<Label> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.label);
  return out;
}

inline double mean_cross_entropy(const ClassifierModel& model, const std::vector<SparseVector>& xs,
                                 const std::vector<Label>& ys) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto p = softmax(model.logits(xs[i]));
    loss -= std::log(std::max(p[index_of(ys[i])], std::numeric_limits<double>::min()));
  }
  return xs.empty() ? 0.0 : loss / static_cast<double>(xs.size());
}

// Mini-batch gradient descent on softmax cross-entropy, i.e. maximizing
// log P(label | value, content). Keeps the model with the best validation
// weighted F1 and stops after `patience` epochs without improvement.
inline TrainOutcome train_classifier(const std::vector<Triplet>& train, const std::vector<Triplet>& val,
                                     const TrainConfig& cfg) {
  if (train.empty()) throw InputError("training set is empty");
  if (val.empty()) throw InputError("validation set is empty");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  std::array<bool, kNumLabels> present{};
  for (const auto& t : train) present[index_of(t.label)] = true;
  for (auto l : kLabelOrder) {
    if (!present[index_of(l)]) throw InputError("training set lacks label " + std::string(to_string(l)));
  }

  TrainOutcome out{ClassifierModel::zeros(cfg.feature_dim, cfg.hash_seed), {}};
  ClassifierModel model = out.model;

  auto featurize_all = [&](const std::vector<Triplet>& ts) {
    std::vector<SparseVector> xs;
    xs.reserve(ts.size());
    for (const auto& t : ts) xs.push_back(model.features(t.value, t.content));
    return xs;
  };
  const auto train_x = featurize_all(train);
  const auto val_x = featurize_all(val);
  const auto train_y = gold_labels(train);
  const auto val_y = gold_labels(val);

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::array<double, kNumLabels>> residuals(cfg.batch_size);

  std::size_t since_best = 0;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t n = end - start;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[start + k];
        auto p = softmax(model.logits(train_x[i]));
        const std::size_t y = index_of(train_y[i]);
        epoch_loss -= std::log(std::max(p[y], std::numeric_limits<double>::min()));
        p[y] -= 1.0;
        residuals[k] = p;
      }
      const double step = cfg.learning_rate / static_cast<double>(n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto& x = train_x[order[start + k]];
        for (std::size_t l = 0; l < kNumLabels; ++l) {
          const double g = step * residuals[k][l];
          double* row = model.weights.data() + l * model.feature_dim;
          for (const auto& [b, v] : x) row[b] -= g * v;
          model.bias[l] -= g;
        }
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss) || !model.finite()) {
      char lr[32];
      std::snprintf(lr, sizeof lr, "%g", cfg.learning_rate);
      throw InvariantError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                           " (learning rate " + lr + ")");
    }
    out.history.train_loss.push_back(epoch_loss);

    std::vector<Label> val_pred;
    val_pred.reserve(val_x.size());
    for (const auto& x : val_x) val_pred.push_back(predict_features(model, x).label);
    const double wf1 = compute_metrics(val_y, val_pred).weighted_f1;
    out.history.val_weighted_f1.push_back(wf1);

    if (!have_best || wf1 > out.history.best_val_weighted_f1) {
      have_best = true;
      out.history.best_val_weighted_f1 = wf1;
      out.history.best_epoch = epoch;
      out.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      out.history.early_stopped = true;
      break;
    }
  }
  return out;
}

inline std::array<double, kNumLabels> label_distribution(const std::vector<Triplet>& triplets) {
  std::array<double, kNumLabels> dist{};
  for (const auto& t : triplets) dist[index_of(t.label)] += 1.0;
  for (auto& d : dist) d /= static_cast<double>(std::max<std::size_t>(1, triplets.size()));
  return dist;
}

// Labels drawn i.i.d. from `distribution`; probabilities are one-hot on the draw.
inline std::vector<Prediction> random_baseline(const std::array<double, kNumLabels>& distribution,
                                               const std::vector<Triplet>& test, std::uint64_t seed) {
  double total = 0.0;
  for (double p : distribution) {
    if (!std::isfinite(p) || p < 0.0) throw InputError("invalid label distribution: negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InputError("invalid label distribution: entries sum to " + std::to_string(total));

  Rng rng(seed);
  std::vector<Prediction> out(test.size());
  for (auto& pred : out) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = kNumLabels - 1;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      acc += distribution[i];
      if (u < acc && distribution[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (distribution[pick] == 0.0 && pick > 0) --pick;
    pred.label = kLabelOrder[pick];
    pred.probabilities[pick] = 1.0;
  }
  return out;
}

// Model container: "VALIGNM1", u32 version, u64 feature_dim, u64 hash_seed,
// u32 label count + length-prefixed label names, bias, u64 non-zero column
// count, then (u32 bucket, f64 x labels) per non-zero column. Little endian.
namespace model_io {

inline constexpr char kMagic[8] = {'V', 'A', 'L', 'I', 'G', 'N', 'M', '1'};
inline constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "model files are written in host (little endian) order");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw InputError("model file truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw InputError("model file truncated");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace model_io

inline std::string serialize_model(const ClassifierModel& m) {
  using model_io::put;
  std::string out(model_io::kMagic, sizeof(model_io::kMagic));
  put<std::uint32_t>(out, model_io::kVersion);
  put<std::uint64_t>(out, m.feature_dim);
  put<std::uint64_t>(out, m.hash_seed);
  put<std::uint32_t>(out, kNumLabels);
  for (auto l : kLabelOrder) {
    const auto name = to_string(l);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
  }
  for (double b : m.bias) put<double>(out, b);
  std::vector<std::uint32_t> nonzero;
  for (std::size_t b = 0; b < m.feature_dim; ++b) {
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      if (m.weights[l * m.feature_dim + b] != 0.0) {
        nonzero.push_back(static_cast<std::uint32_t>(b));
        break;
      }
    }
  }
  put<std::uint64_t>(out, nonzero.size());
  for (auto b : nonzero) {
    put<std::uint32_t>(out, b);
    for (std::size_t l = 0; l < kNumLabels; ++l) put<double>(out, m.weights[l * m.feature_dim + b]);
  }
  return out;
}

inline ClassifierModel deserialize_model(const std::string& bytes) {
  model_io::Reader in(bytes);
  if (in.get_bytes(sizeof(model_io::kMagic)) != std::string(model_io::kMagic, sizeof(model_io::kMagic))) {
    throw InputError("not a valign model file");
  }
  if (const auto v = in.get<std::uint32_t>(); v != model_io::kVersion) {
    throw InputError("unsupported model version " + std::to_string(v));
  }
  const auto dim = in.get<std::uint64_t>();
  const auto seed = in.get<std::uint64_t>();
  if (!is_power_of_two(dim) || dim > (std::uint64_t{1} << 32)) throw InputError("invalid feature_dim in model file");
  auto m = ClassifierModel::zeros(dim, seed);
  if (in.get<std::uint32_t>() != kNumLabels) throw InputError("model label count mismatch");
  for (auto l : kLabelOrder) {
    const auto len = in.get<std::uint32_t>();
    if (in.get_bytes(len) != to_string(l)) throw InputError("model label order mismatch");
  }
  for (auto& b : m.bias) b = in.get<double>();
  const auto nnz = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < nnz; ++i) {
    const auto b = in.get<std::uint32_t>();
    if (b >= dim) throw InputError("bucket out of range in model file");
    for (std::size_t l = 0; l < kNumLabels; ++l) m.weights[l * dim + b] = in.get<double>();
  }
  if (!in.done()) throw InputError("trailing bytes in model file");
  if (!m.finite()) throw InputError("model file contains non-finite weights");
  return m;
}

inline void save_model(const ClassifierModel& m, const std::filesystem::path& path) {
  write_file(path, serialize_model(m));
}

inline ClassifierModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

// preds.jsonl rows; `label` empty means abstention.
struct PredictionRow {
  std::size_t index = 0;
  std::optional<Label> label;
  std::array<double, kNumLabels> probabilities{};
};

inline constexpr std::string_view kAbstainLabel = "abstain";

inline std::string predictions_to_jsonl(const std::vector<PredictionRow>& rows) {
  return to_jsonl(rows, [](const PredictionRow& r) {
    return ordered_json{{"index", r.index},
                        {"label", r.label ? std::string(to_string(*r.label)) : std::string(kAbstainLabel)},
                        {"probabilities", r.probabilities}};
  });
}

inline std::vector<PredictionRow> rows_from(const std::vector<Prediction>& preds) {
  std::vector<PredictionRow> rows;
  rows.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) rows.push_back({i, preds[i].label, preds[i].probabilities});
  return rows;
}

// Reads a predictions file and checks it is line-aligned with a test set of
// `expected` rows.
inline std::vector<PredictionRow> load_predictions(const std::filesystem::path& path, std::size_t expected) {
  std::vector<PredictionRow> rows;
  for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
    PredictionRow r;
    r.index = obj.at("index").get<std::size_t>();
    if (r.index != rows.size()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": index " + std::to_string(r.index) +
                       " out of order (expected " + std::to_string(rows.size()) + ")");
    }
    const auto label = obj.at("label").get<std::string>();
    if (label != kAbstainLabel) r.label = parse_label(label);
    const auto probs = obj.at("probabilities").get<std::vector<double>>();
    if (probs.size() != kNumLabels) throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 3 probabilities");
    std::copy(probs.begin(), probs.end(), r.probabilities.begin());
    if (r.label) {
      double sum = 0.0;
      for (double v : probs) {
        if (!std::isfinite(v) || v < 0.0) throw InputError(path.string() + ":" + std::to_string(lineno) + ": invalid probability");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": probabilities sum to " + std::to_string(sum));
      }
    }
    rows.push_back(r);
  });
  if (rows.size() != expected) {
    throw InputError("predictions file " + path.string() + " has " + std::to_string(rows.size()) +
                     " rows but the test set has " + std::to_string(expected));
  }
  return rows;
}

}  // namespace valign
