#include "pstory/classifier.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "pstory/adam.hpp"
#include "pstory/error.hpp"

namespace pstory {

void validate(const ClassifierConfig& cfg) {
  if (cfg.embed_dim == 0 || cfg.channels == 0) throw ConfigError("classifier: embed_dim and channels must be positive");
  if (cfg.widths.empty()) throw ConfigError("classifier: at least one filter width is required");
  for (auto w : cfg.widths) {
    if (w == 0) throw ConfigError("classifier: filter widths must be positive");
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("classifier: dropout must lie in [0, 1)");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("classifier: learning_rate must be positive");
  if (cfg.weight_decay < 0.0) throw ConfigError("classifier: weight_decay must be non-negative");
  if (cfg.batch_size == 0) throw ConfigError("classifier: batch_size must be positive");
}

std::vector<ClassifierExample> to_examples(std::span<const PersonaUtterance> utts, const Vocabulary& vocab) {
  std::vector<ClassifierExample> out;
  out.reserve(utts.size());
  for (const auto& u : utts) {
    if (!u.label) throw DataError("classifier example without a label");
    ClassifierExample ex;
    for (const auto& t : u.tokens) ex.ids.push_back(vocab.id(t));
    ex.label = *u.label;
    out.push_back(std::move(ex));
  }
  return out;
}

TextCnnClassifier::TextCnnClassifier(int persona, std::size_t vocab_size, ClassifierConfig cfg)
    : persona_(persona), vocab_size_(vocab_size), cfg_(std::move(cfg)) {
  validate(cfg_);
  if (vocab_size_ == 0) throw ConfigError("classifier: empty vocabulary");
  const std::uint64_t seed = cfg_.seed;
  embedding_ = params_.add_uniform("embedding", {vocab_size_, cfg_.embed_dim}, cfg_.embed_dim, seed);
  for (auto w : cfg_.widths) {
    const std::string prefix = "conv" + std::to_string(w);
    ConvFilter f;
    f.width = w;
    f.channels = cfg_.channels;
    f.weight = params_.add_uniform(prefix + "/weight", {cfg_.channels, w * cfg_.embed_dim}, w * cfg_.embed_dim, seed);
    f.bias = params_.add_uniform(prefix + "/bias", {cfg_.channels}, w * cfg_.embed_dim, seed);
    filters_.push_back(f);
  }
  output_ = LinearParams::create(params_, "output", cfg_.channels * cfg_.widths.size(), 1, seed);
}

Var TextCnnClassifier::logit_from_embeddings(Binding& bind, std::span<const Var> embedded, Rng* dropout_rng) const {
  if (embedded.empty()) throw EmptyInputError("classifier input is empty");
  Tape& tape = bind.tape();
  Var pooled = tape.relu(conv1d_maxpool(bind, filters_, embedded, cfg_.embed_dim));
  if (dropout_rng != nullptr && cfg_.dropout > 0.0) {
    pooled = tape.dropout(pooled, dropout_mask(tape.value(pooled).shape(), cfg_.dropout, *dropout_rng));
  }
  return linear_forward(bind, output_, pooled);
}

Var TextCnnClassifier::logit(Binding& bind, std::span<const TokenId> ids, Rng* dropout_rng) const {
  Var table = bind(embedding_);
  std::vector<Var> embedded;
  embedded.reserve(ids.size());
  for (auto id : ids) embedded.push_back(embedding_lookup(bind.tape(), table, id));
  return logit_from_embeddings(bind, embedded, dropout_rng);
}

Var TextCnnClassifier::logit_soft(Binding& bind, std::span<const Var> distributions, Rng* dropout_rng) const {
  Tape& tape = bind.tape();
  Var table = bind(embedding_);
  std::vector<Var> embedded;
  embedded.reserve(distributions.size());
  for (std::size_t pos = 0; pos < distributions.size(); ++pos) {
    const Tensor& p = tape.value(distributions[pos]);
    if (p.size() != vocab_size_) {
      throw DimensionError("classify_soft: distribution " + shape_str(p.shape()) + " over a vocabulary of " +
                           std::to_string(vocab_size_));
    }
    double total = 0.0;
    bool negative = false;
    for (double v : p.span()) {
      total += v;
      negative = negative || v < 0.0;
    }
    if (negative || std::fabs(total - 1.0) > 1e-6) {
      throw ContractError("classify_soft: position " + std::to_string(pos) + " is not a probability vector (sum " +
                          std::to_string(total) + ")");
    }
    embedded.push_back(tape.matvec_t(table, distributions[pos]));
  }
  return logit_from_embeddings(bind, embedded, dropout_rng);
}

namespace {

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

double classify_hard(const TextCnnClassifier& model, std::span<const TokenId> ids) {
  Tape tape;
  Binding bind(tape, model.params(), false);
  return sigmoid(tape.value(model.logit(bind, ids)).item());
}

double classify_soft(const TextCnnClassifier& model, std::span<const Tensor> distributions) {
  Tape tape;
  Binding bind(tape, model.params(), false);
  std::vector<Var> dists;
  for (const auto& d : distributions) dists.push_back(tape.constant(d));
  return sigmoid(tape.value(model.logit_soft(bind, dists)).item());
}

ClassifierMetrics metrics_from_predictions(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size()) throw ContractError("metrics: predictions and labels differ in length");
  if (labels.empty()) throw EmptyInputError("metrics: empty test set");
  ClassifierMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = probabilities[i] > 0.5;
    const bool gold = labels[i] == 1;
    if (pred && gold) ++m.tp;
    else if (pred) ++m.fp;
    else if (gold) ++m.fn;
    else ++m.tn;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(labels.size());
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

ClassifierMetrics evaluate_classifier(const TextCnnClassifier& model, std::span<const ClassifierExample> testset) {
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& ex : testset) {
    probs.push_back(classify_hard(model, ex.ids));
    labels.push_back(ex.label);
  }
  return metrics_from_predictions(probs, labels);
}

double mean_bce(const TextCnnClassifier& model, std::span<const ClassifierExample> data) {
  if (data.empty()) throw EmptyInputError("mean_bce: empty dataset");
  double total = 0.0;
  for (const auto& ex : data) {
    Tape tape;
    Binding bind(tape, model.params(), false);
    total += tape.value(sigmoid_bce(tape, model.logit(bind, ex.ids), ex.label)).item();
  }
  return total / static_cast<double>(data.size());
}

ClassifierTrainResult train_classifier(int persona, std::size_t vocab_size, std::span<const ClassifierExample> train,
                                       std::span<const ClassifierExample> dev, const ClassifierConfig& cfg) {
  if (train.empty()) throw DataError("train_classifier: empty training set");
  for (const auto& ex : train) {
    if (ex.label != 0 && ex.label != 1) throw DataError("train_classifier: labels must be 0 or 1");
    if (ex.ids.empty()) throw DataError("train_classifier: empty utterance");
  }
  ClassifierTrainResult result{TextCnnClassifier(persona, vocab_size, cfg), {}, {}, 0};
  TextCnnClassifier& model = result.model;
  AdamState adam(model.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng order_rng(cfg.seed, "classifier_order/" + std::to_string(persona));
  Rng dropout_rng(cfg.seed, "classifier_dropout/" + std::to_string(persona));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  ParamStore best = model.params();
  double best_acc = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Gradients batch(model.params());
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train[order[i]];
        Tape tape;
        Binding bind(tape, model.params(), true);
        Var loss = sigmoid_bce(tape, model.logit(bind, ex.ids, &dropout_rng), ex.label);
        batch.add_scaled(backward(tape, loss, bind), 1.0 / static_cast<double>(end - start));
      }
      adam_step(model.params(), batch, adam);
    }
    result.train_loss.push_back(mean_bce(model, train));
    const double acc = dev.empty() ? 0.0 : evaluate_classifier(model, dev).accuracy;
    result.dev_accuracy.push_back(acc);
    if (dev.empty() || acc > best_acc) {
      best_acc = acc;
      best = model.params();
      result.best_epoch = epoch;
    }
  }
  model.params() = best;
  return result;
}

namespace {

nlohmann::json arch_json(const TextCnnClassifier& m) {
  const auto& c = m.config();
  return {{"persona", m.persona()},     {"vocab_size", m.vocab_size()}, {"embed_dim", c.embed_dim},
          {"widths", c.widths},         {"channels", c.channels},       {"dropout", c.dropout},
          {"seed", c.seed}};
}

}  // namespace

Checkpoint classifiers_to_checkpoint(std::span<const TextCnnClassifier> models) {
  Checkpoint ckpt;
  nlohmann::json meta = {{"kind", "classifiers"}, {"models", nlohmann::json::array()}};
  for (const auto& m : models) {
    meta["models"].push_back(arch_json(m));
    ckpt.add_params(m.params(), "clf/" + std::to_string(m.persona()) + "/");
  }
  ckpt.metadata = meta.dump();
  return ckpt;
}

std::vector<TextCnnClassifier> classifiers_from_checkpoint(const Checkpoint& ckpt) {
  std::vector<TextCnnClassifier> out;
  try {
    const auto meta = nlohmann::json::parse(ckpt.metadata);
    if (meta.at("kind") != "classifiers") throw FormatError("checkpoint does not hold classifiers");
    for (const auto& a : meta.at("models")) {
      ClassifierConfig cfg;
      cfg.embed_dim = a.at("embed_dim").get<std::size_t>();
      cfg.widths = a.at("widths").get<std::vector<std::size_t>>();
      cfg.channels = a.at("channels").get<std::size_t>();
      cfg.dropout = a.at("dropout").get<double>();
      cfg.seed = a.at("seed").get<std::uint64_t>();
      const int persona = a.at("persona").get<int>();
      TextCnnClassifier m(persona, a.at("vocab_size").get<std::size_t>(), cfg);
      ckpt.load_params(m.params(), "clf/" + std::to_string(persona) + "/");
      out.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("classifier checkpoint metadata: ") + e.what());
  }
  return out;
}

void save_classifiers(const std::filesystem::path& path, std::span<const TextCnnClassifier> models) {
  save_checkpoint(path, classifiers_to_checkpoint(models));
}

std::vector<TextCnnClassifier> load_classifiers(const std::filesystem::path& path) {
  return classifiers_from_checkpoint(load_checkpoint(path));
}

}  // namespace pstory
