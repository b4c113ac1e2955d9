#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pstory/checkpoint.hpp"
#include "pstory/dataset.hpp"
#include "pstory/layers.hpp"
#include "pstory/params.hpp"
#include "pstory/rng.hpp"
#include "pstory/tape.hpp"
#include "pstory/vocab.hpp"

namespace pstory {

struct ClassifierConfig {
  std::size_t embed_dim = 16;
  std::vector<std::size_t> widths{2, 3, 4};
  std::size_t channels = 32;
  double dropout = 0.2;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
};

void validate(const ClassifierConfig& cfg);

struct ClassifierExample {
  std::vector<TokenId> ids;
  int label = 0;
};

// Token ids (no BOS/EOS) for labelled utterances; unlabelled ones raise DataError.
std::vector<ClassifierExample> to_examples(std::span<const PersonaUtterance> utts, const Vocabulary& vocab);

// Binary TextCNN: embedding -> conv filters with max-over-time pooling ->
// ReLU -> dropout -> single logit.
class TextCnnClassifier {
 public:
  TextCnnClassifier(int persona, std::size_t vocab_size, ClassifierConfig cfg);

  int persona() const { return persona_; }
  std::size_t vocab_size() const { return vocab_size_; }
  const ClassifierConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  ParamId embedding() const { return embedding_; }
  const LinearParams& output() const { return output_; }

  // dropout_rng == nullptr means evaluation mode.
  Var logit_from_embeddings(Binding& bind, std::span<const Var> embedded, Rng* dropout_rng) const;
  Var logit(Binding& bind, std::span<const TokenId> ids, Rng* dropout_rng = nullptr) const;
  // Each distribution must be non-negative and sum to 1 within 1e-6; the
  // position embedding is the distribution-weighted mix of embedding rows.
  Var logit_soft(Binding& bind, std::span<const Var> distributions, Rng* dropout_rng = nullptr) const;

 private:
  int persona_;
  std::size_t vocab_size_;
  ClassifierConfig cfg_;
  ParamStore params_;
  ParamId embedding_;
  std::vector<ConvFilter> filters_;
  LinearParams output_;
};

double classify_hard(const TextCnnClassifier& model, std::span<const TokenId> ids);
double classify_soft(const TextCnnClassifier& model, std::span<const Tensor> distributions);

struct ClassifierMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Positive prediction means probability > 0.5; F1 is for the positive class.
ClassifierMetrics metrics_from_predictions(std::span<const double> probabilities, std::span<const int> labels);
ClassifierMetrics evaluate_classifier(const TextCnnClassifier& model, std::span<const ClassifierExample> testset);

struct ClassifierTrainResult {
  TextCnnClassifier model;
  std::vector<double> train_loss;    // mean BCE on the training set after each epoch
  std::vector<double> dev_accuracy;  // after each epoch
  std::size_t best_epoch = 0;
};

// Adam on mean sigmoid-BCE; returns the parameters of the epoch with the
// best dev accuracy (earliest on ties). An empty dev set selects the last epoch.
ClassifierTrainResult train_classifier(int persona, std::size_t vocab_size, std::span<const ClassifierExample> train,
                                       std::span<const ClassifierExample> dev, const ClassifierConfig& cfg);

double mean_bce(const TextCnnClassifier& model, std::span<const ClassifierExample> data);

// Parameters under "clf/<persona>/"; architecture in the metadata block.
Checkpoint classifiers_to_checkpoint(std::span<const TextCnnClassifier> models);
std::vector<TextCnnClassifier> classifiers_from_checkpoint(const Checkpoint& ckpt);
void save_classifiers(const std::filesystem::path& path, std::span<const TextCnnClassifier> models);
std::vector<TextCnnClassifier> load_classifiers(const std::filesystem::path& path);

}  // namespace pstory
