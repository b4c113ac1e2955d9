#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pstory/checkpoint.hpp"
#include "pstory/dataset.hpp"
#include "pstory/tensor.hpp"
#include "pstory/vocab.hpp"

namespace pstory {

// Maps a token sequence to a fixed-size vector. Implementations must be
// deterministic; a pretrained encoder can be plugged in behind this interface.
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t dim() const = 0;
  // Precondition: tokens non-empty.
  virtual Tensor embed(const Tokens& tokens) const = 0;
};

// Each token hashes to a row of a seeded Gaussian matrix; the sentence vector
// is the mean of its rows, L2-normalised.
class HashingEncoder final : public SentenceEncoder {
 public:
  HashingEncoder(std::size_t dim, std::uint64_t seed, std::size_t buckets = 4096);
  std::string kind() const override { return "hashing"; }
  std::size_t dim() const override { return table_.cols(); }
  Tensor embed(const Tokens& tokens) const override;

 private:
  std::uint64_t seed_;
  Tensor table_;
};

Tensor sentence_embed(const SentenceEncoder& encoder, const Tokens& tokens);

// Mean of equally-sized vectors, summed per coordinate in sorted order so the
// result does not depend on input order.
Tensor order_free_mean(std::span<const Tensor> vectors);

struct PersonaRepr {
  int id = 0;
  Tensor vector;
  std::size_t count = 0;
};

struct StoryStyleRepr {
  Tensor vector;
  std::size_t count = 0;
};

PersonaRepr persona_representation(std::span<const Tokens> utterances, const SentenceEncoder& encoder,
                                   int id = 0);
StoryStyleRepr story_style_representation(std::span<const StoryExample> stories,
                                          const SentenceEncoder& encoder);

struct ClusterModel {
  Tensor centroids;                     // [k x d]
  std::vector<std::size_t> assignment;  // point index -> cluster
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration, plus the initial one
  std::size_t iterations = 0;

  std::size_t k() const { return centroids.rows(); }
};

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or max_iter is reached. The final assignment is always
// nearest-centroid (ties go to the lower cluster index).
ClusterModel kmeans_cluster(std::span<const Tensor> points, std::size_t k, std::uint64_t seed,
                            std::size_t max_iter = 100);

// Label-1 copies of every utterance in target_cluster plus an equal number of
// label-0 utterances sampled without replacement from the other clusters.
std::vector<PersonaUtterance> build_balanced_dataset(int target_cluster,
                                                     std::span<const PersonaUtterance> utterances,
                                                     std::uint64_t seed);

// The n best clusters by accuracy, ties to the lower id, returned best first.
std::vector<int> select_top_clusters(const std::map<int, double>& per_cluster_accuracy, std::size_t n = 5);

// Persistence under "persona_repr/<id>" and "story_style_repr".
void add_persona_space(Checkpoint& ckpt, std::span<const PersonaRepr> personas, const StoryStyleRepr& style);
std::vector<PersonaRepr> load_persona_reprs(const Checkpoint& ckpt, std::size_t n_personas);
StoryStyleRepr load_story_style(const Checkpoint& ckpt);

}  // namespace pstory
