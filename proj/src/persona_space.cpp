#include "pstory/persona_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "pstory/error.hpp"
#include "pstory/rng.hpp"

namespace pstory {

HashingEncoder::HashingEncoder(std::size_t dim, std::uint64_t seed, std::size_t buckets)
    : seed_(seed), table_({buckets, dim}) {
  if (dim == 0 || buckets == 0) throw ConfigError("hashing encoder: dim and buckets must be positive");
  Rng rng(seed, "hashing_encoder");
  for (auto& v : table_.span()) v = rng.normal();
}

Tensor HashingEncoder::embed(const Tokens& tokens) const {
  if (tokens.empty()) throw EmptyInputError("sentence_embed: empty token sequence");
  const std::size_t d = dim();
  std::vector<double> acc(d, 0.0);
  const std::uint64_t basis = splitmix64(seed_);
  Tokens bag = tokens;
  std::sort(bag.begin(), bag.end());
  for (const auto& tok : bag) {
    const auto row = table_.row(fnv1a64(tok, basis) % table_.rows());
    for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
  }
  double norm = 0.0;
  for (auto& v : acc) {
    v /= static_cast<double>(tokens.size());
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& v : acc) v /= norm;
  }
  return Tensor({d}, std::move(acc));
}

Tensor sentence_embed(const SentenceEncoder& encoder, const Tokens& tokens) {
  if (tokens.empty()) throw EmptyInputError("sentence_embed: empty token sequence");
  Tensor out = encoder.embed(tokens);
  if (out.size() != encoder.dim()) {
    throw DimensionError("sentence encoder '" + encoder.kind() + "' returned " + shape_str(out.shape()));
  }
  return out;
}

Tensor order_free_mean(std::span<const Tensor> vectors) {
  if (vectors.empty()) throw EmptyInputError("mean of zero vectors");
  const std::size_t d = vectors[0].size();
  Tensor out({d});
  std::vector<double> column(vectors.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (vectors[i].size() != d) throw DimensionError("mean over vectors of different sizes");
      column[i] = vectors[i][j];
    }
    std::sort(column.begin(), column.end());
    double total = 0.0;
    for (double v : column) total += v;
    out[j] = total / static_cast<double>(vectors.size());
  }
  return out;
}

PersonaRepr persona_representation(std::span<const Tokens> utterances, const SentenceEncoder& encoder, int id) {
  if (utterances.empty()) throw EmptyInputError("persona_representation: no utterances");
  std::vector<Tensor> embs;
  embs.reserve(utterances.size());
  for (const auto& u : utterances) embs.push_back(sentence_embed(encoder, u));
  return {id, order_free_mean(embs), utterances.size()};
}

StoryStyleRepr story_style_representation(std::span<const StoryExample> stories, const SentenceEncoder& encoder) {
  if (stories.empty()) throw EmptyInputError("story_style_representation: no stories");
  std::vector<Tensor> embs;
  for (const auto& s : stories) {
    for (const auto& sent : s.sentences) {
      if (!sent.empty()) embs.push_back(sentence_embed(encoder, sent));
    }
  }
  if (embs.empty()) throw EmptyInputError("story_style_representation: every sentence is empty");
  return {order_free_mean(embs), embs.size()};
}

namespace {

double sq_dist(const Tensor& a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

// Returns inertia.
double assign_nearest(std::span<const Tensor> points, const Tensor& centroids,
                      std::vector<std::size_t>& assignment) {
  double inertia = 0.0;
  assignment.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = sq_dist(points[i], centroids.row(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    assignment[i] = arg;
    inertia += best;
  }
  return inertia;
}

}  // namespace

ClusterModel kmeans_cluster(std::span<const Tensor> points, std::size_t k, std::uint64_t seed,
                            std::size_t max_iter) {
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (max_iter < 1) throw ConfigError("kmeans: max_iter must be >= 1");
  if (points.empty()) throw EmptyInputError("kmeans: no points");
  const std::size_t d = points[0].size();
  std::set<std::vector<double>> distinct;
  for (const auto& p : points) {
    if (p.size() != d) throw DimensionError("kmeans: points differ in dimension");
    distinct.insert(p.values());
  }
  if (k > distinct.size()) {
    throw ConfigError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(distinct.size()) +
                      " distinct points");
  }

  // k-means++ seeding.
  Rng rng(seed, "kmeans");
  Tensor centroids({k, d});
  std::size_t first = rng.below(points.size());
  std::copy(points[first].data(), points[first].data() + d, centroids.row(0).begin());
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(points[i], centroids.row(c - 1)));
      total += nearest[i];
    }
    double target = rng.uniform() * total;
    std::size_t pick = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (nearest[i] <= 0.0) continue;
      pick = i;
      target -= nearest[i];
      if (target < 0.0) break;
    }
    std::copy(points[pick].data(), points[pick].data() + d, centroids.row(c).begin());
  }

  ClusterModel model;
  std::vector<std::size_t> assignment;
  model.inertia_history.push_back(assign_nearest(points, centroids, assignment));

  std::vector<std::size_t> next;
  for (std::size_t it = 0; it < max_iter; ++it) {
    // Update step; empty clusters keep their centroid.
    std::vector<std::vector<Tensor>> members(k);
    for (std::size_t i = 0; i < points.size(); ++i) members[assignment[i]].push_back(points[i]);
    for (std::size_t c = 0; c < k; ++c) {
      if (members[c].empty()) continue;
      const Tensor mean = order_free_mean(members[c]);
      std::copy(mean.data(), mean.data() + d, centroids.row(c).begin());
    }
    const double inertia = assign_nearest(points, centroids, next);
    model.inertia_history.push_back(inertia);
    ++model.iterations;
    const bool converged = next == assignment;
    assignment.swap(next);
    if (converged) break;
  }
  model.centroids = std::move(centroids);
  model.assignment = std::move(assignment);
  model.inertia = model.inertia_history.back();
  return model;
}

std::vector<PersonaUtterance> build_balanced_dataset(int target_cluster, std::span<const PersonaUtterance> utterances,
                                                     std::uint64_t seed) {
  std::vector<PersonaUtterance> positives, negatives;
  for (const auto& u : utterances) (u.cluster == target_cluster ? positives : negatives).push_back(u);
  if (positives.empty()) {
    throw DataError("balanced dataset: cluster " + std::to_string(target_cluster) + " has no utterances");
  }
  if (negatives.size() < positives.size()) {
    throw DataError("balanced dataset: cluster " + std::to_string(target_cluster) + " needs " +
                    std::to_string(positives.size()) + " negatives but only " +
                    std::to_string(negatives.size()) + " exist (deficit " +
                    std::to_string(positives.size() - negatives.size()) + ")");
  }
  Rng rng(seed, "balanced/" + std::to_string(target_cluster));
  rng.shuffle(negatives);
  negatives.resize(positives.size());
  std::vector<PersonaUtterance> out;
  out.reserve(2 * positives.size());
  for (auto& u : positives) {
    u.label = 1;
    out.push_back(std::move(u));
  }
  for (auto& u : negatives) {
    u.label = 0;
    out.push_back(std::move(u));
  }
  rng.shuffle(out);
  return out;
}

std::vector<int> select_top_clusters(const std::map<int, double>& per_cluster_accuracy, std::size_t n) {
  if (per_cluster_accuracy.size() < n) {
    throw ConfigError("select_top_clusters: need " + std::to_string(n) + " clusters, have " +
                      std::to_string(per_cluster_accuracy.size()));
  }
  std::vector<std::pair<int, double>> ranked(per_cluster_accuracy.begin(), per_cluster_accuracy.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].first);
  return out;
}

void add_persona_space(Checkpoint& ckpt, std::span<const PersonaRepr> personas, const StoryStyleRepr& style) {
  for (const auto& p : personas) ckpt.add("persona_repr/" + std::to_string(p.id), p.vector);
  ckpt.add("story_style_repr", style.vector);
}

std::vector<PersonaRepr> load_persona_reprs(const Checkpoint& ckpt, std::size_t n_personas) {
  std::vector<PersonaRepr> out;
  for (std::size_t p = 0; p < n_personas; ++p) {
    out.push_back({static_cast<int>(p), ckpt.get("persona_repr/" + std::to_string(p)), 0});
  }
  return out;
}

StoryStyleRepr load_story_style(const Checkpoint& ckpt) { return {ckpt.get("story_style_repr"), 0}; }

}  // namespace pstory
