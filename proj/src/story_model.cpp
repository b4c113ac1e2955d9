#include "pstory/story_model.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "pstory/adam.hpp"
#include "pstory/error.hpp"
#include "pstory/json_io.hpp"

namespace pstory {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Glocal: return "glocal";
    case Variant::Mpp: return "mpp";
    case Variant::Lepc: return "lepc";
    case Variant::Lepd: return "lepd";
    case Variant::Sepc: return "sepc";
    case Variant::Sepd: return "sepd";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected glocal|mpp|lepc|lepd|sepc|sepd)");
}

ModelConfig ModelConfig::full_scale(Variant v) {
  ModelConfig c;
  c.image_dim = 2048;
  c.projection_dim = 1024;
  c.context_hidden = 512;
  c.context_layers = 2;
  c.decoder_hidden = 1024;
  c.embed_dim = v == Variant::Sepd ? 768 : 256;
  c.persona_dim = 768;
  return c;
}

void validate(const ModelConfig& c, Variant v) {
  if (c.image_dim == 0 || c.projection_dim == 0 || c.context_hidden == 0 || c.context_layers == 0 ||
      c.decoder_hidden == 0 || c.embed_dim == 0 || c.persona_dim == 0 || c.n_personas == 0) {
    throw ConfigError("model dimensions must all be positive");
  }
  if (v == Variant::Sepd && c.embed_dim != c.persona_dim) {
    throw ConfigError("sepd requires embed_dim == persona_dim (got embed_dim " + std::to_string(c.embed_dim) +
                      ", persona_dim " + std::to_string(c.persona_dim) + ")");
  }
  if (v == Variant::Sepc && !c.sepc_projection && c.persona_dim != c.glocal_dim()) {
    throw ConfigError("sepc without projection requires persona_dim == glocal dim (got " +
                      std::to_string(c.persona_dim) + " vs " + std::to_string(c.glocal_dim()) + ")");
  }
}

void validate(const TrainConfig& c) {
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("train.alpha must lie in [0, 1]");
  if (!(c.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (c.weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (c.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("train.dropout must lie in [0, 1)");
  if (c.max_sentence_len < 2) throw ConfigError("train.max_sentence_len must be >= 2");
}

void validate(const DecodeConfig& c) {
  if (c.max_len < 2) throw ConfigError("decode.max_len must be >= 2");
  if (c.mode == DecodeConfig::Mode::Sample && !(c.temperature > 0.0)) {
    throw ConfigError("decode.temperature must be positive when sampling");
  }
}

GeneratorModel::GeneratorModel(Variant variant, ModelConfig cfg, std::size_t vocab_size,
                               std::vector<PersonaRepr> personas, StoryStyleRepr style, std::uint64_t seed)
    : variant_(variant),
      cfg_(cfg),
      vocab_size_(vocab_size),
      seed_(seed),
      personas_(std::move(personas)),
      style_(std::move(style)) {
  validate(cfg_, variant_);
  if (vocab_size_ <= Vocabulary::kReserved) throw ConfigError("generator vocabulary has no ordinary tokens");
  if (personas_.size() != cfg_.n_personas) {
    throw ConfigError("expected " + std::to_string(cfg_.n_personas) + " persona representations, got " +
                      std::to_string(personas_.size()));
  }
  for (const auto& p : personas_) {
    if (p.vector.size() != cfg_.persona_dim) {
      throw ConfigError("persona representation has dimension " + std::to_string(p.vector.size()) +
                        " but persona_dim is " + std::to_string(cfg_.persona_dim));
    }
  }
  if (style_.vector.size() != cfg_.persona_dim) {
    throw ConfigError("story style representation has dimension " + std::to_string(style_.vector.size()) +
                      " but persona_dim is " + std::to_string(cfg_.persona_dim));
  }

  image_proj_ = LinearParams::create(params_, "image_proj", cfg_.image_dim, cfg_.projection_dim, seed);
  std::size_t in = cfg_.projection_dim;
  for (std::size_t l = 0; l < cfg_.context_layers; ++l) {
    context_.push_back(BiLstmParams::create(params_, "context/l" + std::to_string(l), in, cfg_.context_hidden, seed));
    in = 2 * cfg_.context_hidden;
  }
  embedding_ = params_.add_uniform("embedding", {vocab_size_, cfg_.embed_dim}, cfg_.embed_dim, seed);
  if (variant_ == Variant::Sepc && cfg_.sepc_projection && cfg_.persona_dim != cfg_.glocal_dim()) {
    persona_proj_ =
        params_.add_uniform("persona_proj/weight", {cfg_.glocal_dim(), cfg_.persona_dim}, cfg_.persona_dim, seed);
  }
  decoder_ = LstmParams::create(params_, "decoder", word_input_dim() + context_dim(), cfg_.decoder_hidden, seed);
  output_ = LinearParams::create(params_, "output", cfg_.decoder_hidden, vocab_size_, seed);
}

std::size_t GeneratorModel::context_dim() const {
  const std::size_t z = cfg_.glocal_dim();
  switch (variant_) {
    case Variant::Glocal: return z;
    case Variant::Lepc: return z + cfg_.persona_dim + cfg_.n_personas;
    default: return z + cfg_.n_personas;
  }
}

std::size_t GeneratorModel::word_input_dim() const {
  return variant_ == Variant::Lepd ? cfg_.embed_dim + cfg_.persona_dim : cfg_.embed_dim;
}

void GeneratorModel::check_persona(int persona) const {
  if (persona < 0 || persona >= static_cast<int>(cfg_.n_personas)) {
    throw ContractError("persona " + std::to_string(persona) + " outside 0.." + std::to_string(cfg_.n_personas - 1));
  }
}

std::vector<Var> GeneratorModel::encode_images(Binding& bind, std::span<const Tensor> features, Rng* dropout_rng,
                                               double dropout) const {
  if (features.size() != kStoryLength) {
    throw ContractError("encode_images expects " + std::to_string(kStoryLength) + " feature vectors, got " +
                        std::to_string(features.size()));
  }
  Tape& tape = bind.tape();
  const bool drop = dropout_rng != nullptr && dropout > 0.0;
  std::vector<Var> local;
  for (const auto& f : features) {
    if (f.rank() != 1 || f.size() != cfg_.image_dim) {
      throw DimensionError("image feature " + shape_str(f.shape()) + " but image_dim is " +
                           std::to_string(cfg_.image_dim));
    }
    Var x = linear_forward(bind, image_proj_, tape.constant(f));
    if (drop) x = tape.dropout(x, dropout_mask(tape.value(x).shape(), dropout, *dropout_rng));
    local.push_back(x);
  }
  std::vector<Var> global = local;
  for (const auto& layer : context_) global = bilstm_encode(bind, layer, global);
  std::vector<Var> z;
  for (std::size_t k = 0; k < kStoryLength; ++k) {
    Var g = global[k];
    if (drop) g = tape.dropout(g, dropout_mask(tape.value(g).shape(), dropout, *dropout_rng));
    z.push_back(tape.concat({local[k], g}));
  }
  return z;
}

Var GeneratorModel::condition_context(Binding& bind, Var z, const PersonaRepr& persona_repr,
                                      const StoryStyleRepr& style, int persona) const {
  check_persona(persona);
  Tape& tape = bind.tape();
  if (variant_ == Variant::Glocal) return z;
  Tensor hot({cfg_.n_personas});
  hot[static_cast<std::size_t>(persona)] = 1.0;
  Var onehot = tape.constant(std::move(hot));
  switch (variant_) {
    case Variant::Lepc: return tape.concat({z, tape.constant(persona_repr.vector), onehot});
    case Variant::Sepc: {
      Var p = tape.constant(persona_repr.vector);
      Var s = tape.constant(style.vector);
      Var shift;
      if (persona_proj_) {
        Var w = bind(*persona_proj_);
        shift = tape.sub(tape.matvec(w, p), tape.matvec(w, s));
      } else {
        shift = tape.sub(p, s);
      }
      return tape.concat({tape.add(z, shift), onehot});
    }
    default: return tape.concat({z, onehot});
  }
}

Var GeneratorModel::condition_context(Binding& bind, Var z, int persona) const {
  check_persona(persona);
  return condition_context(bind, z, personas_[static_cast<std::size_t>(persona)], style_, persona);
}

Var GeneratorModel::word_input(Binding& bind, TokenId prev, int persona) const {
  Tape& tape = bind.tape();
  Var base = embedding_lookup(tape, bind(embedding_), prev);
  if (variant_ == Variant::Lepd) {
    check_persona(persona);
    return tape.concat({base, tape.constant(personas_[static_cast<std::size_t>(persona)].vector)});
  }
  if (variant_ == Variant::Sepd) {
    check_persona(persona);
    Var shift = tape.sub(tape.constant(personas_[static_cast<std::size_t>(persona)].vector),
                         tape.constant(style_.vector));
    return tape.add(base, shift);
  }
  return base;
}

LstmState GeneratorModel::decoder_start(Binding& bind) const { return lstm_zero_state(bind.tape(), cfg_.decoder_hidden); }

LstmState GeneratorModel::decoder_step(Binding& bind, Var word_in, Var context, LstmState state) const {
  return lstm_cell_step(bind, decoder_, bind.tape().concat({word_in, context}), state);
}

Var GeneratorModel::output_logits(Binding& bind, Var h) const { return linear_forward(bind, output_, h); }

SentenceDecode decode_sentence_train(Binding& bind, const GeneratorModel& model, Var context,
                                     std::span<const TokenId> gold, int persona) {
  if (gold.empty() || gold[0] != Vocabulary::kBos) throw ContractError("gold sentence must begin with BOS");
  std::size_t eos = 1;
  while (eos < gold.size() && gold[eos] != Vocabulary::kEos) ++eos;
  if (eos == gold.size()) throw ContractError("gold sentence has no EOS");

  Tape& tape = bind.tape();
  const bool keep_distributions = is_persona_variant(model.variant());
  SentenceDecode out;
  LstmState state = model.decoder_start(bind);
  for (std::size_t t = 0; t < eos; ++t) {
    state = model.decoder_step(bind, model.word_input(bind, gold[t], persona), context, state);
    Var logits = model.output_logits(bind, state.h);
    out.token_losses.push_back(tape.softmax_ce(logits, gold[t + 1]));
    if (keep_distributions && gold[t + 1] != Vocabulary::kEos) out.distributions.push_back(tape.softmax(logits));
  }
  std::vector<double> w(out.token_losses.size(), 1.0 / static_cast<double>(out.token_losses.size()));
  out.loss = tape.weighted_sum(out.token_losses, w);
  return out;
}

double multitask_loss(double generation_loss, std::span<const double> classifier_losses, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (classifier_losses.empty()) throw EmptyInputError("multitask_loss: no classifier losses");
  const double w = (1.0 - alpha) / static_cast<double>(classifier_losses.size());
  double acc = 0.0;
  acc += alpha * generation_loss;
  for (double l : classifier_losses) acc += w * l;
  return acc;
}

Var multitask_loss(Tape& tape, Var generation_loss, std::span<const Var> classifier_losses, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (classifier_losses.empty()) throw EmptyInputError("multitask_loss: no classifier losses");
  std::vector<Var> terms{generation_loss};
  terms.insert(terms.end(), classifier_losses.begin(), classifier_losses.end());
  std::vector<double> weights(terms.size(), (1.0 - alpha) / static_cast<double>(classifier_losses.size()));
  weights[0] = alpha;
  return tape.weighted_sum(terms, weights);
}

std::vector<TrainingStory> prepare_stories(std::span<const StoryExample> stories, const Vocabulary& vocab,
                                           std::size_t max_len) {
  std::vector<TrainingStory> out;
  out.reserve(stories.size());
  for (const auto& s : stories) {
    if (!s.persona) throw DataError("story '" + s.id + "' has no persona");
    TrainingStory t;
    t.id = s.id;
    t.features = s.image_features;
    t.persona = *s.persona;
    for (std::size_t k = 0; k < kStoryLength; ++k) t.gold[k] = vocab.encode(s.sentences[k], max_len);
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

void check_classifiers(const GeneratorModel& model, std::span<const TextCnnClassifier> classifiers) {
  if (classifiers.size() != model.config().n_personas) {
    throw ConfigError("persona variants need " + std::to_string(model.config().n_personas) + " classifiers, got " +
                      std::to_string(classifiers.size()));
  }
  for (std::size_t j = 0; j < classifiers.size(); ++j) {
    if (classifiers[j].vocab_size() != model.vocab_size()) {
      throw ConfigError("classifier " + std::to_string(j) + " vocabulary size " +
                        std::to_string(classifiers[j].vocab_size()) + " does not match generator vocabulary size " +
                        std::to_string(model.vocab_size()));
    }
    if (classifiers[j].persona() != static_cast<int>(j)) {
      throw ConfigError("classifier at position " + std::to_string(j) + " is for persona " +
                        std::to_string(classifiers[j].persona()));
    }
  }
}

StoryLoss story_loss_impl(Binding& bind, const GeneratorModel& model, const TrainingStory& story,
                          std::span<const TextCnnClassifier> classifiers, double alpha, Rng* dropout_rng,
                          double dropout) {
  Tape& tape = bind.tape();
  auto z = model.encode_images(bind, story.features, dropout_rng, dropout);
  std::vector<Var> token_losses;
  std::array<std::vector<Var>, kStoryLength> dists;
  for (std::size_t k = 0; k < kStoryLength; ++k) {
    Var ctx = model.condition_context(bind, z[k], story.persona);
    auto dec = decode_sentence_train(bind, model, ctx, story.gold[k], story.persona);
    token_losses.insert(token_losses.end(), dec.token_losses.begin(), dec.token_losses.end());
    dists[k] = std::move(dec.distributions);
  }
  StoryLoss out;
  std::vector<double> w(token_losses.size(), 1.0 / static_cast<double>(token_losses.size()));
  out.generation = tape.weighted_sum(token_losses, w);
  if (!is_persona_variant(model.variant())) {
    out.total = out.generation;
    return out;
  }
  check_classifiers(model, classifiers);
  for (const auto& clf : classifiers) {
    Binding frozen(tape, clf.params(), false);
    const int label = clf.persona() == story.persona ? 1 : 0;
    std::vector<Var> per_sentence;
    for (const auto& d : dists) {
      if (d.empty()) continue;
      per_sentence.push_back(tape.sigmoid_bce(clf.logit_soft(frozen, d), label));
    }
    if (per_sentence.empty()) {
      out.classifier.push_back(tape.constant(Tensor::scalar(0.0)));
    } else {
      std::vector<double> cw(per_sentence.size(), 1.0 / static_cast<double>(per_sentence.size()));
      out.classifier.push_back(tape.weighted_sum(per_sentence, cw));
    }
  }
  out.total = multitask_loss(tape, out.generation, out.classifier, alpha);
  return out;
}

}  // namespace

StoryLoss story_loss(Binding& bind, const GeneratorModel& model, const TrainingStory& story,
                     std::span<const TextCnnClassifier> classifiers, double alpha, Rng* dropout_rng, double dropout) {
  return story_loss_impl(bind, model, story, classifiers, alpha, dropout_rng, dropout);
}

GeneratorTrainResult train_generator(std::span<const TrainingStory> stories,
                                     std::span<const TextCnnClassifier> classifiers,
                                     std::vector<PersonaRepr> personas, StoryStyleRepr style,
                                     const TrainConfig& train_cfg, const ModelConfig& model_cfg, Variant variant,
                                     std::size_t vocab_size) {
  validate(train_cfg);
  if (stories.empty()) throw DataError("train_generator: no training stories");
  GeneratorTrainResult result{
      GeneratorModel(variant, model_cfg, vocab_size, std::move(personas), std::move(style), train_cfg.seed), {}, {}};
  GeneratorModel& model = result.model;
  if (is_persona_variant(variant)) check_classifiers(model, classifiers);

  AdamState adam(model.params(), {train_cfg.learning_rate, 0.9, 0.999, 1e-8, train_cfg.weight_decay});
  Rng order_rng(train_cfg.seed, "generator_order");
  Rng dropout_rng(train_cfg.seed, "generator_dropout");
  Rng* drop = train_cfg.dropout > 0.0 ? &dropout_rng : nullptr;
  std::vector<std::size_t> order(stories.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0, generation = 0.0;
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
      Gradients batch(model.params());
      for (std::size_t i = start; i < end; ++i) {
        Tape tape;
        Binding bind(tape, model.params(), true);
        auto loss = story_loss_impl(bind, model, stories[order[i]], classifiers, train_cfg.alpha, drop,
                                    train_cfg.dropout);
        total += tape.value(loss.total).item();
        generation += tape.value(loss.generation).item();
        batch.add_scaled(backward(tape, loss.total, bind), 1.0 / static_cast<double>(end - start));
      }
      adam_step(model.params(), batch, adam);
    }
    result.epoch_total_loss.push_back(total / static_cast<double>(stories.size()));
    result.epoch_generation_loss.push_back(generation / static_cast<double>(stories.size()));
    if (train_cfg.stop_below && result.epoch_generation_loss.back() < *train_cfg.stop_below) break;
  }
  return result;
}

GeneratedStory generate_story(const GeneratorModel& model, std::span<const Tensor> features, int persona,
                              const DecodeConfig& cfg) {
  validate(cfg);
  if (persona < 0 || persona >= static_cast<int>(model.config().n_personas)) {
    throw ContractError("persona " + std::to_string(persona) + " outside 0.." +
                        std::to_string(model.config().n_personas - 1));
  }
  Tape tape;
  Binding bind(tape, model.params(), false);
  auto z = model.encode_images(bind, features, nullptr, 0.0);
  Rng rng(cfg.seed, "decode");
  GeneratedStory out;
  for (std::size_t k = 0; k < kStoryLength; ++k) {
    Var ctx = model.condition_context(bind, z[k], persona);
    LstmState state = model.decoder_start(bind);
    TokenId prev = Vocabulary::kBos;
    for (std::size_t step = 0; step < cfg.max_len; ++step) {
      state = model.decoder_step(bind, model.word_input(bind, prev, persona), ctx, state);
      const Tensor& logits = tape.value(model.output_logits(bind, state.h));
      TokenId next = Vocabulary::kEos;
      if (cfg.mode == DecodeConfig::Mode::Greedy) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t v = Vocabulary::kEos; v < logits.size(); ++v) {
          if (logits[v] > best) {
            best = logits[v];
            next = static_cast<TokenId>(v);
          }
        }
      } else {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t v = Vocabulary::kEos; v < logits.size(); ++v) top = std::max(top, logits[v]);
        std::vector<double> weight(logits.size(), 0.0);
        double total = 0.0;
        for (std::size_t v = Vocabulary::kEos; v < logits.size(); ++v) {
          weight[v] = std::exp((logits[v] - top) / cfg.temperature);
          total += weight[v];
        }
        double u = rng.uniform() * total;
        for (std::size_t v = Vocabulary::kEos; v < logits.size(); ++v) {
          next = static_cast<TokenId>(v);
          u -= weight[v];
          if (u < 0.0) break;
        }
      }
      if (next == Vocabulary::kEos) break;
      out[k].push_back(next);
      prev = next;
    }
  }
  return out;
}

Checkpoint model_to_checkpoint(const GeneratorModel& model, const std::string& config_echo) {
  Checkpoint ckpt;
  nlohmann::json meta = {{"kind", "generator"},
                         {"variant", std::string(variant_name(model.variant()))},
                         {"vocab_size", model.vocab_size()},
                         {"seed", model.seed()},
                         {"model", model.config()},
                         {"config", nlohmann::json::parse(config_echo)}};
  ckpt.metadata = meta.dump();
  ckpt.add_params(model.params(), "gen/");
  add_persona_space(ckpt, model.personas(), model.style());
  return ckpt;
}

GeneratorModel model_from_checkpoint(const Checkpoint& ckpt, std::optional<Variant> expected) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("generator checkpoint metadata: ") + e.what());
  }
  if (!meta.is_object() || meta.value("kind", "") != "generator") {
    throw FormatError("checkpoint does not hold a generator");
  }
  Variant variant;
  ModelConfig cfg;
  std::size_t vocab_size = 0;
  std::uint64_t seed = 0;
  try {
    variant = parse_variant(meta.at("variant").get<std::string>());
    cfg = meta.at("model").get<ModelConfig>();
    vocab_size = meta.at("vocab_size").get<std::size_t>();
    seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("generator checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("generator checkpoint metadata: ") + e.what());
  }
  if (expected && *expected != variant) {
    throw VariantMismatchError("checkpoint holds variant '" + std::string(variant_name(variant)) + "' but '" +
                               std::string(variant_name(*expected)) + "' was requested");
  }
  GeneratorModel model(variant, cfg, vocab_size, load_persona_reprs(ckpt, cfg.n_personas), load_story_style(ckpt),
                       seed);
  ckpt.load_params(model.params(), "gen/");
  return model;
}

void save_model(const std::filesystem::path& path, const GeneratorModel& model, const std::string& config_echo) {
  save_checkpoint(path, model_to_checkpoint(model, config_echo));
}

GeneratorModel load_model(const std::filesystem::path& path, std::optional<Variant> expected) {
  return model_from_checkpoint(load_checkpoint(path), expected);
}

}  // namespace pstory
