#include "pstory/pipeline.hpp"

#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pstory/error.hpp"
#include "pstory/json_io.hpp"
#include "pstory/persona_space.hpp"

namespace pstory {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSeededSections[] = {"synth", "classifier", "train", "decode"};

std::string granularity_name(RougeGranularity g) { return g == RougeGranularity::Story ? "story" : "sentence"; }

json section(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return json::object();
  if (!it->is_object()) throw ConfigError(std::string("section '") + name + "' must be an object");
  return *it;
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view json_text, const ConfigOverrides& overrides) {
  PipelineConfig cfg;
  try {
    json j = json_text.find_first_not_of(" \t\r\n") == std::string_view::npos ? json::object()
                                                                              : json::parse(json_text);
    reject_unknown_keys(j,
                        {"seed", "out", "variant", "data", "synth", "persona", "split", "vocab", "classifier", "model",
                         "train", "decode", "eval"},
                        "top level");
    if (overrides.seed) {
      j["seed"] = *overrides.seed;
      for (auto name : kSeededSections) {
        auto it = j.find(std::string(name));
        if (it != j.end() && it->is_object()) it->erase("seed");
      }
    }
    if (auto it = j.find("seed"); it != j.end()) cfg.seed = it->get<std::uint64_t>();
    if (auto it = j.find("out"); it != j.end()) cfg.out_dir = it->get<std::string>();
    if (auto it = j.find("variant"); it != j.end()) cfg.variant = parse_variant(it->get<std::string>());

    const json data = section(j, "data");
    reject_unknown_keys(data, {"stories", "utterances"}, "data");
    if (data.contains("stories") && !data["stories"].is_null()) cfg.stories_path = data["stories"].get<std::string>();
    if (data.contains("utterances") && !data["utterances"].is_null()) {
      cfg.utterances_path = data["utterances"].get<std::string>();
    }

    auto seeded = [&](const char* name) {
      json s = section(j, name);
      if (!s.contains("seed")) s["seed"] = cfg.seed;
      return s;
    };
    cfg.synth = seeded("synth").get<SynthConfig>();
    cfg.classifier = seeded("classifier").get<ClassifierConfig>();
    cfg.train = seeded("train").get<TrainConfig>();
    cfg.decode = seeded("decode").get<DecodeConfig>();
    cfg.model = section(j, "model").get<ModelConfig>();

    const json persona = section(j, "persona");
    reject_unknown_keys(persona, {"k", "kmeans_max_iter", "encoder_buckets"}, "persona");
    cfg.kmeans_k = persona.value("k", cfg.kmeans_k);
    cfg.kmeans_max_iter = persona.value("kmeans_max_iter", cfg.kmeans_max_iter);
    cfg.encoder_buckets = persona.value("encoder_buckets", cfg.encoder_buckets);

    const json split = section(j, "split");
    reject_unknown_keys(split, {"train", "dev"}, "split");
    cfg.train_fraction = split.value("train", cfg.train_fraction);
    cfg.dev_fraction = split.value("dev", cfg.dev_fraction);

    const json vocab = section(j, "vocab");
    reject_unknown_keys(vocab, {"min_count"}, "vocab");
    cfg.vocab_min_count = vocab.value("min_count", cfg.vocab_min_count);

    const json eval = section(j, "eval");
    reject_unknown_keys(eval, {"beta", "granularity"}, "eval");
    cfg.rouge_beta = eval.value("beta", cfg.rouge_beta);
    const std::string gran = eval.value("granularity", std::string("story"));
    if (gran == "story") cfg.rouge_granularity = RougeGranularity::Story;
    else if (gran == "sentence") cfg.rouge_granularity = RougeGranularity::Sentence;
    else throw ConfigError("eval.granularity must be 'story' or 'sentence', got '" + gran + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  if (overrides.variant) cfg.variant = *overrides.variant;

  validate(cfg.synth);
  validate(cfg.classifier);
  validate(cfg.train);
  validate(cfg.decode);
  if (cfg.model.n_personas != cfg.synth.n_personas) {
    throw ConfigError("model.n_personas (" + std::to_string(cfg.model.n_personas) + ") must equal synth.n_personas (" +
                      std::to_string(cfg.synth.n_personas) + ")");
  }
  if (!(cfg.train_fraction > 0.0 && cfg.dev_fraction >= 0.0 && cfg.train_fraction + cfg.dev_fraction < 1.0)) {
    throw ConfigError("split fractions must satisfy train > 0, dev >= 0, train + dev < 1");
  }
  if (!(cfg.rouge_beta > 0.0)) throw ConfigError("eval.beta must be positive");
  if (cfg.vocab_min_count < 1) throw ConfigError("vocab.min_count must be >= 1");
  if (cfg.kmeans_k < cfg.model.n_personas) {
    throw ConfigError("persona.k must be at least the number of personas");
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::optional<fs::path>& path, const ConfigOverrides& overrides) {
  if (!path) return parse_pipeline_config("", overrides);
  std::string text;
  try {
    text = read_file(*path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_pipeline_config(text, overrides);
}

std::string pipeline_config_json(const PipelineConfig& cfg) {
  json j = {{"seed", cfg.seed},
            {"out", cfg.out_dir},
            {"variant", std::string(variant_name(cfg.variant))},
            {"data",
             {{"stories", cfg.stories_path ? json(*cfg.stories_path) : json(nullptr)},
              {"utterances", cfg.utterances_path ? json(*cfg.utterances_path) : json(nullptr)}}},
            {"synth", cfg.synth},
            {"persona",
             {{"k", cfg.kmeans_k}, {"kmeans_max_iter", cfg.kmeans_max_iter}, {"encoder_buckets", cfg.encoder_buckets}}},
            {"split", {{"train", cfg.train_fraction}, {"dev", cfg.dev_fraction}}},
            {"vocab", {{"min_count", cfg.vocab_min_count}}},
            {"classifier", cfg.classifier},
            {"model", cfg.model},
            {"train", cfg.train},
            {"decode", cfg.decode},
            {"eval", {{"beta", cfg.rouge_beta}, {"granularity", granularity_name(cfg.rouge_granularity)}}}};
  return j.dump(2) + "\n";
}

fs::path Artifacts::generator(Variant v) const { return dir / ("generator-" + std::string(variant_name(v)) + ".ckpt"); }
fs::path Artifacts::history(Variant v) const {
  return dir / ("generator-" + std::string(variant_name(v)) + ".history.json");
}
fs::path Artifacts::generated(Variant v) const { return dir / ("generated-" + std::string(variant_name(v)) + ".jsonl"); }
fs::path Artifacts::report_json(Variant v) const { return dir / ("report-" + std::string(variant_name(v)) + ".json"); }
fs::path Artifacts::report_table(Variant v) const { return dir / ("report-" + std::string(variant_name(v)) + ".txt"); }
fs::path Artifacts::report_raw(Variant v) const { return dir / ("raw-" + std::string(variant_name(v)) + ".jsonl"); }
fs::path Artifacts::config_echo(const std::string& stage) const { return dir / (stage + ".config.json"); }

namespace {

Artifacts prepare_out(const PipelineConfig& cfg, const std::string& stage) {
  Artifacts art{cfg.out_dir};
  std::error_code ec;
  fs::create_directories(art.dir, ec);
  if (ec) throw DataError("cannot create output directory " + art.dir.string() + ": " + ec.message());
  write_file_atomic(art.config_echo(stage), pipeline_config_json(cfg));
  return art;
}

std::string stories_jsonl(const std::vector<StoryExample>& stories) {
  std::string out;
  for (const auto& s : stories) out += story_to_json_line(s) + "\n";
  return out;
}

std::string utterances_jsonl(const std::vector<PersonaUtterance>& utts) {
  std::string out;
  for (const auto& u : utts) {
    json j = {{"text", detokenize(u.tokens)}, {"cluster", u.cluster}};
    if (u.label) j["label"] = *u.label;
    out += j.dump() + "\n";
  }
  return out;
}

std::uint64_t derived_seed(std::uint64_t seed, std::string_view label) { return splitmix64(seed ^ fnv1a64(label)); }

std::vector<StoryExample> load_split(const Artifacts& art, const char* which) {
  const auto stories = load_stories(art.prepared_stories());
  json splits;
  try {
    splits = json::parse(read_file(art.splits()));
  } catch (const json::exception& e) {
    throw FormatError("splits.json: " + std::string(e.what()));
  }
  std::map<std::string, const StoryExample*> by_id;
  for (const auto& s : stories) by_id[s.id] = &s;
  std::vector<StoryExample> out;
  for (const auto& id : splits.at(which)) {
    auto it = by_id.find(id.get<std::string>());
    if (it == by_id.end()) throw DataError("split references unknown story '" + id.get<std::string>() + "'");
    out.push_back(*it->second);
  }
  return out;
}

std::vector<TextCnnClassifier> load_checked_classifiers(const Artifacts& art, const PipelineConfig& cfg,
                                                        std::size_t vocab_size) {
  auto clfs = load_classifiers(art.classifiers());
  if (clfs.size() != cfg.model.n_personas) {
    throw DataError("classifiers.ckpt holds " + std::to_string(clfs.size()) + " classifiers, expected " +
                    std::to_string(cfg.model.n_personas));
  }
  for (const auto& c : clfs) {
    if (c.vocab_size() != vocab_size) throw ConfigError("classifier vocabulary does not match vocab.json");
  }
  return clfs;
}

Vocabulary load_vocab(const Artifacts& art) { return Vocabulary::from_json(read_file(art.vocab())); }

// Missing upstream artifacts are produced by running the earlier stages with the same config.
void ensure_corpus(const PipelineConfig& cfg) {
  const Artifacts art{cfg.out_dir};
  const bool have_stories = cfg.stories_path || fs::exists(art.stories());
  const bool have_utts = cfg.utterances_path || fs::exists(art.utterances());
  if (!have_stories || !have_utts) stage_synth_data(cfg);
}

void ensure_persona_space(const PipelineConfig& cfg) {
  const Artifacts art{cfg.out_dir};
  if (fs::exists(art.vocab()) && fs::exists(art.splits()) && fs::exists(art.prepared_stories()) &&
      fs::exists(art.persona_space()) && fs::exists(art.persona_utterances())) {
    return;
  }
  stage_cluster_personas(cfg);
}

void ensure_classifiers(const PipelineConfig& cfg) {
  ensure_persona_space(cfg);
  if (!fs::exists(Artifacts{cfg.out_dir}.classifiers())) stage_train_classifiers(cfg);
}

void ensure_generator(const PipelineConfig& cfg) {
  ensure_persona_space(cfg);
  if (!fs::exists(Artifacts{cfg.out_dir}.generator(cfg.variant))) stage_train_generator(cfg);
}

}  // namespace

std::string stage_synth_data(const PipelineConfig& cfg) {
  const Artifacts art = prepare_out(cfg, "synth-data");
  const auto corpus = synthesize_corpus(cfg.synth);
  write_file_atomic(art.stories(), stories_jsonl(corpus.stories));
  write_file_atomic(art.utterances(), utterances_jsonl(corpus.utterances));
  return "wrote " + std::to_string(corpus.stories.size()) + " stories and " +
         std::to_string(corpus.utterances.size()) + " utterances to " + art.dir.string();
}

std::string stage_cluster_personas(const PipelineConfig& cfg) {
  ensure_corpus(cfg);
  const Artifacts art = prepare_out(cfg, "cluster-personas");
  const std::size_t n_personas = cfg.model.n_personas;

  auto stories = load_stories(cfg.stories_path ? fs::path(*cfg.stories_path) : art.stories());
  const auto utts = load_utterances(cfg.utterances_path ? fs::path(*cfg.utterances_path) : art.utterances());
  if (stories.empty()) throw DataError("no stories");
  if (utts.empty()) throw DataError("no utterances");

  std::size_t labelled = 0;
  for (const auto& s : stories) labelled += s.persona.has_value();
  if (labelled == 0) {
    stories = assign_personas(std::move(stories), n_personas, derived_seed(cfg.seed, "assign_personas"));
  } else if (labelled != stories.size()) {
    throw DataError("stories mix records with and without a persona");
  }
  for (const auto& s : stories) {
    if (*s.persona >= static_cast<int>(n_personas)) {
      throw DataError("story '" + s.id + "' has persona " + std::to_string(*s.persona) + " but only " +
                      std::to_string(n_personas) + " personas are configured");
    }
  }
  write_file_atomic(art.prepared_stories(), stories_jsonl(stories));

  const auto ssplit = split_indices(stories.size(), cfg.train_fraction, cfg.dev_fraction,
                                    derived_seed(cfg.seed, "story_split"));
  json splits = {{"train", json::array()}, {"dev", json::array()}, {"test", json::array()}};
  for (auto i : ssplit.train) splits["train"].push_back(stories[i].id);
  for (auto i : ssplit.dev) splits["dev"].push_back(stories[i].id);
  for (auto i : ssplit.test) splits["test"].push_back(stories[i].id);
  write_file_atomic(art.splits(), splits.dump(2) + "\n");
  const auto train_stories = select(stories, ssplit.train);

  const auto usplit = split_indices(utts.size(), cfg.train_fraction, cfg.dev_fraction,
                                    derived_seed(cfg.seed, "utterance_split"));
  const auto train_utts = select(utts, usplit.train);

  std::vector<Tokens> corpus;
  for (const auto& s : train_stories) corpus.insert(corpus.end(), s.sentences.begin(), s.sentences.end());
  for (const auto& u : train_utts) corpus.push_back(u.tokens);
  const Vocabulary vocab = Vocabulary::build(corpus, cfg.vocab_min_count);
  write_file_atomic(art.vocab(), vocab.to_json());

  // Personality representations, then k-means over them.
  const HashingEncoder encoder(cfg.model.persona_dim, derived_seed(cfg.seed, "encoder"), cfg.encoder_buckets);
  std::map<int, std::vector<Tokens>> by_personality;
  for (const auto& u : train_utts) by_personality[u.cluster].push_back(u.tokens);
  std::vector<int> personality_ids;
  std::vector<Tensor> reprs;
  for (const auto& [id, texts] : by_personality) {
    personality_ids.push_back(id);
    reprs.push_back(persona_representation(texts, encoder, id).vector);
  }
  const auto km = kmeans_cluster(reprs, cfg.kmeans_k, derived_seed(cfg.seed, "kmeans"), cfg.kmeans_max_iter);
  std::map<int, int> cluster_of;
  for (std::size_t i = 0; i < personality_ids.size(); ++i) {
    cluster_of[personality_ids[i]] = static_cast<int>(km.assignment[i]);
  }

  // Rank clusters by how well a binary classifier separates them.
  std::vector<PersonaUtterance> clustered;
  for (const auto& u : train_utts) clustered.push_back({u.tokens, cluster_of.at(u.cluster), std::nullopt});
  std::map<int, double> accuracy;
  for (std::size_t c = 0; c < cfg.kmeans_k; ++c) {
    const int cluster = static_cast<int>(c);
    bool present = false;
    for (const auto& u : clustered) present = present || u.cluster == cluster;
    if (!present) continue;
    const auto balanced = build_balanced_dataset(cluster, clustered, derived_seed(cfg.seed, "select_balanced"));
    const auto sp = split_indices(balanced.size(), cfg.train_fraction, cfg.dev_fraction,
                                  derived_seed(cfg.seed, "select_split/" + std::to_string(c)));
    const auto tr = to_examples(select(balanced, sp.train), vocab);
    const auto dv = to_examples(select(balanced, sp.dev), vocab);
    const auto te = to_examples(select(balanced, sp.test), vocab);
    auto result = train_classifier(cluster, vocab.size(), tr, dv, cfg.classifier);
    accuracy[cluster] = te.empty() ? result.dev_accuracy[result.best_epoch]
                                   : evaluate_classifier(result.model, te).accuracy;
  }
  auto top = select_top_clusters(accuracy, n_personas);

  // Persona j is the selected cluster with the j-th smallest member personality id.
  std::map<int, int> smallest;
  for (const auto& [pid, c] : cluster_of) {
    if (!smallest.count(c)) smallest[c] = pid;
  }
  std::sort(top.begin(), top.end(), [&](int a, int b) { return smallest.at(a) < smallest.at(b); });
  std::map<int, int> persona_of_cluster;
  for (std::size_t j = 0; j < top.size(); ++j) persona_of_cluster[top[j]] = static_cast<int>(j);

  std::vector<PersonaUtterance> persona_utts;
  for (const auto& u : utts) {
    auto it = persona_of_cluster.find(cluster_of.count(u.cluster) ? cluster_of.at(u.cluster) : -1);
    if (it != persona_of_cluster.end()) persona_utts.push_back({u.tokens, it->second, std::nullopt});
  }
  write_file_atomic(art.persona_utterances(), utterances_jsonl(persona_utts));

  std::vector<PersonaRepr> personas;
  for (std::size_t j = 0; j < top.size(); ++j) {
    std::vector<Tokens> texts;
    for (const auto& u : train_utts) {
      if (cluster_of.at(u.cluster) == top[j]) texts.push_back(u.tokens);
    }
    personas.push_back(persona_representation(texts, encoder, static_cast<int>(j)));
  }
  const auto style = story_style_representation(train_stories, encoder);
  Checkpoint space;
  space.metadata = json{{"kind", "persona_space"}, {"encoder", encoder.kind()}, {"dim", encoder.dim()}}.dump();
  add_persona_space(space, personas, style);
  save_checkpoint(art.persona_space(), space);

  json report = {{"k", cfg.kmeans_k},
                 {"kmeans_iterations", km.iterations},
                 {"kmeans_inertia", km.inertia_history},
                 {"personality_cluster", json::object()},
                 {"cluster_accuracy", json::object()},
                 {"selected_clusters", top},
                 {"persona_sizes", json::array()}};
  for (const auto& [pid, c] : cluster_of) report["personality_cluster"][std::to_string(pid)] = c;
  for (const auto& [c, a] : accuracy) report["cluster_accuracy"][std::to_string(c)] = a;
  for (const auto& p : personas) report["persona_sizes"].push_back(p.count);
  write_file_atomic(art.personas(), report.dump(2) + "\n");

  std::ostringstream msg;
  msg << "selected clusters";
  for (auto c : top) msg << " " << c;
  msg << " from k = " << cfg.kmeans_k << "; vocabulary " << vocab.size();
  return msg.str();
}

std::string stage_train_classifiers(const PipelineConfig& cfg) {
  ensure_persona_space(cfg);
  const Artifacts art = prepare_out(cfg, "train-classifiers");
  const Vocabulary vocab = load_vocab(art);
  const auto utts = load_utterances(art.persona_utterances());
  std::vector<TextCnnClassifier> models;
  json report = json::array();
  for (std::size_t j = 0; j < cfg.model.n_personas; ++j) {
    const int persona = static_cast<int>(j);
    const auto balanced = build_balanced_dataset(persona, utts, derived_seed(cfg.seed, "classifier_balanced"));
    const auto sp = split_indices(balanced.size(), cfg.train_fraction, cfg.dev_fraction,
                                  derived_seed(cfg.seed, "classifier_split/" + std::to_string(j)));
    const auto tr = to_examples(select(balanced, sp.train), vocab);
    const auto dv = to_examples(select(balanced, sp.dev), vocab);
    const auto te = to_examples(select(balanced, sp.test), vocab);
    auto result = train_classifier(persona, vocab.size(), tr, dv, cfg.classifier);
    json entry = {{"persona", persona},
                  {"train_records", tr.size()},
                  {"best_epoch", result.best_epoch},
                  {"train_loss", result.train_loss},
                  {"dev_accuracy", result.dev_accuracy}};
    if (!te.empty()) {
      const auto m = evaluate_classifier(result.model, te);
      entry["test_accuracy"] = m.accuracy;
      entry["test_f1"] = m.f1;
    }
    report.push_back(entry);
    models.push_back(std::move(result.model));
  }
  save_classifiers(art.classifiers(), models);
  write_file_atomic(art.classifier_report(), report.dump(2) + "\n");
  std::ostringstream msg;
  msg << "trained " << models.size() << " classifiers; test accuracy";
  for (const auto& e : report) {
    if (e.contains("test_accuracy")) msg << " " << e["test_accuracy"].get<double>();
  }
  return msg.str();
}

std::string stage_train_generator(const PipelineConfig& cfg) {
  const std::string stage = "train-generator-" + std::string(variant_name(cfg.variant));
  validate(cfg.model, cfg.variant);
  if (is_persona_variant(cfg.variant)) ensure_classifiers(cfg);
  else ensure_persona_space(cfg);
  const Artifacts art = prepare_out(cfg, stage);
  const Vocabulary vocab = load_vocab(art);
  const auto train = load_split(art, "train");
  const auto space = load_checkpoint(art.persona_space());
  auto personas = load_persona_reprs(space, cfg.model.n_personas);
  auto style = load_story_style(space);
  std::vector<TextCnnClassifier> clfs;
  if (is_persona_variant(cfg.variant)) clfs = load_checked_classifiers(art, cfg, vocab.size());

  const auto stories = prepare_stories(train, vocab, cfg.train.max_sentence_len);
  auto result = train_generator(stories, clfs, std::move(personas), std::move(style), cfg.train, cfg.model,
                                cfg.variant, vocab.size());
  save_model(art.generator(cfg.variant), result.model, pipeline_config_json(cfg));
  json hist = {{"variant", std::string(variant_name(cfg.variant))},
               {"epoch_total_loss", result.epoch_total_loss},
               {"epoch_generation_loss", result.epoch_generation_loss}};
  write_file_atomic(art.history(cfg.variant), hist.dump(2) + "\n");
  return "trained " + std::string(variant_name(cfg.variant)) + " for " +
         std::to_string(result.epoch_total_loss.size()) + " epochs; final loss " +
         std::to_string(result.epoch_total_loss.back()) + "; wrote " + art.generator(cfg.variant).string();
}

std::string stage_generate(const PipelineConfig& cfg, std::optional<int> persona) {
  const std::string stage = "generate-" + std::string(variant_name(cfg.variant));
  ensure_generator(cfg);
  const Artifacts art = prepare_out(cfg, stage);
  const Vocabulary vocab = load_vocab(art);
  const auto model = load_model(art.generator(cfg.variant), cfg.variant);
  if (model.vocab_size() != vocab.size()) throw ConfigError("generator vocabulary does not match vocab.json");
  const auto test = load_split(art, "test");
  std::string out;
  for (const auto& s : test) {
    const int target = persona.value_or(*s.persona);
    const auto gen = generate_story(model, s.image_features, target, story_decode_config(cfg.decode, s.id));
    json sentences = json::array();
    for (const auto& ids : gen) sentences.push_back(detokenize(vocab.decode(ids)));
    out += json{{"id", s.id}, {"persona", target}, {"sentences", sentences}}.dump() + "\n";
  }
  write_file_atomic(art.generated(cfg.variant), out);
  return "generated " + std::to_string(test.size()) + " stories to " + art.generated(cfg.variant).string();
}

std::string stage_evaluate(const PipelineConfig& cfg) {
  const std::string stage = "evaluate-" + std::string(variant_name(cfg.variant));
  ensure_generator(cfg);
  ensure_classifiers(cfg);
  const Artifacts art = prepare_out(cfg, stage);
  const Vocabulary vocab = load_vocab(art);
  const auto model = load_model(art.generator(cfg.variant), cfg.variant);
  const auto clfs = load_checked_classifiers(art, cfg, vocab.size());
  const auto test = load_split(art, "test");
  EvalOptions opts{cfg.decode, cfg.rouge_beta, cfg.rouge_granularity};
  const auto rep = corpus_report(model, test, vocab, clfs, opts, pipeline_config_json(cfg));
  write_file_atomic(art.report_json(cfg.variant), rep.to_json());
  write_file_atomic(art.report_table(cfg.variant), rep.to_table());
  write_file_atomic(art.report_raw(cfg.variant), rep.raw_jsonl());
  return rep.to_table();
}

}  // namespace pstory
