#include "pstory/cli.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pstory/error.hpp"
#include "pstory/pipeline.hpp"

namespace pstory {

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
  std::optional<int> persona;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config, "pipeline config (JSON)");
  sub->add_option("--seed", flags.seed, "override every seed in the config");
  sub->add_option("--out", flags.out, "output directory");
}

void add_variant(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--variant", flags.variant, "model variant")
      ->check(CLI::IsMember({"glocal", "mpp", "lepc", "lepd", "sepc", "sepd"}));
}

PipelineConfig resolve(const CommonFlags& flags) {
  ConfigOverrides o;
  o.seed = flags.seed;
  if (!flags.out.empty()) o.out_dir = flags.out;
  if (!flags.variant.empty()) o.variant = parse_variant(flags.variant);
  std::optional<std::filesystem::path> path;
  if (!flags.config.empty()) path = flags.config;
  return load_pipeline_config(path, o);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Persona-conditioned visual story generation pipeline", "pstory"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::function<std::string(const PipelineConfig&)> action;

  auto* synth = app.add_subcommand("synth-data", "write the synthetic story and utterance corpora");
  add_common(synth, flags);
  synth->callback([&] { action = stage_synth_data; });

  auto* cluster = app.add_subcommand("cluster-personas", "cluster utterances and build persona representations");
  add_common(cluster, flags);
  cluster->callback([&] { action = stage_cluster_personas; });

  auto* clf = app.add_subcommand("train-classifiers", "train one binary persona classifier per persona");
  add_common(clf, flags);
  clf->callback([&] { action = stage_train_classifiers; });

  auto* gen_train = app.add_subcommand("train-generator", "train a story generator");
  add_common(gen_train, flags);
  add_variant(gen_train, flags);
  gen_train->callback([&] { action = stage_train_generator; });

  auto* gen = app.add_subcommand("generate", "generate stories for the test split");
  add_common(gen, flags);
  add_variant(gen, flags);
  gen->add_option("--persona", flags.persona, "generate every story at this persona")->check(CLI::Range(0, 4));
  gen->callback([&] { action = [&](const PipelineConfig& c) { return stage_generate(c, flags.persona); }; });

  auto* eval = app.add_subcommand("evaluate", "score a trained generator on the test split");
  add_common(eval, flags);
  add_variant(eval, flags);
  eval->callback([&] { action = stage_evaluate; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const PipelineConfig cfg = resolve(flags);
    if (flags.persona && *flags.persona >= static_cast<int>(cfg.model.n_personas)) {
      throw ConfigError("--persona " + std::to_string(*flags.persona) + " is out of range");
    }
    out << action(cfg) << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace pstory
