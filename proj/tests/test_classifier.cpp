#include <cmath>

#include "doctest.h"
#include "pstory/classifier.hpp"
#include "pstory/error.hpp"
#include "pstory/gradcheck.hpp"
#include "pstory/persona_space.hpp"
#include "pstory/synth.hpp"
#include "test_util.hpp"

using namespace pstory;

namespace {

ClassifierConfig small_config() {
  ClassifierConfig cfg;
  cfg.embed_dim = 6;
  cfg.channels = 4;
  cfg.widths = {1, 2, 3};
  cfg.seed = 21;
  return cfg;
}

std::vector<TokenId> random_ids(Rng& rng, std::size_t vocab, std::size_t max_len) {
  std::vector<TokenId> ids(1 + rng.below(max_len));
  for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
  return ids;
}

Tensor one_hot(std::size_t n, std::size_t i) {
  Tensor t({n});
  t[i] = 1.0;
  return t;
}

struct MarkerData {
  Vocabulary vocab;
  std::vector<ClassifierExample> train, dev, test;
  std::vector<std::string> target_markers;
};

MarkerData marker_data(int cluster, std::size_t per_personality) {
  SynthConfig scfg;
  scfg.utterances_per_personality = per_personality;
  auto corpus = synthesize_corpus(scfg);
  std::vector<Tokens> text;
  for (const auto& u : corpus.utterances) text.push_back(u.tokens);
  MarkerData d{Vocabulary::build(text, 1), {}, {}, {}, corpus.lexicons[cluster]};
  std::vector<PersonaUtterance> selected;
  for (const auto& u : corpus.utterances) {
    if (u.cluster < static_cast<int>(scfg.n_personas)) selected.push_back(u);
  }
  auto balanced = build_balanced_dataset(cluster, selected, 4);
  auto split = split_indices(balanced.size(), 0.8, 0.1, 4);
  d.train = to_examples(select(balanced, split.train), d.vocab);
  d.dev = to_examples(select(balanced, split.dev), d.vocab);
  d.test = to_examples(select(balanced, split.test), d.vocab);
  return d;
}

}  // namespace

TEST_CASE("classify_hard basics") {
  TextCnnClassifier model(0, 20, small_config());
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double p = classify_hard(model, random_ids(rng, 20, 8));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  CHECK_THROWS_AS(classify_hard(model, std::vector<TokenId>{1, 20}), IndexError);
  CHECK_THROWS_AS(classify_hard(model, std::vector<TokenId>{}), EmptyInputError);

  model.params()[model.output().weight].fill(0.0);
  model.params()[model.output().bias].fill(0.0);
  for (int i = 0; i < 10; ++i) CHECK(classify_hard(model, random_ids(rng, 20, 8)) == 0.5);
}

TEST_CASE("classify_soft agrees with classify_hard on one-hot input") {
  TextCnnClassifier model(1, 30, small_config());
  Rng rng(17);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto ids = random_ids(rng, 30, 10);
    std::vector<Tensor> dists;
    for (auto id : ids) dists.push_back(one_hot(30, id));
    worst = std::max(worst, std::fabs(classify_soft(model, dists) - classify_hard(model, ids)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("classify_soft on uniform distributions uses the mean embedding") {
  const std::size_t V = 12;
  TextCnnClassifier model(2, V, small_config());
  const Tensor& table = model.params()[model.embedding()];
  Tensor mean({table.cols()});
  for (std::size_t j = 0; j < table.cols(); ++j) {
    double acc = 0;
    for (std::size_t r = 0; r < V; ++r) acc += table.at(r, j) / static_cast<double>(V);
    mean[j] = acc;
  }
  for (std::size_t len : {1u, 3u, 5u}) {
    std::vector<Tensor> dists(len, Tensor({V}, 1.0 / static_cast<double>(V)));
    Tape tape;
    Binding bind(tape, model.params(), false);
    std::vector<Var> embs(len, tape.constant(mean));
    const double z = tape.value(model.logit_from_embeddings(bind, embs, nullptr)).item();
    CHECK(classify_soft(model, dists) == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-12));
  }
}

TEST_CASE("classify_soft contract") {
  TextCnnClassifier model(0, 5, small_config());
  CHECK_THROWS_AS(classify_soft(model, std::vector<Tensor>{Tensor::vector({0.5, 0.5, 0.1, 0, 0})}), ContractError);
  CHECK_THROWS_AS(classify_soft(model, std::vector<Tensor>{Tensor::vector({1.5, -0.5, 0, 0, 0})}), ContractError);
  CHECK_THROWS_AS(classify_soft(model, std::vector<Tensor>{Tensor::vector({1, 0})}), DimensionError);
  CHECK_NOTHROW(classify_soft(model, std::vector<Tensor>{Tensor::vector({0.2, 0.2, 0.2, 0.2, 0.2 + 5e-7})}));
}

TEST_CASE("classify_soft gradient with respect to input distributions") {
  const std::size_t V = 7, L = 4;
  TextCnnClassifier model(0, V, small_config());
  ParamStore scores;
  Rng rng(8);
  for (std::size_t i = 0; i < L; ++i) {
    Tensor t({V});
    for (auto& v : t.span()) v = rng.normal();
    scores.add("scores/" + std::to_string(i), t);
  }
  auto loss = [&](Tape& tape, Binding& bind) {
    Binding frozen(tape, model.params(), false);
    std::vector<Var> dists;
    for (std::size_t i = 0; i < L; ++i) dists.push_back(tape.softmax(bind(ParamId{i})));
    return tape.sigmoid_bce(model.logit_soft(frozen, dists), 1);
  };
  auto result = finite_difference_check(loss, scores);
  CHECK(result.max_rel_error < 1e-4);
  CHECK(result.coordinates == V * L);
}

TEST_CASE("classifier metrics") {
  SUBCASE("all correct") {
    std::vector<double> p{0.9, 0.1, 0.8, 0.2};
    std::vector<int> y{1, 0, 1, 0};
    auto m = metrics_from_predictions(p, y);
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SUBCASE("all positive on a balanced set") {
    std::vector<double> p(10, 0.7);
    std::vector<int> y{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    auto m = metrics_from_predictions(p, y);
    CHECK(m.accuracy == 0.5);
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("exact one half is negative") {
    auto m = metrics_from_predictions(std::vector<double>{0.5}, std::vector<int>{1});
    CHECK(m.fn == 1);
  }
  SUBCASE("confusion matrix oracle") {
    Rng rng(5);
    std::vector<double> p(100);
    std::vector<int> y(100);
    for (int i = 0; i < 100; ++i) {
      p[i] = rng.uniform();
      y[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    int cm[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < 100; ++i) cm[y[i]][p[i] > 0.5 ? 1 : 0]++;
    const double prec = static_cast<double>(cm[1][1]) / (cm[1][1] + cm[0][1]);
    const double rec = static_cast<double>(cm[1][1]) / (cm[1][1] + cm[1][0]);
    auto m = metrics_from_predictions(p, y);
    CHECK(m.accuracy == doctest::Approx((cm[0][0] + cm[1][1]) / 100.0).epsilon(1e-15));
    CHECK(m.precision == doctest::Approx(prec).epsilon(1e-15));
    CHECK(m.recall == doctest::Approx(rec).epsilon(1e-15));
    CHECK(m.f1 == doctest::Approx(2 * prec * rec / (prec + rec)).epsilon(1e-15));
  }
  SUBCASE("empty") { CHECK_THROWS_AS(metrics_from_predictions({}, {}), EmptyInputError); }
}

TEST_CASE("train_classifier on separable markers") {
  auto data = marker_data(2, 320);
  REQUIRE(data.train.size() >= 500);
  ClassifierConfig cfg;
  cfg.epochs = 6;
  auto result = train_classifier(2, data.vocab.size(), data.train, data.dev, cfg);
  CHECK(result.dev_accuracy[result.best_epoch] >= 0.95);
  CHECK(evaluate_classifier(result.model, data.test).accuracy >= 0.95);
  for (std::size_t e = 1; e < result.train_loss.size(); ++e) CHECK(result.train_loss[e] <= result.train_loss[e - 1]);

  std::vector<TokenId> pure;
  for (const auto& m : data.target_markers) pure.push_back(data.vocab.id(m));
  CHECK(classify_hard(result.model, pure) > 0.9);

  auto again = train_classifier(2, data.vocab.size(), data.train, data.dev, cfg);
  CHECK(again.model.params() == result.model.params());

  SUBCASE("checkpoint round trip") {
    testing::TempDir dir("clf");
    std::vector<TextCnnClassifier> models{result.model, TextCnnClassifier(4, data.vocab.size(), small_config())};
    save_classifiers(dir / "c.ckpt", models);
    auto back = load_classifiers(dir / "c.ckpt");
    REQUIRE(back.size() == 2);
    CHECK(back[0].persona() == 2);
    CHECK(back[0].params() == models[0].params());
    CHECK(back[1].params() == models[1].params());
    CHECK(back[1].config().widths == small_config().widths);
    CHECK(load_checkpoint(dir / "c.ckpt").find("clf/4/embedding") != nullptr);
  }
}

TEST_CASE("train_classifier errors") {
  std::vector<ClassifierExample> none;
  CHECK_THROWS_AS(train_classifier(0, 10, none, none, small_config()), DataError);
  std::vector<ClassifierExample> bad{{{1, 2}, 3}};
  CHECK_THROWS_AS(train_classifier(0, 10, bad, none, small_config()), DataError);
  auto cfg = small_config();
  cfg.widths.clear();
  CHECK_THROWS_AS(TextCnnClassifier(0, 10, cfg), ConfigError);
}
