// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. All tolerances and budgets are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "model_fixture.hpp"
#include "pstory/checkpoint.hpp"
#include "pstory/cli.hpp"
#include "pstory/evaluation.hpp"
#include "pstory/gradcheck.hpp"
#include "pstory/layers.hpp"
#include "pstory/pipeline.hpp"
#include "test_util.hpp"

using namespace pstory;

namespace {

// Criterion 1
constexpr double kGradEps = 1e-4;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 120.0;
// Criterion 2
constexpr std::size_t kOverfitStories = 8;
constexpr std::size_t kOverfitEpochs = 500;
constexpr double kOverfitLoss = 0.05;
constexpr double kOverfitSeconds = 300.0;
// Criterion 3
constexpr double kClassifierAccuracy = 0.95;
// Criterion 4
constexpr double kConditioningMargin = 0.10;
// Criterion 5
constexpr int kLossTrials = 1000;
constexpr double kLossUlps = 8.0;
// Criterion 7
constexpr int kRougePairs = 1000;
constexpr std::size_t kRougeMaxLen = 12;
constexpr std::size_t kRougeAlphabet = 6;
// Criterion 8
constexpr int kSoftHardSentences = 1000;
constexpr double kSoftHardTol = 1e-9;
// Criterion 9
constexpr std::size_t kBlobPoints = 200;
constexpr double kBlobAgreement = 0.9;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o) {
  std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void run(int id, const char* name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, name, o);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = rng.uniform(-scale, scale);
  return t;
}

// Gold ids without BOS and everything from EOS on.
std::vector<TokenId> gold_body(const std::vector<TokenId>& gold) {
  std::vector<TokenId> out;
  for (std::size_t i = 1; i < gold.size() && gold[i] != Vocabulary::kEos; ++i) out.push_back(gold[i]);
  return out;
}

// ---------------------------------------------------------------- criterion 1

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, GradCheckResult>> results;
  Rng rng(101, "acceptance/grad");

  {
    ParamStore ps;
    auto lin = LinearParams::create(ps, "lin", 5, 4, 1);
    ps.add("x", random_tensor({5}, rng));
    const Tensor probe = random_tensor({4}, rng);
    results.emplace_back("linear", finite_difference_check(
                                       [&](Tape& t, Binding& b) {
                                         return t.sum(t.mul(t.tanh(linear_forward(b, lin, b("x"))), t.constant(probe)));
                                       },
                                       ps, kGradEps));
  }
  {
    ParamStore ps;
    ps.add("table", random_tensor({7, 3}, rng));
    const Tensor probe = random_tensor({3}, rng);
    results.emplace_back("embedding", finite_difference_check(
                                          [&](Tape& t, Binding& b) {
                                            auto e = t.add(embedding_lookup(t, b("table"), 2), embedding_lookup(t, b("table"), 5));
                                            return t.sum(t.mul(t.sigmoid(e), t.constant(probe)));
                                          },
                                          ps, kGradEps));
  }
  {
    ParamStore ps;
    auto p = LstmParams::create(ps, "lstm", 3, 4, 2);
    ps.add("x", random_tensor({3}, rng));
    const Tensor probe = random_tensor({8}, rng);
    results.emplace_back("lstm cell", finite_difference_check(
                                          [&](Tape& t, Binding& b) {
                                            auto s = lstm_cell_step(b, p, b("x"), lstm_zero_state(t, 4));
                                            s = lstm_cell_step(b, p, b("x"), s);
                                            return t.sum(t.mul(t.concat({s.h, s.c}), t.constant(probe)));
                                          },
                                          ps, kGradEps));
  }
  {
    ParamStore ps;
    auto p = BiLstmParams::create(ps, "bi", 3, 2, 3);
    for (int i = 0; i < 5; ++i) ps.add("x" + std::to_string(i), random_tensor({3}, rng));
    const Tensor probe = random_tensor({4}, rng);
    results.emplace_back("bilstm", finite_difference_check(
                                       [&](Tape& t, Binding& b) {
                                         std::vector<Var> seq;
                                         for (int i = 0; i < 5; ++i) seq.push_back(b("x" + std::to_string(i)));
                                         auto out = bilstm_encode(b, p, seq);
                                         std::vector<Var> terms;
                                         for (auto v : out) terms.push_back(t.sum(t.mul(v, t.constant(probe))));
                                         std::vector<double> w(terms.size(), 1.0);
                                         return t.weighted_sum(terms, w);
                                       },
                                       ps, kGradEps));
  }
  {
    ParamStore ps;
    std::vector<ConvFilter> filters;
    for (std::size_t width : {1, 2, 3}) {
      auto w = ps.add_uniform("w" + std::to_string(width), {3, width * 2}, width * 2, 4);
      auto b = ps.add_uniform("b" + std::to_string(width), {3}, width * 2, 4);
      filters.push_back({w, b, width, 3});
    }
    for (int i = 0; i < 4; ++i) ps.add("x" + std::to_string(i), random_tensor({2}, rng));
    Rng mask_rng(5);
    const Tensor mask = dropout_mask({9}, 0.3, mask_rng);
    const Tensor probe = random_tensor({9}, rng);
    results.emplace_back("conv+relu+dropout", finite_difference_check(
                                                  [&](Tape& t, Binding& b) {
                                                    std::vector<Var> seq;
                                                    for (int i = 0; i < 4; ++i) seq.push_back(b("x" + std::to_string(i)));
                                                    auto h = t.dropout(t.relu(conv1d_maxpool(b, filters, seq, 2)), mask);
                                                    return t.sum(t.mul(h, t.constant(probe)));
                                                  },
                                                  ps, kGradEps));
  }
  {
    ParamStore ps;
    ps.add("logits", random_tensor({6}, rng, 2.0));
    ps.add("w", random_tensor({6, 6}, rng));
    results.emplace_back("softmax/ce/matvec_t", finite_difference_check(
                                                    [&](Tape& t, Binding& b) {
                                                      auto p = t.softmax(b("logits"));
                                                      auto mixed = t.matvec_t(b("w"), p);
                                                      auto sl = t.slice(mixed, 1, 4);
                                                      auto parts = std::vector<Var>{t.sum(sl), softmax_cross_entropy(t, b("logits"), 3)};
                                                      std::vector<double> w{0.3, 0.7};
                                                      return t.weighted_sum(parts, w);
                                                    },
                                                    ps, kGradEps));
  }
  {
    ParamStore ps;
    ps.add("a", random_tensor({4}, rng));
    ps.add("b", random_tensor({4}, rng));
    ps.add("c", random_tensor({4}, rng));
    results.emplace_back("max_over/bce", finite_difference_check(
                                             [&](Tape& t, Binding& b) {
                                               std::vector<Var> items{b("a"), b("b"), b("c")};
                                               auto m = t.max_over(items);
                                               auto logit = t.sum(t.sub(t.scale(m, 0.5), b("a")));
                                               return t.add(sigmoid_bce(t, logit, 1), sigmoid_bce(t, t.sum(b("c")), 0));
                                             },
                                             ps, kGradEps));
  }
  {
    // Whole classifier on soft input, gradients into both classifier and input scores.
    ClassifierConfig cc;
    cc.embed_dim = 4;
    cc.widths = {1, 2, 3};
    cc.channels = 3;
    TextCnnClassifier clf(0, 9, cc);
    ParamStore ps = clf.params();
    for (int i = 0; i < 4; ++i) ps.add("s" + std::to_string(i), random_tensor({9}, rng, 2.0));
    results.emplace_back("classifier (soft input)",
                         finite_difference_check(
                             [&](Tape& t, Binding& b) {
                               std::vector<Var> dists;
                               for (int i = 0; i < 4; ++i) dists.push_back(t.softmax(b("s" + std::to_string(i))));
                               Rng drop(6, "acceptance/classifier_dropout");
                               return sigmoid_bce(t, clf.logit_soft(b, dists, &drop), 1);
                             },
                             ps, kGradEps));
  }

  const auto f = testing::tiny_fixture();
  for (auto v : kAllVariants) {
    GeneratorModel m(v, f.model, f.vocab.size(), f.personas, f.style, 3);
    const auto& story = f.stories[0];
    auto r = finite_difference_check(
        [&](Tape&, Binding& bind) {
          Rng drop(9, "acceptance/generator_dropout");
          return story_loss(bind, m, story, f.classifiers, 0.5, &drop, 0.3).total;
        },
        m.params(), kGradEps);
    results.emplace_back(std::string(variant_name(v)), r);
  }

  Outcome o;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, r] : results) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name + " " + r.worst_param;
    }
    if (!(r.max_rel_error < kGradTol)) o.pass = false;
  }
  const double secs = seconds_since(t0);
  if (!(secs < kGradSeconds)) o.pass = false;
  o.detail = std::to_string(results.size()) + " checks (eps " + fmt("%.0e", kGradEps) + "), worst rel err " +
             fmt("%.2e", worst) + " at " + worst_name + " (< " + fmt("%.0e", kGradTol) + "), " + fmt("%.1f", secs) +
             " s (< " + fmt("%.0f", kGradSeconds) + " s)";
  return o;
}

// ---------------------------------------------------------------- criterion 2

Outcome overfit() {
  SynthConfig sc;
  sc.stories_per_persona = 2;
  sc.distractor_personalities = 0;
  sc.utterances_per_personality = 60;
  ModelConfig mc;
  auto f = testing::make_fixture(sc, mc, ClassifierConfig{}, 24);
  f.stories.resize(kOverfitStories);

  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 1;
  tc.dropout = 0.0;
  tc.weight_decay = 0.0;
  tc.epochs = kOverfitEpochs;
  tc.max_sentence_len = 24;
  tc.stop_below = kOverfitLoss;

  Outcome o;
  std::ostringstream detail;
  for (auto v : kAllVariants) {
    const auto t0 = Clock::now();
    auto r = train_generator(f.stories, f.classifiers, f.personas, f.style, tc, mc, v, f.vocab.size());
    std::size_t exact = 0, total = 0;
    for (const auto& s : f.stories) {
      const auto g = generate_story(r.model, s.features, s.persona, DecodeConfig{});
      for (std::size_t k = 0; k < kStoryLength; ++k, ++total) exact += g[k] == gold_body(s.gold[k]);
    }
    const double secs = seconds_since(t0);
    const double lg = r.epoch_generation_loss.back();
    const bool ok = lg < kOverfitLoss && exact == total && secs < kOverfitSeconds;
    o.pass = o.pass && ok;
    detail << variant_name(v) << " " << r.epoch_generation_loss.size() << " ep Lg " << fmt("%.4f", lg) << " total "
           << fmt("%.3f", r.epoch_total_loss.back()) << " exact " << exact << "/" << total << " " << fmt("%.1f", secs)
           << "s; ";
  }
  o.detail = detail.str() + "need generation loss < " + fmt("%.2f", kOverfitLoss) + " within " +
             std::to_string(kOverfitEpochs) + " epochs, all sentences exact, < " + fmt("%.0f", kOverfitSeconds) +
             " s each";
  return o;
}

// ------------------------------------------------------- criteria 3 and 4 data

struct MarkerWorld {
  testing::ModelFixture fixture;
  std::vector<TextCnnClassifier> classifiers;
  std::vector<double> heldout_accuracy;
  std::vector<TrainingStory> train;
  std::vector<StoryExample> test;
};

MarkerWorld build_marker_world() {
  SynthConfig sc;
  sc.stories_per_persona = 40;
  sc.distractor_personalities = 0;
  sc.seed = 21;
  ModelConfig mc;
  ClassifierConfig cc;
  MarkerWorld w{testing::make_fixture(sc, mc, cc, 24), {}, {}, {}, {}};
  for (int p = 0; p < static_cast<int>(mc.n_personas); ++p) {
    const auto bal = build_balanced_dataset(p, w.fixture.corpus.utterances, 31);
    const auto sp = split_indices(bal.size(), 0.8, 0.1, 41 + static_cast<std::uint64_t>(p));
    const auto tr = to_examples(select(bal, sp.train), w.fixture.vocab);
    const auto dv = to_examples(select(bal, sp.dev), w.fixture.vocab);
    const auto te = to_examples(select(bal, sp.test), w.fixture.vocab);
    auto r = train_classifier(p, w.fixture.vocab.size(), tr, dv, cc);
    w.heldout_accuracy.push_back(evaluate_classifier(r.model, te).accuracy);
    w.classifiers.push_back(std::move(r.model));
  }
  const auto sp = split_indices(w.fixture.corpus.stories.size(), 0.8, 0.1, 51);
  w.train = select(w.fixture.stories, sp.train);
  w.test = select(w.fixture.corpus.stories, sp.test);
  return w;
}

Outcome classifier_separability(const MarkerWorld& w) {
  Outcome o;
  std::ostringstream detail;
  detail << "held-out accuracy";
  for (double a : w.heldout_accuracy) {
    detail << " " << fmt("%.3f", a);
    o.pass = o.pass && a >= kClassifierAccuracy;
  }
  o.detail = detail.str() + " (each >= " + fmt("%.2f", kClassifierAccuracy) + ")";
  return o;
}

Outcome conditioning_efficacy(const MarkerWorld& w) {
  TrainConfig tc;
  tc.epochs = 30;
  tc.learning_rate = 3e-3;
  tc.dropout = 0.1;
  tc.batch_size = 4;
  tc.max_sentence_len = 24;
  std::map<Variant, double> acc;
  for (auto v : kAllVariants) {
    auto r = train_generator(w.train, w.classifiers, w.fixture.personas, w.fixture.style, tc, w.fixture.model, v,
                             w.fixture.vocab.size());
    const auto rep = corpus_report(r.model, w.test, w.fixture.vocab, w.classifiers, EvalOptions{});
    std::size_t hits = 0;
    for (const auto& rec : rep.raw) hits += rec.probability > 0.5;
    acc[v] = static_cast<double>(hits) / static_cast<double>(rep.raw.size());
  }
  Outcome o;
  std::ostringstream detail;
  const double base = acc[Variant::Glocal];
  detail << "sentence-level persona accuracy glocal " << fmt("%.3f", base);
  for (auto v : kAllVariants) {
    if (v == Variant::Glocal) continue;
    detail << ", " << variant_name(v) << " " << fmt("%.3f", acc[v]);
    o.pass = o.pass && acc[v] >= base + kConditioningMargin;
  }
  o.detail = detail.str() + " (each >= glocal + " + fmt("%.2f", kConditioningMargin) + ")";
  return o;
}

// ---------------------------------------------------------------- criterion 5

Outcome loss_arithmetic() {
  Rng rng(55, "acceptance/loss");
  double worst_ulps = 0.0;
  bool alpha_one_exact = true;
  for (int trial = 0; trial < kLossTrials; ++trial) {
    const double lg = rng.uniform(0.0, 10.0);
    std::vector<double> lc(kNumPersonas);
    for (auto& x : lc) x = rng.uniform(0.0, 5.0);
    const double got = multitask_loss(lg, lc, 0.5);
    long double ref = 0.5L * lg;
    long double scale = 0.5L * lg;
    for (double x : lc) {
      ref += 0.1L * x;
      scale += 0.1L * x;
    }
    const double ulps = static_cast<double>(std::fabs(static_cast<long double>(got) - ref) /
                                            (scale * std::numeric_limits<double>::epsilon()));
    worst_ulps = std::max(worst_ulps, ulps);

    Tape t;
    std::vector<Var> lv;
    for (double x : lc) lv.push_back(t.constant(Tensor::scalar(x)));
    const double tape_half = t.value(multitask_loss(t, t.constant(Tensor::scalar(lg)), lv, 0.5)).item();
    if (tape_half != got) worst_ulps = std::numeric_limits<double>::infinity();
    alpha_one_exact = alpha_one_exact && multitask_loss(lg, lc, 1.0) == lg &&
                      t.value(multitask_loss(t, t.constant(Tensor::scalar(lg)), lv, 1.0)).item() == lg;
  }

  // The model's own total agrees with the formula applied to its parts.
  const auto f = testing::tiny_fixture();
  GeneratorModel m(Variant::Lepc, f.model, f.vocab.size(), f.personas, f.style, 3);
  Tape t;
  Binding bind(t, m.params(), false);
  const auto sl = story_loss(bind, m, f.stories[0], f.classifiers, 0.5);
  std::vector<double> parts;
  for (auto v : sl.classifier) parts.push_back(t.value(v).item());
  const bool model_consistent = t.value(sl.total).item() == multitask_loss(t.value(sl.generation).item(), parts, 0.5);

  Outcome o;
  o.pass = worst_ulps <= kLossUlps && alpha_one_exact && model_consistent;
  o.detail = std::to_string(kLossTrials) + " draws, worst deviation from 0.5*Lg + 0.1*sum(Lc) " +
             fmt("%.2f", worst_ulps) + " ulp (<= " + fmt("%.0f", kLossUlps) + "), alpha=1 exact " +
             (alpha_one_exact ? "yes" : "no") + ", model total consistent " + (model_consistent ? "yes" : "no");
  return o;
}

// ---------------------------------------------------------------- criterion 6

Outcome stripping_degeneracy() {
  auto f = testing::tiny_fixture(2);
  for (auto& p : f.personas) p.vector = f.style.vector;
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 2;
  tc.dropout = 0.3;
  tc.max_sentence_len = 8;

  auto run_variant = [&](Variant v) {
    return train_generator(f.stories, f.classifiers, f.personas, f.style, tc, f.model, v, f.vocab.size());
  };
  const auto mpp = run_variant(Variant::Mpp);
  Outcome o;
  std::ostringstream detail;
  for (auto v : {Variant::Sepc, Variant::Sepd}) {
    const auto r = run_variant(v);
    bool losses = r.epoch_total_loss == mpp.epoch_total_loss && r.epoch_generation_loss == mpp.epoch_generation_loss;
    bool stories = true;
    for (const auto& s : f.stories) {
      for (int p = 0; p < static_cast<int>(kNumPersonas); ++p) {
        stories = stories && generate_story(r.model, s.features, p, DecodeConfig{}) ==
                                 generate_story(mpp.model, s.features, p, DecodeConfig{});
      }
    }
    // Per-story losses of the trained models, bit for bit.
    for (const auto& s : f.stories) {
      Tape ta, tb;
      Binding ba(ta, r.model.params(), false), bb(tb, mpp.model.params(), false);
      losses = losses && ta.value(story_loss(ba, r.model, s, f.classifiers, 0.5).total).item() ==
                             tb.value(story_loss(bb, mpp.model, s, f.classifiers, 0.5).total).item();
    }
    o.pass = o.pass && losses && stories;
    detail << variant_name(v) << " vs mpp: losses " << (losses ? "identical" : "differ") << ", greedy outputs "
           << (stories ? "identical" : "differ") << "; ";
  }
  o.detail = detail.str() + "bitwise, " + std::to_string(tc.epochs) + " training epochs with dropout";
  return o;
}

// ---------------------------------------------------------------- criterion 7

std::size_t brute_force_lcs(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    const std::size_t bits = static_cast<std::size_t>(__builtin_popcount(mask));
    if (bits <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask & (1u << i))) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else ++j;
    }
    if (ok) best = bits;
  }
  return best;
}

Outcome rouge_oracle() {
  Rng rng(77, "acceptance/rouge");
  int lcs_mismatch = 0, self_mismatch = 0;
  for (int i = 0; i < kRougePairs; ++i) {
    const std::size_t alphabet = 1 + rng.below(kRougeAlphabet);
    auto draw = [&](std::size_t min_len) {
      std::vector<TokenId> s(min_len + rng.below(kRougeMaxLen - min_len + 1));
      for (auto& x : s) x = static_cast<TokenId>(rng.below(alphabet));
      return s;
    };
    const auto a = draw(0), b = draw(0), x = draw(1);
    if (lcs_length(a, b) != brute_force_lcs(a, b)) ++lcs_mismatch;
    const auto r = rouge_l(x, x);
    if (!(r.precision == 1.0 && r.recall == 1.0 && r.f == 1.0)) ++self_mismatch;
  }
  Outcome o;
  o.pass = lcs_mismatch == 0 && self_mismatch == 0;
  o.detail = std::to_string(kRougePairs) + " pairs (len <= " + std::to_string(kRougeMaxLen) + ", alphabet <= " +
             std::to_string(kRougeAlphabet) + "): LCS mismatches " + std::to_string(lcs_mismatch) +
             ", rouge_l(x,x) != 1 in " + std::to_string(self_mismatch);
  return o;
}

// ---------------------------------------------------------------- criterion 8

Outcome soft_hard() {
  const std::size_t vocab = 60;
  TextCnnClassifier clf(0, vocab, ClassifierConfig{});
  Rng rng(88, "acceptance/softhard");
  double worst = 0.0;
  for (int i = 0; i < kSoftHardSentences; ++i) {
    std::vector<TokenId> ids(1 + rng.below(20));
    std::vector<Tensor> dists;
    for (auto& id : ids) {
      id = static_cast<TokenId>(rng.below(vocab));
      Tensor d({vocab});
      d[id] = 1.0;
      dists.push_back(std::move(d));
    }
    worst = std::max(worst, std::fabs(classify_soft(clf, dists) - classify_hard(clf, ids)));
  }
  Outcome o;
  o.pass = worst <= kSoftHardTol;
  o.detail = std::to_string(kSoftHardSentences) + " sentences, max |soft - hard| " + fmt("%.2e", worst) + " (<= " +
             fmt("%.0e", kSoftHardTol) + ")";
  return o;
}

// ---------------------------------------------------------------- criterion 9

Outcome kmeans_oracle() {
  Rng rng(99, "acceptance/blobs");
  std::vector<Tensor> points;
  std::vector<int> labels;
  for (std::size_t i = 0; i < kBlobPoints; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = label == 0 ? -2.5 : 2.5;
    points.push_back(Tensor::vector({cx + rng.normal(), 1.0 + rng.normal()}));
    labels.push_back(label);
  }
  const auto km = kmeans_cluster(points, 2, 5);
  std::size_t same = 0;
  for (std::size_t i = 0; i < points.size(); ++i) same += static_cast<int>(km.assignment[i]) == labels[i];
  const double agreement =
      std::max(same, points.size() - same) / static_cast<double>(points.size());
  bool monotone = true;
  for (std::size_t i = 1; i < km.inertia_history.size(); ++i) {
    monotone = monotone && km.inertia_history[i] <= km.inertia_history[i - 1];
  }
  Outcome o;
  o.pass = agreement >= kBlobAgreement && monotone;
  o.detail = std::to_string(kBlobPoints) + " points, agreement " + fmt("%.3f", agreement) + " (>= " +
             fmt("%.2f", kBlobAgreement) + "), inertia nonincreasing over " +
             std::to_string(km.inertia_history.size()) + " steps: " + (monotone ? "yes" : "no");
  return o;
}

// --------------------------------------------------------------- criterion 10

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pstory");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) throw std::runtime_error("pstory " + args[1] + " exited " + std::to_string(code) + ": " + err.str());
  return code;
}

std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files[e.path().filename().string()] = read_file(e.path());
  return files;
}

Outcome determinism() {
  testing::TempDir tmp("acceptance");
  const char* config = R"({
    "seed": 13,
    "synth": {"stories_per_persona": 6, "utterances_per_personality": 60, "distractor_personalities": 2},
    "persona": {"k": 6},
    "classifier": {"epochs": 3},
    "model": {"projection_dim": 8, "context_hidden": 4, "decoder_hidden": 12, "embed_dim": 8, "persona_dim": 8},
    "train": {"epochs": 3},
    "decode": {"mode": "sample", "temperature": 0.8}
  })";
  write_file_atomic(tmp / "config.json", config);
  const auto cfg = (tmp / "config.json").string();
  const auto out = (tmp / "run").string();
  const std::vector<Variant> variants{Variant::Glocal, Variant::Lepd, Variant::Sepc};

  auto full_run = [&] {
    for (const char* stage : {"synth-data", "cluster-personas", "train-classifiers"}) {
      cli({stage, "--config", cfg, "--out", out});
    }
    for (auto v : variants) {
      const std::string name(variant_name(v));
      cli({"train-generator", "--config", cfg, "--out", out, "--variant", name});
      cli({"generate", "--config", cfg, "--out", out, "--variant", name});
      cli({"evaluate", "--config", cfg, "--out", out, "--variant", name});
    }
    return snapshot(tmp / "run");
  };
  const auto first = full_run();
  std::filesystem::remove_all(tmp / "run");
  const auto second = full_run();

  std::size_t differing = 0;
  for (const auto& [name, bytes] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != bytes) ++differing;
  }
  differing += second.size() > first.size() ? second.size() - first.size() : 0;

  // Round trip: a model rebuilt from its checkpoint bytes generates exactly what the saved model did.
  std::size_t roundtrip_mismatch = 0, compared = 0;
  const auto vocab = Vocabulary::from_json(first.at("vocab.json"));
  const auto stories = load_stories(tmp / "run" / "stories_prepared.jsonl");
  for (auto v : variants) {
    const auto model = load_model(tmp / "run" / ("generator-" + std::string(variant_name(v)) + ".ckpt"), v);
    const auto again = model_from_checkpoint(decode_checkpoint(encode_checkpoint(model_to_checkpoint(model))), v);
    for (const auto& s : stories) {
      for (auto mode : {DecodeConfig::Mode::Greedy, DecodeConfig::Mode::Sample}) {
        DecodeConfig dc;
        dc.mode = mode;
        dc.seed = 3;
        ++compared;
        roundtrip_mismatch +=
            generate_story(model, s.image_features, *s.persona, dc) != generate_story(again, s.image_features, *s.persona, dc);
      }
    }
    roundtrip_mismatch += encode_checkpoint(model_to_checkpoint(model)) != encode_checkpoint(model_to_checkpoint(again));
  }
  const auto clfs = load_classifiers(tmp / "run" / "classifiers.ckpt");
  const bool clf_roundtrip = encode_checkpoint(classifiers_to_checkpoint(clfs)) ==
                             encode_checkpoint(classifiers_to_checkpoint(classifiers_from_checkpoint(
                                 decode_checkpoint(encode_checkpoint(classifiers_to_checkpoint(clfs))))));

  Outcome o;
  o.pass = differing == 0 && roundtrip_mismatch == 0 && clf_roundtrip && !first.empty();
  o.detail = "two full CLI runs: " + std::to_string(first.size()) + " artifacts, " + std::to_string(differing) +
             " differ; reloaded generators: " + std::to_string(roundtrip_mismatch) + " of " +
             std::to_string(compared) + " decodes differ; classifier round trip " + (clf_roundtrip ? "exact" : "inexact");
  return o;
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  run(1, "gradient suite", gradient_suite);
  run(2, "overfit", overfit);
  std::optional<MarkerWorld> world;
  std::string world_error;
  try {
    world = build_marker_world();
  } catch (const std::exception& e) {
    world_error = e.what();
  }
  run(3, "classifier separability", [&] {
    if (!world) return Outcome{false, "setup failed: " + world_error};
    return classifier_separability(*world);
  });
  run(4, "conditioning efficacy", [&] {
    if (!world) return Outcome{false, "setup failed: " + world_error};
    return conditioning_efficacy(*world);
  });
  run(5, "loss arithmetic", loss_arithmetic);
  run(6, "stripping degeneracy", stripping_degeneracy);
  run(7, "rouge-l oracle", rouge_oracle);
  run(8, "soft/hard classifier", soft_hard);
  run(9, "k-means oracle", kmeans_oracle);
  run(10, "determinism and persistence", determinism);
  std::printf("acceptance: %d of 10 criteria failed (%.1f s)\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
