#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "pstory/dataset.hpp"
#include "pstory/error.hpp"
#include "pstory/synth.hpp"
#include "test_util.hpp"

using namespace pstory;

TEST_CASE("tokenize") {
  CHECK(tokenize("The cat sat.") == Tokens{"the", "cat", "sat", "."});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Hi, hi!") == Tokens{"hi", ",", "hi", "!"});
  CHECK(tokenize("  a\tb\nc;d:e?  ") == Tokens{"a", "b", "c", ";", "d", ":", "e", "?"});
}

TEST_CASE("build_vocab") {
  SUBCASE("min_count filters") {
    auto v = Vocabulary::build({{"a", "a", "b"}}, 2);
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("b"));
    CHECK(v.size() == Vocabulary::kReserved + 1);
  }
  SUBCASE("min_count one keeps everything") {
    auto v = Vocabulary::build({{"x", "y"}, {"z"}}, 1);
    for (auto t : {"x", "y", "z"}) CHECK(v.contains(t));
  }
  SUBCASE("order is frequency then lexicographic, deterministic") {
    std::vector<Tokens> corpus{{"b", "c", "a", "c"}, {"b", "d"}};
    auto v1 = Vocabulary::build(corpus, 1);
    auto v2 = Vocabulary::build(corpus, 1);
    CHECK(v1 == v2);
    CHECK(v1.id("b") == 4);
    CHECK(v1.id("c") == 5);
    CHECK(v1.id("a") == 6);
    CHECK(v1.id("d") == 7);
  }
  SUBCASE("reserved ids are fixed") {
    auto v = Vocabulary::build({{"<pad>", "w"}}, 1);
    CHECK(v.id("<pad>") == Vocabulary::kPad);
    CHECK(v.token(Vocabulary::kBos) == "<bos>");
    CHECK(v.token(Vocabulary::kEos) == "<eos>");
    CHECK(v.id("nope") == Vocabulary::kUnk);
  }
  CHECK_THROWS_AS(Vocabulary::build({}, 0), ConfigError);
}

TEST_CASE("encode_sentence") {
  auto v = Vocabulary::build({{"hi", "there", "friend"}}, 1);
  using V = Vocabulary;
  CHECK(encode_sentence(v, {"hi"}, 5) == std::vector<TokenId>{V::kBos, v.id("hi"), V::kEos, V::kPad, V::kPad});
  CHECK(encode_sentence(v, {"hi", "zzz"}, 5)[2] == V::kUnk);

  Tokens ten(10, "there");
  auto ids = encode_sentence(v, ten, 5);
  CHECK(ids.size() == 5);
  CHECK(ids.front() == V::kBos);
  CHECK(ids.back() == V::kEos);
  CHECK_THROWS_AS(encode_sentence(v, {"hi"}, 1), ContractError);

  SUBCASE("round trip below max_len") {
    Tokens t{"friend", "hi", "there", "hi"};
    CHECK(v.decode(encode_sentence(v, t, 8)) == t);
  }
  SUBCASE("json round trip") {
    CHECK(Vocabulary::from_json(v.to_json()) == v);
  }
}

TEST_CASE("load_stories") {
  testing::TempDir dir("stories");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return dir / name;
  };
  const std::string feats = "[[1,2],[3,4],[5,6],[7,8],[9,10]]";
  const std::string rec1 = R"({"id":"s1","image_features":)" + feats +
                           R"(,"sentences":["A b.","c","d","e","f"],"persona":2})";
  const std::string rec2 = R"({"id":"s2","image_features":)" + feats +
                           R"(,"sentences":["x","y","z","w","v"]})";

  auto stories = load_stories(write("ok.jsonl", rec1 + "\n" + rec2 + "\n"));
  REQUIRE(stories.size() == 2);
  CHECK(stories[0].sentences[0] == Tokens{"a", "b", "."});
  CHECK(stories[0].persona == 2);
  CHECK_FALSE(stories[1].persona.has_value());
  CHECK(stories[1].image_features[4] == Tensor::vector({9, 10}));

  CHECK(load_stories(write("empty.jsonl", "")).empty());

  const std::string bad = R"({"id":"s9","image_features":)" + feats + R"(,"sentences":["a","b","c","d"]})";
  try {
    load_stories(write("bad.jsonl", rec1 + "\n" + bad + "\n"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("s9") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_stories(write("noid.jsonl", R"({"image_features":[],"sentences":[]})")), DataError);
  CHECK_THROWS_AS(load_stories(write("garbage.jsonl", "{not json")), DataError);

  SUBCASE("save and reload") {
    save_stories(dir / "again.jsonl", stories);
    CHECK(load_stories(dir / "again.jsonl") == stories);
  }
}

TEST_CASE("utterances io") {
  testing::TempDir dir("utts");
  std::vector<PersonaUtterance> utts{{{"so", "happy", "!"}, 3, 1}, {{"meh"}, 0, std::nullopt}};
  save_utterances(dir / "u.jsonl", utts);
  CHECK(load_utterances(dir / "u.jsonl") == utts);
  std::ofstream(dir / "bad.jsonl") << R"({"text":"","cluster":1})" << "\n";
  CHECK_THROWS_AS(load_utterances(dir / "bad.jsonl"), DataError);
}

TEST_CASE("assign_personas") {
  auto make = [](std::size_t n) {
    std::vector<StoryExample> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i].id = std::to_string(i);
    return s;
  };
  auto counts = [](const std::vector<StoryExample>& s) {
    std::vector<int> c(5, 0);
    for (const auto& x : s) ++c.at(static_cast<std::size_t>(x.persona.value()));
    return c;
  };
  CHECK(counts(assign_personas(make(10), 5, 1)) == std::vector<int>{2, 2, 2, 2, 2});
  auto c11 = counts(assign_personas(make(11), 5, 1));
  std::sort(c11.rbegin(), c11.rend());
  CHECK(c11 == std::vector<int>{3, 2, 2, 2, 2});
  CHECK(assign_personas(make(37), 5, 9) == assign_personas(make(37), 5, 9));
  CHECK_THROWS_AS(assign_personas(make(3), 0, 1), ConfigError);

  // Partition property over many sizes.
  for (std::size_t n = 0; n < 40; ++n) {
    auto s = assign_personas(make(n), 5, n);
    auto c = counts(s);
    CHECK(static_cast<std::size_t>(c[0] + c[1] + c[2] + c[3] + c[4]) == n);
    CHECK(*std::max_element(c.begin(), c.end()) - *std::min_element(c.begin(), c.end()) <= 1);
  }
}

TEST_CASE("split_indices partitions") {
  auto s = split_indices(101, 0.8, 0.1, 3);
  CHECK(s.train.size() == 80);
  CHECK(s.dev.size() == 10);
  CHECK(s.test.size() == 11);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.dev.begin(), s.dev.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 101);
}

TEST_CASE("synthesize_corpus") {
  SynthConfig cfg;
  cfg.stories_per_persona = 8;
  cfg.utterances_per_personality = 20;

  SUBCASE("overlapping lexicons are rejected") {
    SynthConfig bad = cfg;
    bad.n_personas = 2;
    bad.lexicons = {{"alpha", "shared"}, {"beta", "shared"}};
    CHECK_THROWS_AS(synthesize_corpus(bad), ConfigError);
  }

  SUBCASE("no utterance mixes markers of two personas") {
    SynthConfig two = cfg;
    two.n_personas = 2;
    two.distractor_personalities = 0;
    two.lexicons = {{"alpha", "alphaa"}, {"beta", "betab"}};
    auto corpus = synthesize_corpus(two);
    for (const auto& u : corpus.utterances) {
      int has[2] = {0, 0};
      for (const auto& t : u.tokens) {
        for (int p = 0; p < 2; ++p) {
          has[p] += std::count(two.lexicons[p].begin(), two.lexicons[p].end(), t) > 0;
        }
      }
      CHECK(has[u.cluster] >= 1);
      CHECK(has[1 - u.cluster] == 0);
    }
  }

  SUBCASE("story sentences carry their persona's markers") {
    auto corpus = synthesize_corpus(cfg);
    CHECK(corpus.stories.size() == 5 * 8);
    for (const auto& s : corpus.stories) {
      const auto& lex = corpus.lexicons[static_cast<std::size_t>(*s.persona)];
      for (const auto& sent : s.sentences) {
        CHECK(std::find(lex.begin(), lex.end(), sent.front()) != lex.end());
        CHECK(s.image_features[0].size() == cfg.image_dim);
      }
    }
  }

  SUBCASE("same seed is bit-identical") {
    auto a = synthesize_corpus(cfg);
    auto b = synthesize_corpus(cfg);
    CHECK(a.stories == b.stories);
    CHECK(a.utterances == b.utterances);
    cfg.seed += 1;
    CHECK_FALSE(synthesize_corpus(cfg).stories == a.stories);
  }
}

namespace {

// Solves (A + ridge I) x = b by Gaussian elimination with partial pivoting.
std::vector<double> solve_ridge(std::vector<std::vector<double>> a, std::vector<double> b, double ridge) {
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < n; ++i) a[i][i] += ridge;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

}  // namespace

TEST_CASE("a linear probe recovers content words from synthetic image features") {
  SynthConfig cfg;  // defaults: 200 stories, 1000 sentences
  auto corpus = synthesize_corpus(cfg);

  std::vector<std::vector<double>> feats;
  std::vector<Tokens> sents;
  for (const auto& s : corpus.stories) {
    for (std::size_t k = 0; k < kStoryLength; ++k) {
      auto f = s.image_features[k].values();
      f.push_back(1.0);
      feats.push_back(std::move(f));
      sents.push_back(s.sentences[k]);
    }
  }
  const std::size_t n_train = feats.size() * 4 / 5;
  const std::size_t d = feats[0].size();

  for (const std::string word : {"dog", "park", "forest"}) {
    std::vector<double> y(feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i) {
      y[i] = std::count(sents[i].begin(), sents[i].end(), word) > 0 ? 1.0 : 0.0;
    }
    std::vector<std::vector<double>> xtx(d, std::vector<double>(d, 0.0));
    std::vector<double> xty(d, 0.0);
    for (std::size_t i = 0; i < n_train; ++i) {
      for (std::size_t a = 0; a < d; ++a) {
        xty[a] += feats[i][a] * y[i];
        for (std::size_t b = 0; b < d; ++b) xtx[a][b] += feats[i][a] * feats[i][b];
      }
    }
    const auto w = solve_ridge(xtx, xty, 1e-3);
    std::size_t correct = 0, pos = 0, pos_correct = 0;
    for (std::size_t i = n_train; i < feats.size(); ++i) {
      double score = 0.0;
      for (std::size_t a = 0; a < d; ++a) score += w[a] * feats[i][a];
      const bool pred = score > 0.5;
      correct += pred == (y[i] > 0.5);
      if (y[i] > 0.5) {
        ++pos;
        pos_correct += pred;
      }
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(feats.size() - n_train);
    INFO("word " << word);
    CHECK(acc >= 0.95);
    REQUIRE(pos > 0);
    CHECK(static_cast<double>(pos_correct) / static_cast<double>(pos) >= 0.95);
  }
}
