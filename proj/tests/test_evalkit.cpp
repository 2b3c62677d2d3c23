#include "doctest.h"

#include <algorithm>
#include <sstream>
#include <vector>

#include "longattn/evalkit.hpp"
#include "longattn/tensor.hpp"

using namespace longattn;

namespace {

Tokens toks(const std::string& text) { return tokenize(text); }

std::vector<Tokens> sentences(std::initializer_list<std::string> list) {
  std::vector<Tokens> out;
  for (const auto& s : list) out.push_back(tokenize(s));
  return out;
}

// Exhaustive greedy simulator: at each step try every remaining sentence and
// take the best recall, ties toward the lowest index. Mirrors the contract
// through an independent O(S^2) recomputation over full concatenations.
std::vector<std::size_t> brute_force_greedy(const std::vector<Tokens>& source,
                                            const std::vector<Tokens>& reference,
                                            std::size_t budget) {
  std::vector<std::size_t> picked;
  std::vector<bool> used(source.size(), false);
  double current = 0.0;
  while (picked.size() < budget) {
    double best = current;
    std::size_t arg = source.size();
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (used[i]) continue;
      std::vector<Tokens> trial;
      for (std::size_t p : picked) trial.push_back(source[p]);
      trial.push_back(source[i]);
      const double recall = rouge_n_recall_sentences(trial, reference, 2);
      if (recall > best) {
        best = recall;
        arg = i;
      }
    }
    if (arg == source.size()) break;
    picked.push_back(arg);
    used[arg] = true;
    current = best;
  }
  return picked;
}

}  // namespace

TEST_CASE("tokenize: lowercase, punctuation boundaries") {
  CHECK(toks("Revenue rose 7 percent.") == Tokens{"revenue", "rose", "7", "percent"});
  CHECK(toks("A-B c,d") == Tokens{"a", "b", "c", "d"});
  CHECK(toks("   ") == Tokens{});
}

TEST_CASE("rouge_n_recall: identical, half-overlap, disjoint") {
  CHECK(rouge_n_recall(toks("a b c"), toks("a b c"), 2) == doctest::Approx(1.0));
  // candidate {ab, bc} vs reference {ab, bd}: one of two reference bigrams
  CHECK(rouge_n_recall(toks("a b c"), toks("a b d"), 2) == doctest::Approx(0.5));
  CHECK(rouge_n_recall(toks("x y z"), toks("a b c"), 2) == doctest::Approx(0.0));
  CHECK(rouge_n_recall(toks("a"), toks("a"), 2) == 0.0);  // reference has no bigrams
  CHECK(rouge_n_recall(toks("a b"), toks("a b"), 1) == doctest::Approx(1.0));
}

TEST_CASE("greedy_context: verbatim hit first, zero-overlap gives empty context") {
  const auto reference = sentences({"the tax rate rose sharply this year"});
  const auto source = sentences({"unrelated words entirely",
                                 "the tax rate rose sharply this year",
                                 "the tax rate was flat"});
  const auto picked = greedy_context(source, reference, 3);
  REQUIRE(!picked.empty());
  CHECK(picked[0] == 1);

  const auto none = greedy_context(sentences({"alpha beta", "gamma delta"}),
                                   sentences({"completely different content"}), 3);
  CHECK(none.empty());
}

TEST_CASE("greedy_context matches the brute-force greedy simulator") {
  // constructed corpora with known pairwise overlaps
  const auto reference = sentences({"a b c d e", "f g h i j"});
  const auto source = sentences({
      "a b c x x", "c d e f x", "f g h x x", "h i j x x", "a b x x x", "x x x x x",
  });
  for (std::size_t budget : {1u, 2u, 3u, 5u})
    CHECK(greedy_context(source, reference, budget) ==
          brute_force_greedy(source, reference, budget));

  // randomized fixtures with <= 8 sentences
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Tokens> src;
    const std::size_t n_sent = 2 + rng.uniform_index(7);
    for (std::size_t i = 0; i < n_sent; ++i) {
      Tokens s;
      const std::size_t len = 3 + rng.uniform_index(6);
      for (std::size_t j = 0; j < len; ++j)
        s.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(6))));
      src.push_back(std::move(s));
    }
    std::vector<Tokens> ref;
    for (std::size_t i = 0; i < 2; ++i) {
      Tokens s;
      for (std::size_t j = 0; j < 5; ++j)
        s.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(6))));
      ref.push_back(std::move(s));
    }
    CHECK(greedy_context(src, ref, 4) == brute_force_greedy(src, ref, 4));
  }
}

TEST_CASE("make_cloze: blanks, containment, context exclusion") {
  const auto reference = sentences({"revenue rose 7 percent"});
  const std::vector<Span> spans{{0, 2, 1, "number"}};
  const auto context = sentences({"revenue rose 7 percent last year"});
  const auto questions = make_cloze(reference, spans, context);
  REQUIRE(questions.size() == 1);
  CHECK(questions[0].question == Tokens{"revenue", "rose", kBlankToken, "percent"});
  CHECK(questions[0].answer_ref == Tokens{"7"});

  // no spans -> no questions
  CHECK(make_cloze(reference, {}, context).empty());

  // answer missing from the context -> question dropped
  const auto dropped = make_cloze(reference, spans, sentences({"nothing related here"}));
  CHECK(dropped.empty());

  // contained span is dropped, the longest survives
  const auto ref2 = sentences({"the federal reserve board raised rates"});
  const std::vector<Span> overlapping{{0, 1, 3, "entity"}, {0, 2, 1, "entity"}};
  const auto ctx2 = sentences({"the federal reserve board raised rates again"});
  const auto qs2 = make_cloze(ref2, overlapping, ctx2);
  REQUIRE(qs2.size() == 1);
  CHECK(qs2[0].answer_ref == Tokens{"federal", "reserve", "board"});
}

TEST_CASE("unigram_f1: paper example, identity, multiset case") {
  CHECK(unigram_f1(toks("death rate"), toks("mortality")) == 0.0);
  CHECK(unigram_f1(toks("exact match"), toks("exact match")) == doctest::Approx(1.0));
  // "the tax rate" vs "tax rate cap": P = R = 2/3
  CHECK(unigram_f1(toks("the tax rate"), toks("tax rate cap")) ==
        doctest::Approx(2.0 / 3.0));
  CHECK(unigram_f1({}, {}) == 1.0);
  CHECK(unigram_f1(toks("a"), {}) == 0.0);

  // symmetry and bounds on random pairs
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Tokens a, b;
    for (std::size_t i = 0; i < 1 + rng.uniform_index(6); ++i)
      a.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(4))));
    for (std::size_t i = 0; i < 1 + rng.uniform_index(6); ++i)
      b.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(4))));
    const double ab = unigram_f1(a, b);
    CHECK(ab == unigram_f1(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
  CHECK(unigram_f1(toks("a b a"), toks("a b a")) == 1.0);
}

TEST_CASE("span_match_answer extracts the gap between matched context") {
  ClozeQuestion q;
  q.question = Tokens{"revenue", "rose", kBlankToken, "percent"};
  const Tokens passage = toks("last year revenue rose 7 percent overall");
  CHECK(span_match_answer(q, passage) == Tokens{"7"});

  // no anchor match -> empty answer
  CHECK(span_match_answer(q, toks("completely unrelated text")).empty());

  // multi-token answers are recovered
  ClozeQuestion q2;
  q2.question = Tokens{"the", "plan", "covers", kBlankToken, "by", "2030"};
  const Tokens p2 = toks("the plan covers twelve million people by 2030");
  CHECK(span_match_answer(q2, p2) == Tokens{"twelve", "million", "people"});
}

TEST_CASE("apes_scores: verbatim stub answers give APES = APES_src = 1") {
  SummaryRecord rec;
  rec.id = "r1";
  rec.source = sentences({"the budget grew 12 percent in march",
                          "other filler content follows here"});
  rec.reference = sentences({"the budget grew 12 percent in march"});
  rec.system_summary = sentences({"the budget grew 12 percent in march"});
  rec.spans = {{0, 3, 1, "number"}, {0, 6, 1, "date"}};

  const Answerer stub = [](const ClozeQuestion& q, const Tokens& passage) {
    return span_match_answer(q, passage);
  };
  const ApesResult result = apes_scores({rec}, stub, 5);
  REQUIRE(result.per_record.size() == 1);
  CHECK(result.per_record[0].questions == 2);
  CHECK(result.per_record[0].apes == doctest::Approx(1.0));
  CHECK(result.per_record[0].apes_src == doctest::Approx(1.0));
  CHECK(result.apes_mean == doctest::Approx(1.0));
}

TEST_CASE("apes_scores: synonym scenario scores APES 0 and APES_src 1") {
  // reference says "death rate"; both source and system say "mortality"
  SummaryRecord rec;
  rec.id = "synonym";
  rec.source = sentences({"diabetes may worsen mortality in patients",
                          "the death rate statistic appears elsewhere"});
  rec.reference = sentences({"diabetes may worsen death rate in patients"});
  rec.system_summary = sentences({"diabetes may worsen mortality in patients"});
  rec.spans = {{0, 3, 2, "entity"}};

  const Answerer stub = [](const ClozeQuestion& q, const Tokens& passage) {
    return span_match_answer(q, passage);
  };
  const ApesResult result = apes_scores({rec}, stub, 5);
  REQUIRE(result.per_record.size() == 1);
  CHECK(result.per_record[0].questions == 1);
  CHECK(result.per_record[0].apes == doctest::Approx(0.0));
  CHECK(result.per_record[0].apes_src == doctest::Approx(1.0));
}

TEST_CASE("apes_scores: mean over question scores, failures flagged") {
  SummaryRecord rec;
  rec.id = "means";
  rec.source = sentences({"alpha beta gamma delta epsilon zeta"});
  rec.reference = sentences({"alpha beta gamma delta epsilon zeta"});
  rec.system_summary = sentences({"alpha beta gamma delta epsilon zeta"});
  rec.spans = {{0, 0, 1, "entity"}, {0, 2, 1, "entity"}, {0, 4, 1, "entity"}};

  // scripted answerer: F1 contributions 1, 0, 0.5 -> record score 0.5
  std::size_t call = 0;
  const Answerer scripted = [&call](const ClozeQuestion& q, const Tokens&) -> Tokens {
    const std::size_t idx = (call++ / 2);  // each question asked twice (summary, context)
    if (idx == 0) return q.answer_ref;                         // F1 = 1
    if (idx == 1) return Tokens{"wrong"};                      // F1 = 0
    return Tokens{q.answer_ref[0], "extra", "extra"};          // F1 = 0.5
  };
  const ApesResult result = apes_scores({rec}, scripted, 5);
  CHECK(result.per_record[0].apes == doctest::Approx(0.5));

  const Answerer failing = [](const ClozeQuestion&, const Tokens&) -> Tokens {
    throw std::runtime_error("answerer offline");
  };
  const ApesResult failed = apes_scores({rec}, failing, 5);
  CHECK(failed.per_record[0].failures == 3);
  CHECK(failed.per_record[0].apes == doctest::Approx(0.0));
}

TEST_CASE("factcc_transforms: positives, negation toggling, swaps") {
  const Tokens sentence = toks("revenue rose 7 percent");
  const std::vector<Span> spans{{0, 2, 1, "number"}};
  const std::vector<std::pair<std::string, Tokens>> pool{{"number", {"7"}}, {"number", {"12"}}};

  const auto claims = factcc_transforms(sentence, spans, pool, 3);
  REQUIRE(!claims.empty());
  CHECK(claims[0].positive);
  CHECK(claims[0].tokens == sentence);

  bool found_swap = false;
  for (const auto& c : claims)
    if (c.transform == "number_swap") {
      found_swap = true;
      CHECK(c.tokens == toks("revenue rose 12 percent"));
      CHECK_FALSE(c.positive);
    }
  CHECK(found_swap);

  // negation inserts "not" after the finite verb, and removes an existing one
  const auto negated = factcc_transforms(toks("the plan is ready"), {}, {}, 1);
  REQUIRE(negated.size() == 2);
  CHECK(negated[1].tokens == toks("the plan is not ready"));
  const auto restored = factcc_transforms(toks("the plan is not ready"), {}, {}, 1);
  CHECK(restored[1].tokens == toks("the plan is ready"));

  // a single same-kind span: swap skipped, original still emitted
  const std::vector<std::pair<std::string, Tokens>> lone{{"number", {"7"}}};
  const auto skipped = factcc_transforms(sentence, spans, lone, 5);
  for (const auto& c : skipped) CHECK(c.transform != "number_swap");
  CHECK(skipped[0].positive);

  // deterministic under the seed
  const auto again = factcc_transforms(sentence, spans, pool, 3);
  REQUIRE(again.size() == claims.size());
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].tokens == claims[i].tokens);
}

TEST_CASE("greedy_context on an empty source is empty") {
  CHECK(greedy_context({}, sentences({"a b c"}), 3).empty());
}

TEST_CASE("factcc emits a negative whenever a verb or swap candidate exists (property)") {
  Rng rng(55);
  const std::vector<std::string> verbs{"is", "was", "can", "must"};
  const std::vector<std::string> fillers{"alpha", "beta", "gamma", "delta", "epsilon"};
  for (int trial = 0; trial < 60; ++trial) {
    Tokens sentence;
    bool has_verb = false;
    for (std::size_t i = 0; i < 4 + rng.uniform_index(5); ++i) {
      if (rng.uniform() < 0.3) {
        sentence.push_back(verbs[rng.uniform_index(verbs.size())]);
        has_verb = true;
      } else {
        sentence.push_back(fillers[rng.uniform_index(fillers.size())]);
      }
    }
    std::vector<Span> spans;
    std::vector<std::pair<std::string, Tokens>> pool;
    bool has_swap = false;
    if (rng.uniform() < 0.5 && sentence.size() >= 2) {
      spans.push_back(Span{0, 0, 1, "entity"});
      pool.emplace_back("entity", Tokens{sentence[0]});
      if (rng.uniform() < 0.7) {
        pool.emplace_back("entity", Tokens{"replacement"});
        has_swap = true;
      }
    }
    const auto claims = factcc_transforms(sentence, spans, pool, trial);
    REQUIRE(!claims.empty());
    CHECK(claims[0].positive);  // the original is always emitted
    std::size_t negatives = 0;
    for (const auto& c : claims)
      if (!c.positive) ++negatives;
    if (has_verb || has_swap) CHECK(negatives >= 1);
  }
}

TEST_CASE("bigram_accumulation: front-loaded and split fixtures") {
  // reference entirely inside the first partition -> flat curve at 1
  Tokens doc;
  for (int i = 0; i < 10; ++i) doc.push_back("w" + std::to_string(i));
  for (int i = 0; i < 90; ++i) doc.push_back("filler" + std::to_string(i % 7));
  Tokens ref;
  for (int i = 0; i < 10; ++i) ref.push_back("w" + std::to_string(i));
  const auto curve = bigram_accumulation(doc, ref, 10);
  REQUIRE(curve.size() == 10);
  CHECK(curve[0] == doctest::Approx(1.0));
  CHECK(curve[9] == doctest::Approx(1.0));

  // reference bigrams split between the first and last partitions
  Tokens doc2(100, "x");
  doc2[0] = "a"; doc2[1] = "b";   // bigram (a,b) in partition 1
  doc2[95] = "c"; doc2[96] = "d"; // bigram (c,d) in partition 10
  const Tokens ref2{"a", "b", "q", "c", "d"};  // bigrams: ab, bq, qc, cd -> 2 of 4 occur
  const auto curve2 = bigram_accumulation(doc2, ref2, 10);
  CHECK(curve2[0] == doctest::Approx(0.25));
  CHECK(curve2[8] == doctest::Approx(0.25));
  CHECK(curve2[9] == doctest::Approx(0.5));

  CHECK_THROWS_AS(bigram_accumulation(doc, Tokens{"solo"}, 10), std::invalid_argument);
}

TEST_CASE("bigram_accumulation is monotone non-decreasing (property)") {
  Rng rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens doc, ref;
    const std::size_t doc_len = 20 + rng.uniform_index(200);
    for (std::size_t i = 0; i < doc_len; ++i)
      doc.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(8))));
    for (std::size_t i = 0; i < 5 + rng.uniform_index(20); ++i)
      ref.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(8))));
    const auto curve = bigram_accumulation(doc, ref, 10);
    for (std::size_t p = 1; p < curve.size(); ++p) CHECK(curve[p] >= curve[p - 1]);
    CHECK(curve.back() <= 1.0);
  }
}

TEST_CASE("corpus_stats: compression is the mean of per-record ratios") {
  SummaryRecord a;
  a.id = "a";
  a.source.assign(1, Tokens(100, "w"));
  a.reference.assign(1, Tokens(20, "s"));
  const CorpusStats single = corpus_stats({a});
  CHECK(single.mean_compression == doctest::Approx(5.0));

  // 100/20 = 5 and 300/10 = 30 -> mean 17.5 (not ratio of means, 13.3)
  SummaryRecord b;
  b.id = "b";
  b.source.assign(1, Tokens(300, "w"));
  b.reference.assign(1, Tokens(10, "s"));
  const CorpusStats two = corpus_stats({a, b});
  CHECK(two.mean_compression == doctest::Approx(17.5));
  CHECK(two.mean_doc_words == doctest::Approx(200.0));
  CHECK(two.mean_summary_words == doctest::Approx(15.0));

  // summary == document -> compression 1
  SummaryRecord same;
  same.id = "same";
  same.source.assign(1, Tokens(50, "t"));
  same.reference.assign(1, Tokens(50, "t"));
  CHECK(corpus_stats({same}).mean_compression == doctest::Approx(1.0));

  CHECK_THROWS_AS(corpus_stats({}), std::invalid_argument);
}

TEST_CASE("corpus loader: field checks and line-numbered errors") {
  std::istringstream good(
      R"({"id":"r1","source":["a b c"],"reference":["a b"],"system_summary":["a b"]})"
      "\n"
      R"({"id":"r2","source":["x y"],"reference":["x y"],"spans":[{"sentence":0,"start":0,"len":1,"kind":"entity"}]})"
      "\n");
  const auto records = load_corpus_jsonl(good);
  REQUIRE(records.size() == 2);
  CHECK(records[0].id == "r1");
  CHECK(records[1].spans.size() == 1);

  std::istringstream bad("{\"id\":\"ok\",\"source\":[\"a\"],\"reference\":[\"b\"]}\nnot json\n");
  try {
    load_corpus_jsonl(bad);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  std::istringstream out_of_range(
      R"({"id":"r","source":["a"],"reference":["b"],"spans":[{"sentence":0,"start":5,"len":1,"kind":"entity"}]})"
      "\n");
  CHECK_THROWS_AS(load_corpus_jsonl(out_of_range), std::runtime_error);
}

TEST_CASE("APES_src >= APES when context answers echo the summary (property)") {
  // fixture family: context and summary agree verbatim; the reference answer
  // only sometimes matches, so F1(a_sys, a_cxt) dominates F1(a_sys, a_ref)
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const bool paraphrased = rng.uniform() < 0.5;
    SummaryRecord rec;
    rec.id = "p" + std::to_string(trial);
    const std::string shared = paraphrased ? "officials expect growth to slow next year"
                                           : "officials expect decline to slow next year";
    rec.source = sentences({shared, "officials expect decline statistics to appear"});
    rec.reference = sentences({"officials expect decline to slow next year"});
    rec.system_summary = sentences({shared});
    rec.spans = {{0, 2, 1, "entity"}};
    const Answerer stub = [](const ClozeQuestion& q, const Tokens& passage) {
      return span_match_answer(q, passage);
    };
    const ApesResult r = apes_scores({rec}, stub, 5);
    REQUIRE(r.per_record[0].questions == 1);
    CHECK(r.per_record[0].apes_src >= r.per_record[0].apes);
  }
}
