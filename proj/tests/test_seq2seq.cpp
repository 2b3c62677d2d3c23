#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "longattn/seq2seq.hpp"

using namespace longattn;

TEST_CASE("synth_task shapes and definitions") {
  const auto copy = synth_task(TaskKind::copy, 3, 16, 4, 0);
  REQUIRE(copy.size() == 4);
  for (const auto& ex : copy) {
    CHECK(ex.target == ex.source);
    for (int t : ex.source) {
      CHECK(t >= kReservedTokens);
      CHECK(t < 16);
    }
  }

  const auto rev = synth_task(TaskKind::reverse, 3, 16, 2, 1);
  for (const auto& ex : rev) {
    std::vector<int> r(ex.source.rbegin(), ex.source.rend());
    CHECK(ex.target == r);
  }

  // strided_pick takes positions 0, 4, 8, ...: 8 tokens -> positions {0,4}
  const auto strided = synth_task(TaskKind::strided_pick, 8, 16, 2, 2);
  for (const auto& ex : strided) {
    REQUIRE(ex.target.size() == 2);
    CHECK(ex.target[0] == ex.source[0]);
    CHECK(ex.target[1] == ex.source[4]);
  }

  CHECK_THROWS_AS(synth_task(TaskKind::copy, 0, 16, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(synth_task(TaskKind::copy, 3, 4, 1, 0), std::invalid_argument);

  // same seed, same data
  const auto again = synth_task(TaskKind::copy, 3, 16, 4, 0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(again[i].source == copy[i].source);
}

TEST_CASE("initial loss is close to ln(vocab) under small init") {
  ModelConfig mc;
  mc.vocab = 16;
  mc.max_source_len = 8;
  mc.seed = 0;
  Seq2SeqModel model(mc);
  const auto data = synth_task(TaskKind::copy, 8, 16, 8, 0);

  // zero training steps: measure the teacher-forced loss directly
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& ex : data) {
    std::vector<int> dec_input{kBos};
    dec_input.insert(dec_input.end(), ex.target.begin(), ex.target.end());
    std::vector<int> targets = ex.target;
    targets.push_back(kEos);
    const Tensor l = model.logits(ex.source, dec_input);
    for (std::size_t r = 0; r < l.rows(); ++r) {
      double mx = l.at(r, 0);
      for (std::size_t c = 1; c < l.cols(); ++c) mx = std::max(mx, l.at(r, c));
      double z = 0.0;
      for (std::size_t c = 0; c < l.cols(); ++c) z += std::exp(l.at(r, c) - mx);
      total -= l.at(r, static_cast<std::size_t>(targets[r])) - mx - std::log(z);
      ++count;
    }
  }
  CHECK(total / static_cast<double>(count) == doctest::Approx(std::log(16.0)).epsilon(0.04));
}

TEST_CASE("training is deterministic under a fixed seed") {
  auto run = [] {
    ModelConfig mc;
    mc.max_source_len = 8;
    mc.seed = 3;
    Seq2SeqModel model(mc);
    TrainOptions opt;
    opt.steps = 12;
    opt.eval_every = 0;
    return train(model, synth_task(TaskKind::copy, 8, 16, 8, 3), opt).losses;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);  // bitwise
}

TEST_CASE("every parameter block receives gradient after one step (all enc-dec kinds)") {
  for (EncDecKind kind : {EncDecKind::full, EncDecKind::linformer, EncDecKind::hepos}) {
    ModelConfig mc;
    mc.max_source_len = 8;
    mc.encdec = kind;
    mc.linformer_k = 4;
    mc.hepos_stride = 2;
    mc.seed = 5;
    Seq2SeqModel model(mc);
    const auto data = synth_task(TaskKind::copy, 8, 16, 1, 5);
    model.train_step({data[0]}, 0.5, 0.1);
    for (const auto& [name, block] : model.parameter_blocks()) {
      REQUIRE(block->grad.has_value());
      double mx = 0.0;
      for (double g : *block->grad) mx = std::max(mx, std::abs(g));
      INFO(name << " with kind " << static_cast<int>(kind));
      CHECK(mx > 0.0);
    }
  }
}

TEST_CASE("100-step moving average of the loss decreases on copy (seeds 0,1,2)") {
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    ModelConfig mc;
    mc.max_source_len = 8;
    mc.seed = seed;
    Seq2SeqModel model(mc);
    TrainOptions opt;
    opt.steps = 1000;
    opt.eval_every = 0;
    const TrainRun run = train(model, synth_task(TaskKind::copy, 8, 16, 32, seed), opt);
    auto window_mean = [&](std::size_t end) {  // mean of losses [end-100, end)
      double s = 0.0;
      for (std::size_t i = end - 100; i < end; ++i) s += run.losses[i];
      return s / 100.0;
    };
    double prev = window_mean(100);
    for (std::size_t end = 200; end <= 1000; end += 100) {
      const double cur = window_mean(end);
      INFO("seed " << seed << " at step " << end);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("training divergence raises an error naming the step") {
  ModelConfig mc;
  mc.max_source_len = 8;
  mc.seed = 1;
  Seq2SeqModel model(mc);
  TrainOptions opt;
  opt.steps = 400;
  opt.lr = 1e6;       // guaranteed blow-up
  opt.clip_norm = 0;  // disable clipping
  opt.eval_every = 0;
  CHECK_THROWS_AS(train(model, synth_task(TaskKind::copy, 8, 16, 8, 1), opt),
                  std::runtime_error);
}

TEST_CASE("hepos enc-dec cells are exactly full cells / s_h during training") {
  auto cells_for = [](EncDecKind kind) {
    ModelConfig mc;
    mc.max_source_len = 8;
    mc.encdec = kind;
    mc.hepos_stride = 2;
    mc.seed = 7;
    Seq2SeqModel model(mc);
    TrainOptions opt;
    opt.steps = 10;
    opt.eval_every = 0;
    return train(model, synth_task(TaskKind::copy, 8, 16, 8, 7), opt).encdec_cells;
  };
  const std::size_t full = cells_for(EncDecKind::full);
  const std::size_t hepos = cells_for(EncDecKind::hepos);
  CHECK(full == 2 * hepos);
}

TEST_CASE("beam=1 equals greedy decoding") {
  ModelConfig mc;
  mc.vocab = 8;
  mc.max_source_len = 6;
  mc.max_target_len = 8;
  mc.seed = 11;
  Seq2SeqModel model(mc);
  const auto data = synth_task(TaskKind::copy, 6, 8, 3, 11);

  for (const auto& ex : data) {
    // hand-rolled greedy rollout
    std::vector<int> prefix{kBos};
    std::vector<int> greedy;
    for (std::size_t step = 0; step + 1 < mc.max_target_len; ++step) {
      const Tensor l = model.logits(ex.source, prefix);
      const std::size_t last = l.rows() - 1;
      std::size_t arg = 0;
      for (std::size_t c = 1; c < l.cols(); ++c)
        if (l.at(last, c) > l.at(last, arg)) arg = c;
      if (static_cast<int>(arg) == kEos) break;
      greedy.push_back(static_cast<int>(arg));
      prefix.push_back(static_cast<int>(arg));
    }
    CHECK(beam_decode(model, ex.source, 1, 0.0) == greedy);
  }
}

TEST_CASE("beam search with alpha=0 matches exhaustive enumeration (4-token vocab)") {
  ModelConfig mc;
  mc.vocab = 5;  // 4 reserved + 1 payload keeps the space small but real
  mc.d_model = 8;
  mc.heads = 2;
  mc.max_source_len = 4;
  mc.max_target_len = 5;  // BOS + up to 4 generated tokens
  mc.seed = 13;
  Seq2SeqModel model(mc);
  const std::vector<int> source{4, 4, 4, 4};

  // enumerate every sequence of length <= 4: either ends in EOS or is cut off
  const std::size_t max_len = 4;
  std::vector<int> best_seq;
  double best_score = -1e300;
  std::vector<std::vector<int>> frontier{{}};
  auto seq_logp = [&](const std::vector<int>& seq) {
    std::vector<int> prefix{kBos};
    double logp = 0.0;
    for (int tok : seq) {
      const Tensor l = model.logits(source, prefix);
      const std::size_t last = l.rows() - 1;
      double mx = l.at(last, 0);
      for (std::size_t c = 1; c < l.cols(); ++c) mx = std::max(mx, l.at(last, c));
      double z = 0.0;
      for (std::size_t c = 0; c < l.cols(); ++c) z += std::exp(l.at(last, c) - mx);
      logp += l.at(last, static_cast<std::size_t>(tok)) - mx - std::log(z);
      prefix.push_back(tok);
    }
    return logp;
  };
  std::function<void(std::vector<int>&)> expand = [&](std::vector<int>& seq) {
    const bool terminal = (!seq.empty() && seq.back() == kEos) || seq.size() == max_len;
    if (terminal) {
      const double score = seq_logp(seq);  // alpha = 0: raw log-probability
      if (score > best_score) {
        best_score = score;
        best_seq = seq;
      }
      return;
    }
    for (int tok = 0; tok < static_cast<int>(mc.vocab); ++tok) {
      seq.push_back(tok);
      expand(seq);
      seq.pop_back();
    }
  };
  std::vector<int> seed_seq;
  expand(seed_seq);
  if (!best_seq.empty() && best_seq.back() == kEos) best_seq.pop_back();

  // a beam wide enough to cover every prefix is exhaustive
  CHECK(beam_decode(model, source, 1024, 0.0) == best_seq);
}

TEST_CASE("hepos learns the coverage-stressing strided_pick task") {
  // target = every 4th source token; with s_h = 4 only the head at offset 0
  // sees those positions, so learning requires the per-head stride layout
  ModelConfig mc;
  mc.vocab = 16;
  mc.encdec = EncDecKind::hepos;
  mc.hepos_stride = 4;
  mc.heads = 4;
  mc.max_source_len = 12;
  mc.max_target_len = 8;
  mc.seed = 3;
  Seq2SeqModel model(mc);
  const auto data = synth_task(TaskKind::strided_pick, 12, 16, 64, 3);
  TrainOptions opt;
  opt.steps = 500;
  opt.lr = 2.0;
  opt.eval_every = 0;
  const TrainRun run = train(model, data, opt);
  CHECK(run.final_accuracy >= 0.99);  // calibrated regression bound
}

TEST_CASE("a trained copy model beam-decodes its input exactly") {
  ModelConfig mc;
  mc.vocab = 16;
  mc.d_model = 32;
  mc.heads = 4;
  mc.max_source_len = 6;
  mc.max_target_len = 10;
  mc.seed = 2;
  Seq2SeqModel model(mc);
  const auto data = synth_task(TaskKind::copy, 6, 16, 32, 2);
  TrainOptions opt;
  opt.steps = 400;
  opt.lr = 2.0;
  opt.eval_every = 0;
  const TrainRun run = train(model, data, opt);
  CHECK(run.final_accuracy >= 0.99);  // calibrated regression bound
  for (int i = 0; i < 8; ++i) {
    bool truncated = false;
    const auto out = beam_decode(model, data[i].source, 4, 2.0, &truncated);
    CHECK(out == data[i].target);
    CHECK_FALSE(truncated);
  }
}

TEST_CASE("default decode settings: beam 4, length penalty 2 form") {
  // lp(len) = ((5+len)/6)^alpha at alpha=2
  auto lp = [](std::size_t len, double alpha) {
    return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
  };
  CHECK(lp(1, 2.0) == doctest::Approx(1.0));
  CHECK(lp(7, 2.0) == doctest::Approx(4.0));
  CHECK(lp(13, 0.0) == doctest::Approx(1.0));

  // decoding an untrained model still terminates and flags truncation
  ModelConfig mc;
  mc.vocab = 8;
  mc.max_source_len = 4;
  mc.max_target_len = 6;
  mc.seed = 17;
  Seq2SeqModel model(mc);
  bool truncated = false;
  const auto out = beam_decode(model, {4, 5, 6, 7}, 4, 2.0, &truncated);
  CHECK(out.size() <= 5);
}

TEST_CASE("model configuration contracts") {
  ModelConfig mc;
  mc.d_model = 30;
  mc.heads = 4;  // 4 does not divide 30
  CHECK_THROWS_AS(Seq2SeqModel{mc}, std::invalid_argument);

  ModelConfig lin;
  lin.encdec = EncDecKind::linformer;
  lin.linformer_k = 64;
  lin.max_source_len = 16;  // k > n_max
  CHECK_THROWS_AS(Seq2SeqModel{lin}, std::invalid_argument);
}
