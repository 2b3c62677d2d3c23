#include "longattn/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace longattn {

std::vector<Example> synth_task(TaskKind kind, std::size_t length, std::size_t vocab,
                                std::size_t count, std::uint64_t seed) {
  if (length == 0) throw std::invalid_argument("synth_task: length must be >= 1");
  if (vocab < static_cast<std::size_t>(kReservedTokens) + 1)
    throw std::invalid_argument("synth_task: vocab must exceed the reserved tokens");
  Rng rng(seed);
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Example ex;
    ex.source.resize(length);
    for (auto& t : ex.source)
      t = kReservedTokens +
          static_cast<int>(rng.uniform_index(vocab - static_cast<std::size_t>(kReservedTokens)));
    switch (kind) {
      case TaskKind::copy:
        ex.target = ex.source;
        break;
      case TaskKind::reverse:
        ex.target.assign(ex.source.rbegin(), ex.source.rend());
        break;
      case TaskKind::strided_pick:
        for (std::size_t p = 0; p < length; p += 4) ex.target.push_back(ex.source[p]);
        break;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

struct Seq2SeqModel::VarParams {
  Var tok_emb, pos_enc, pos_dec;
  Var enc_wq, enc_wk, enc_wv, enc_wo;
  Var dec_wq, dec_wk, dec_wv, dec_wo;
  Var x_wq, x_wk, x_wv, x_wo;
  Var lin_key_proj, lin_value_proj;
  Var w_out;
};

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config) : config_(config) {
  if (config.d_model % config.heads != 0)
    throw std::invalid_argument("seq2seq: heads must divide the embedding dim");
  if (config.vocab < static_cast<std::size_t>(kReservedTokens) + 1)
    throw std::invalid_argument("seq2seq: vocab must exceed the reserved tokens");
  if (config.encdec == EncDecKind::linformer && config.linformer_k > config.max_source_len)
    throw std::invalid_argument("seq2seq: linformer_k must be <= max source length");
  if (config.encdec == EncDecKind::hepos &&
      (config.hepos_stride < 1 || config.hepos_stride > config.max_source_len))
    throw std::invalid_argument("seq2seq: hepos stride must be in [1, max source length]");

  Rng rng(config.seed);
  const std::size_t d = config.d_model;
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  tok_emb_ = Tensor::randn(config.vocab, d, rng, 0.1);
  pos_enc_ = Tensor::randn(config.max_source_len, d, rng, 0.1);
  pos_dec_ = Tensor::randn(config.max_target_len, d, rng, 0.1);
  enc_wq_ = Tensor::randn(d, d, rng, w_std);
  enc_wk_ = Tensor::randn(d, d, rng, w_std);
  enc_wv_ = Tensor::randn(d, d, rng, w_std);
  enc_wo_ = Tensor::randn(d, d, rng, w_std);
  dec_wq_ = Tensor::randn(d, d, rng, w_std);
  dec_wk_ = Tensor::randn(d, d, rng, w_std);
  dec_wv_ = Tensor::randn(d, d, rng, w_std);
  dec_wo_ = Tensor::randn(d, d, rng, w_std);
  x_wq_ = Tensor::randn(d, d, rng, w_std);
  x_wk_ = Tensor::randn(d, d, rng, w_std);
  x_wv_ = Tensor::randn(d, d, rng, w_std);
  x_wo_ = Tensor::randn(d, d, rng, w_std);
  w_out_ = Tensor::randn(d, config.vocab, rng, w_std);

  blocks_ = {{"tok_emb", &tok_emb_}, {"pos_enc", &pos_enc_}, {"pos_dec", &pos_dec_},
             {"enc_wq", &enc_wq_},   {"enc_wk", &enc_wk_},   {"enc_wv", &enc_wv_},
             {"enc_wo", &enc_wo_},   {"dec_wq", &dec_wq_},   {"dec_wk", &dec_wk_},
             {"dec_wv", &dec_wv_},   {"dec_wo", &dec_wo_},   {"x_wq", &x_wq_},
             {"x_wk", &x_wk_},       {"x_wv", &x_wv_},       {"x_wo", &x_wo_},
             {"w_out", &w_out_}};
  if (config.encdec == EncDecKind::linformer) {
    lin_key_proj_ = Tensor::randn(config.linformer_k, config.max_source_len, rng,
                                  1.0 / std::sqrt(static_cast<double>(config.max_source_len)));
    lin_value_proj_ = Tensor::randn(config.linformer_k, config.max_source_len, rng,
                                    1.0 / std::sqrt(static_cast<double>(config.max_source_len)));
    blocks_.push_back({"lin_key_proj", &lin_key_proj_});
    blocks_.push_back({"lin_value_proj", &lin_value_proj_});
  }
}

Seq2SeqModel::VarParams Seq2SeqModel::register_params(Tape& tape, bool trainable) const {
  // Training always runs on a non-const model (train_step), so casting away
  // const here never mutates an actually-const object.
  auto reg = [&](const Tensor& t) {
    return trainable ? tape.leaf(const_cast<Tensor&>(t)) : tape.input(t);
  };
  VarParams vp;
  vp.tok_emb = reg(tok_emb_);
  vp.pos_enc = reg(pos_enc_);
  vp.pos_dec = reg(pos_dec_);
  vp.enc_wq = reg(enc_wq_);
  vp.enc_wk = reg(enc_wk_);
  vp.enc_wv = reg(enc_wv_);
  vp.enc_wo = reg(enc_wo_);
  vp.dec_wq = reg(dec_wq_);
  vp.dec_wk = reg(dec_wk_);
  vp.dec_wv = reg(dec_wv_);
  vp.dec_wo = reg(dec_wo_);
  vp.x_wq = reg(x_wq_);
  vp.x_wk = reg(x_wk_);
  vp.x_wv = reg(x_wv_);
  vp.x_wo = reg(x_wo_);
  vp.w_out = reg(w_out_);
  if (config_.encdec == EncDecKind::linformer) {
    vp.lin_key_proj = reg(lin_key_proj_);
    vp.lin_value_proj = reg(lin_value_proj_);
  }
  return vp;
}

namespace {

std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

// Multi-head self-attention block: per-head column slices of d x d
// projections, shared mask, concatenated heads through the output projection.
Var self_attention_block(Tape& t, Var x, Var wq, Var wk, Var wv, Var wo, std::size_t heads,
                         std::size_t dh, const AttentionMask& mask) {
  std::vector<Var> outs;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = t.matmul(x, t.slice_cols(wq, h * dh, (h + 1) * dh));
    Var k = t.matmul(x, t.slice_cols(wk, h * dh, (h + 1) * dh));
    Var v = t.matmul(x, t.slice_cols(wv, h * dh, (h + 1) * dh));
    outs.push_back(masked_attention(t, q, k, v, mask, s));
  }
  return t.matmul(t.concat_cols(outs), wo);
}

}  // namespace

Seq2SeqModel::ForwardOut Seq2SeqModel::build_one(Tape& tape, const VarParams& vp,
                                                 const std::vector<int>& source,
                                                 const std::vector<int>& dec_input) const {
  const std::size_t n = source.size();
  const std::size_t m = dec_input.size();
  if (n == 0 || n > config_.max_source_len)
    throw std::invalid_argument("seq2seq: source length out of range");
  if (m == 0 || m > config_.max_target_len)
    throw std::invalid_argument("seq2seq: decoder length out of range");
  const std::size_t heads = config_.heads;
  const std::size_t dh = config_.d_model / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardOut out;

  // encoder
  Var h_enc0 = tape.add(tape.gather_rows(vp.tok_emb, source),
                        tape.gather_rows(vp.pos_enc, iota_ids(n)));
  const AttentionMask enc_mask = build_pattern(config_.encoder_pattern, n, n);
  Var h_enc = tape.add(h_enc0, self_attention_block(tape, h_enc0, vp.enc_wq, vp.enc_wk,
                                                    vp.enc_wv, vp.enc_wo, heads, dh, enc_mask));
  out.encoder_cells += heads * enc_mask.total_cells();

  // decoder self-attention (causal)
  Var h_dec0 = tape.add(tape.gather_rows(vp.tok_emb, dec_input),
                        tape.gather_rows(vp.pos_dec, iota_ids(m)));
  const AttentionMask dec_mask = causal_mask(m);
  Var h_dec1 = tape.add(h_dec0, self_attention_block(tape, h_dec0, vp.dec_wq, vp.dec_wk,
                                                     vp.dec_wv, vp.dec_wo, heads, dh, dec_mask));

  // encoder-decoder attention
  std::vector<Var> cross;
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = tape.matmul(h_dec1, tape.slice_cols(vp.x_wq, h * dh, (h + 1) * dh));
    Var k = tape.matmul(h_enc, tape.slice_cols(vp.x_wk, h * dh, (h + 1) * dh));
    Var v = tape.matmul(h_enc, tape.slice_cols(vp.x_wv, h * dh, (h + 1) * dh));
    switch (config_.encdec) {
      case EncDecKind::full: {
        const AttentionMask mask = AttentionMask::full(m, n);
        cross.push_back(masked_attention(tape, q, k, v, mask, s));
        out.encdec_cells += mask.total_cells();
        break;
      }
      case EncDecKind::hepos: {
        const AttentionMask mask = hepos_mask(m, n, h, config_.hepos_stride);
        cross.push_back(masked_attention(tape, q, k, v, mask, s));
        out.encdec_cells += mask.total_cells();
        break;
      }
      case EncDecKind::linformer: {
        Var key_proj = tape.slice_cols(vp.lin_key_proj, 0, n);
        Var value_proj = tape.slice_cols(vp.lin_value_proj, 0, n);
        Var k_low = tape.matmul(key_proj, k);
        Var v_low = tape.matmul(value_proj, v);
        const AttentionMask mask = AttentionMask::full(m, config_.linformer_k);
        cross.push_back(masked_attention(tape, q, k_low, v_low, mask, s));
        out.encdec_cells += mask.total_cells();
        break;
      }
    }
  }
  Var h_dec2 = tape.add(h_dec1, tape.matmul(tape.concat_cols(cross), vp.x_wo));
  out.logits = tape.matmul(h_dec2, vp.w_out);
  return out;
}

double Seq2SeqModel::train_step(const std::vector<Example>& batch, double lr, double clip_norm,
                                std::size_t* encoder_cells, std::size_t* encdec_cells) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  Tape tape;
  const VarParams vp = register_params(tape, true);
  Var total;
  for (const auto& ex : batch) {
    std::vector<int> dec_input;
    dec_input.push_back(kBos);
    dec_input.insert(dec_input.end(), ex.target.begin(), ex.target.end());
    std::vector<int> targets = ex.target;
    targets.push_back(kEos);

    ForwardOut f = build_one(tape, vp, ex.source, dec_input);
    if (encoder_cells) *encoder_cells += f.encoder_cells;
    if (encdec_cells) *encdec_cells += f.encdec_cells;
    Var loss = tape.cross_entropy(f.logits, targets);
    total = total.tape ? tape.add(total, loss) : loss;
  }
  Var mean = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  const double loss_value = tape.value(mean).scalar();
  tape.backward(mean);

  // clipped SGD over all parameter blocks
  double sq_norm = 0.0;
  for (auto& [_, p] : blocks_)
    for (double g : *p->grad) sq_norm += g * g;
  const double norm = std::sqrt(sq_norm);
  const double factor = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
  for (auto& [_, p] : blocks_)
    for (std::size_t i = 0; i < p->data.size(); ++i)
      p->data[i] -= lr * factor * (*p->grad)[i];
  return loss_value;
}

Tensor Seq2SeqModel::logits(const std::vector<int>& source,
                            const std::vector<int>& dec_input) const {
  Tape tape;
  const VarParams vp = register_params(tape, false);
  const ForwardOut f = build_one(tape, vp, source, dec_input);
  return tape.value(f.logits);
}

double Seq2SeqModel::token_accuracy(const std::vector<Example>& data) const {
  std::size_t correct = 0, total = 0;
  for (const auto& ex : data) {
    std::vector<int> dec_input;
    dec_input.push_back(kBos);
    dec_input.insert(dec_input.end(), ex.target.begin(), ex.target.end());
    std::vector<int> targets = ex.target;
    targets.push_back(kEos);

    const Tensor l = logits(ex.source, dec_input);
    for (std::size_t r = 0; r < l.rows(); ++r) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < l.cols(); ++c)
        if (l.at(r, c) > l.at(r, arg)) arg = c;
      if (static_cast<int>(arg) == targets[r]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<std::pair<std::string, const Tensor*>> Seq2SeqModel::parameter_blocks() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (const auto& [name, p] : blocks_) out.emplace_back(name, p);
  return out;
}

TrainRun train(Seq2SeqModel& model, const std::vector<Example>& data, const TrainOptions& opt) {
  if (opt.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  if (!(opt.lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  if (data.empty()) throw std::invalid_argument("train: empty dataset");

  TrainRun run;
  std::size_t cursor = 0;
  for (std::size_t step = 0; step < opt.steps; ++step) {
    std::vector<Example> batch;
    for (std::size_t b = 0; b < opt.batch; ++b) {
      batch.push_back(data[cursor]);
      cursor = (cursor + 1) % data.size();
    }
    double loss = 0.0;
    try {
      loss = model.train_step(batch, opt.lr, opt.clip_norm, &run.encoder_cells,
                              &run.encdec_cells);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("training failed at step " + std::to_string(step) + ": " +
                               e.what());
    }
    if (!std::isfinite(loss))
      throw std::runtime_error("training diverged at step " + std::to_string(step));
    run.losses.push_back(loss);
    run.cumulative_encdec_cells.push_back(run.encdec_cells);
    if (opt.eval_every > 0 && (step + 1) % opt.eval_every == 0) {
      run.eval_steps.push_back(step + 1);
      run.accuracies.push_back(model.token_accuracy(data));
    }
  }
  run.final_accuracy = model.token_accuracy(data);
  return run;
}

std::vector<int> beam_decode(const Seq2SeqModel& model, const std::vector<int>& source,
                             std::size_t beam, double alpha, bool* truncated) {
  if (beam < 1) throw std::invalid_argument("beam_decode: beam must be >= 1");
  if (alpha < 0.0) throw std::invalid_argument("beam_decode: alpha must be >= 0");
  const std::size_t vocab = model.config().vocab;
  const std::size_t max_steps = model.config().max_target_len - 1;  // BOS takes one slot

  auto length_penalty = [alpha](std::size_t len) {
    return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
  };

  struct Hyp {
    std::vector<int> tokens;  // BOS + generated
    double logp = 0.0;
  };
  std::vector<Hyp> live{Hyp{{kBos}, 0.0}};
  Hyp best_done;
  double best_done_score = -std::numeric_limits<double>::infinity();

  for (std::size_t step = 0; step < max_steps && !live.empty(); ++step) {
    // expand every live hypothesis over the whole vocabulary; EOS expansions
    // compete for beam slots, so beam=1 follows the greedy argmax exactly
    std::vector<Hyp> candidates;
    candidates.reserve(live.size() * vocab);
    for (const auto& hyp : live) {
      const Tensor l = model.logits(source, hyp.tokens);
      const std::size_t last = l.rows() - 1;
      double mx = l.at(last, 0);
      for (std::size_t c = 1; c < vocab; ++c) mx = std::max(mx, l.at(last, c));
      double z = 0.0;
      for (std::size_t c = 0; c < vocab; ++c) z += std::exp(l.at(last, c) - mx);
      const double logz = std::log(z) + mx;
      for (std::size_t c = 0; c < vocab; ++c) {
        Hyp next = hyp;
        next.tokens.push_back(static_cast<int>(c));
        next.logp += l.at(last, c) - logz;
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hyp& a, const Hyp& b) { return a.logp > b.logp; });
    if (candidates.size() > beam) candidates.resize(beam);

    live.clear();
    for (auto& hyp : candidates) {
      if (hyp.tokens.back() == kEos) {
        const std::size_t len = hyp.tokens.size() - 1;  // generated incl. EOS
        const double score = hyp.logp / length_penalty(len);
        if (score > best_done_score) {
          best_done_score = score;
          best_done = std::move(hyp);
        }
      } else {
        live.push_back(std::move(hyp));
      }
    }
  }

  // hypotheses still alive ran out of steps without emitting EOS
  bool use_truncated = false;
  Hyp best = best_done;
  double best_score = best_done_score;
  for (auto& hyp : live) {
    const std::size_t len = hyp.tokens.size() - 1;
    const double score = hyp.logp / length_penalty(len);
    if (score > best_score) {  // finite always beats the -inf empty pool
      best_score = score;
      best = hyp;
      use_truncated = true;
    }
  }
  if (truncated) *truncated = use_truncated;
  if (best.tokens.empty()) return {};

  std::vector<int> out(best.tokens.begin() + 1, best.tokens.end());
  if (!out.empty() && out.back() == kEos) out.pop_back();
  return out;
}

}  // namespace longattn
