// Tiny trainable encoder-decoder with pluggable encoder self-attention and
// encoder-decoder attention (full | linformer | hepos), teacher-forced
// training on synthetic tasks, and beam-search decoding.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "longattn/autodiff.hpp"
#include "longattn/mask.hpp"
#include "longattn/tensor.hpp"

namespace longattn {

// Reserved token ids.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kReservedTokens = 4;

enum class TaskKind { copy, reverse, strided_pick };

struct Example {
  std::vector<int> source;
  std::vector<int> target;
};

// copy: target = source; reverse: target = reversed source;
// strided_pick: target = every 4th source token (positions 0, 4, 8, ...).
std::vector<Example> synth_task(TaskKind kind, std::size_t length, std::size_t vocab,
                                std::size_t count, std::uint64_t seed);

enum class EncDecKind { full, linformer, hepos };

struct ModelConfig {
  std::size_t vocab = 16;
  std::size_t d_model = 32;
  std::size_t heads = 4;  // must divide d_model
  PatternSpec encoder_pattern;  // defaults to full self-attention
  EncDecKind encdec = EncDecKind::full;
  std::size_t linformer_k = 8;   // projected encoder length (enc-dec linformer)
  std::size_t hepos_stride = 2;  // s_h (enc-dec hepos)
  std::size_t max_source_len = 16;
  std::size_t max_target_len = 20;  // decoder positions incl. BOS/EOS
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::size_t steps = 2000;
  double lr = 2.0;
  std::size_t batch = 8;
  double clip_norm = 0.1;  // global gradient-norm clip
  std::size_t eval_every = 200;
};

struct TrainRun {
  std::vector<double> losses;          // one per step
  std::vector<std::size_t> eval_steps;
  std::vector<double> accuracies;      // teacher-forced token accuracy per eval
  std::vector<std::size_t> cumulative_encdec_cells;  // one per step
  std::size_t encoder_cells = 0;       // cumulative attended score cells
  std::size_t encdec_cells = 0;
  double final_accuracy = 0.0;
};

class Seq2SeqModel {
 public:
  explicit Seq2SeqModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // One clipped-SGD step over the batch (teacher-forced mean cross-entropy).
  // Adds this step's attended cells to the counters when given.
  double train_step(const std::vector<Example>& batch, double lr, double clip_norm,
                    std::size_t* encoder_cells = nullptr, std::size_t* encdec_cells = nullptr);

  // Teacher-forced next-token logits; rows align with the decoder input.
  Tensor logits(const std::vector<int>& source, const std::vector<int>& dec_input) const;

  // Fraction of target positions (EOS included) whose argmax logit matches.
  double token_accuracy(const std::vector<Example>& data) const;

  std::vector<std::pair<std::string, const Tensor*>> parameter_blocks() const;

 private:
  struct VarParams;
  struct ForwardOut {
    Var logits;
    std::size_t encoder_cells = 0;
    std::size_t encdec_cells = 0;
  };
  VarParams register_params(Tape& tape, bool trainable) const;
  ForwardOut build_one(Tape& tape, const VarParams& vp, const std::vector<int>& source,
                       const std::vector<int>& dec_input) const;

  ModelConfig config_;

  Tensor tok_emb_, pos_enc_, pos_dec_;
  Tensor enc_wq_, enc_wk_, enc_wv_, enc_wo_;
  Tensor dec_wq_, dec_wk_, dec_wv_, dec_wo_;
  Tensor x_wq_, x_wk_, x_wv_, x_wo_;
  Tensor lin_key_proj_, lin_value_proj_;  // linformer enc-dec only
  Tensor w_out_;

  std::vector<std::pair<std::string, Tensor*>> blocks_;  // update/clip order

  friend TrainRun train(Seq2SeqModel&, const std::vector<Example>&, const TrainOptions&);
};

// Deterministic under the model seed and fixed data order: examples are
// consumed in cyclic order, `opt.batch` per step. Throws std::runtime_error
// naming the step when the loss turns non-finite.
TrainRun train(Seq2SeqModel& model, const std::vector<Example>& data, const TrainOptions& opt);

// Beam search with length penalty lp(len) = ((5 + len) / 6)^alpha; candidates
// are ranked by logp / lp(len). beam == 1 reduces to greedy decoding. Sets
// *truncated when the best hypothesis never emitted EOS within the limit.
std::vector<int> beam_decode(const Seq2SeqModel& model, const std::vector<int>& source,
                             std::size_t beam, double alpha, bool* truncated = nullptr);

}  // namespace longattn
