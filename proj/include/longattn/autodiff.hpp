// Minimal reverse-mode differentiation over the dense tensor core. The tape
// records the primitives needed by the toy seq2seq model (matmul, masked
// softmax, elementwise add/mul, embedding gather, cross-entropy); attention
// kernels are differentiable by composition of these.
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "longattn/mask.hpp"
#include "longattn/tensor.hpp"

namespace longattn {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

// Ordered computation record. Nodes are appended in execution order, so the
// record is topologically sorted by construction and backward() replays it
// in reverse exactly once. One tape per training step / check; not shared
// across threads.
class Tape {
 public:
  // Registers an external parameter. The tensor must outlive the tape;
  // backward() writes the gradient into param.grad.
  Var leaf(Tensor& param);

  // Non-learned input; no gradient is kept for it.
  Var input(Tensor value);

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }
  const Tensor& grad_of(Var v) const { return nodes_[check(v)].grad; }

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);

  // scores[i,j] = c * dot(q_i, k_j) for attended cells only; other entries
  // stay exactly zero and are never touched. Increments the score-cell meter.
  Var masked_scores(Var q, Var k, const AttentionMask& mask, double c);

  Var softmax_masked(Var scores, const AttentionMask& mask);

  // out_i = sum_{j in mask row i} probs[i,j] * v_j
  Var masked_weighted_sum(Var probs, Var v, const AttentionMask& mask);

  // out row t = table row ids[t]
  Var gather_rows(Var table, std::vector<int> ids);

  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);

  Var sum(Var a);  // scalar

  // Mean negative log-likelihood of targets under row softmax of logits.
  Var cross_entropy(Var logits, std::vector<int> targets);

  // Seeds d(loss)=1 and sweeps the record once in reverse. Loss must be a
  // scalar. Populates the grad buffer of every registered leaf tensor and
  // consumes the record (a second call throws).
  void backward(Var loss);

  std::size_t score_cells() const { return score_cells_; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // same shape, zero-initialized
    std::function<void(Tape&, Node&)> backward_fn;  // null for leaves/inputs
    Tensor* leaf = nullptr;
  };

  int check(Var v) const;
  Var push(Tensor value, std::function<void(Tape&, Node&)> backward_fn);

  std::vector<Node> nodes_;
  std::size_t score_cells_ = 0;
  bool consumed_ = false;

  friend struct Var;
};

// Composition used by every masked kernel: scores -> masked softmax -> values.
Var masked_attention(Tape& tape, Var q, Var k, Var v, const AttentionMask& mask, double scale);

// Central-difference check: perturbs every element of x by +-step, evaluates
// f, and compares the numeric gradient elementwise against `analytic`.
// Returns max over elements of |analytic - numeric| / max(1, |analytic|, |numeric|).
double finite_difference_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               const Tensor& analytic, double step);

}  // namespace longattn
