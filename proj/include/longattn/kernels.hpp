// Forward implementations of the attention variants plus the dense masked
// oracle every efficient kernel is checked against.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "longattn/mask.hpp"
#include "longattn/tensor.hpp"

namespace longattn {

// Q: m x d_k, K: n x d_k, V: n x d_v. Scores are scaled by 1/sqrt(d_k).
struct AttentionInputs {
  Tensor q, k, v;
  std::size_t query_count() const { return q.rows(); }
  std::size_t key_count() const { return k.rows(); }
  void validate() const;
};

// Low-rank length projections: key_proj and value_proj are k x n and map the
// key/value sequences from length n down to k.
struct LowRankSpec {
  std::size_t k = 0;
  Tensor key_proj;
  Tensor value_proj;
};

struct LshSpec {
  std::size_t rounds = 1;       // l
  std::size_t bucket_size = 1;  // b_l, per-bucket key cap
  std::size_t n_buckets = 1;    // 1 or an even count
  std::uint64_t seed = 0;
};

// Production mode averages the per-round outputs; mask-union mode attends
// the union of the round masks in a single pass and is the mode that carries
// the oracle-equivalence contract.
enum class LshMode { average, mask_union };

struct SinkhornSpec {
  std::size_t block_size = 1;  // b_s
  Tensor sort_logits;          // B x B block affinities, B = ceil(n / b_s)
  std::size_t iters = 8;
  double temperature = 1.0;
};

struct HeposSpec {
  std::size_t stride = 1;  // s_h
  std::size_t heads = 1;   // H; must divide d_k and d_v
};

// --- oracle ----------------------------------------------------------------

// Dense route: full score matrix, masked row softmax, dense value product.
// Ground truth for every equivalence test.
Tensor masked_attention_reference(const AttentionInputs& in, const AttentionMask& mask);

// --- kernels ---------------------------------------------------------------
// Each kernel touches only its pattern's score cells; `cells`, when given,
// accumulates the number of (query,key) score evaluations.

Tensor full_attention(const AttentionInputs& in, std::size_t* cells = nullptr);

// Self-attention band of width w (even); m == n required.
Tensor windowed_attention(const AttentionInputs& in, std::size_t w, std::size_t* cells = nullptr);

// softmax(Q (EK)^T / sqrt(d_k)) (FV); score cells = m * k. Works for both the
// self-attention case (m == n) and decoder queries against encoder keys.
Tensor linformer_attention(const AttentionInputs& in, const LowRankSpec& spec,
                           std::size_t* cells = nullptr);
Tensor linformer_encdec_attention(const Tensor& q_dec, const Tensor& k, const Tensor& v,
                                  const LowRankSpec& spec, std::size_t* cells = nullptr);

// Seeded random-rotation hashing of the shared query/key space (hashes are
// computed on K rows; queries use their own position's bucket). Buckets are
// capped at bucket_size by hash-score order, ties broken by position.
std::vector<AttentionMask> lsh_round_masks(const Tensor& keys, const LshSpec& spec);
AttentionMask lsh_union_mask(const Tensor& keys, const LshSpec& spec);
Tensor lsh_attention(const AttentionInputs& in, const LshSpec& spec,
                     LshMode mode = LshMode::average, std::size_t* cells = nullptr);

// Sinkhorn-normalized block affinities select one partner block per block
// (hard argmax with greedy de-duplication, rows in index order); each query
// attends its own block plus the partner block.
Tensor sinkhorn_normalize(const Tensor& logits, std::size_t iters, double temperature);
std::vector<std::size_t> sinkhorn_partners(const Tensor& normalized);
AttentionMask sinkhorn_block_mask(std::size_t n, const SinkhornSpec& spec);
Tensor sinkhorn_attention(const AttentionInputs& in, const SinkhornSpec& spec,
                          std::size_t* cells = nullptr);

// Head h attends encoder keys with (i - (h mod s_h)) mod s_h == 0, normalized
// over that subset; per-head outputs are concatenated. d_k and d_v are split
// evenly across heads.
Tensor hepos_attention(const Tensor& q_dec, const Tensor& k, const Tensor& v,
                       const HeposSpec& spec, std::size_t* cells = nullptr);

}  // namespace longattn
