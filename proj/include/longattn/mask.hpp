// Attention sparsity patterns: declarative builders for window / global /
// stride / random-block / adaptive-span masks, the head-wise positional
// stride (hepos) membership rule, and mask export (text grid, PGM).
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace longattn {

// Per-query attended-key index sets. Hard masks carry only the index lists;
// soft masks additionally carry a weight in [0,1] per attended cell.
struct AttentionMask {
  std::size_t n_queries = 0;
  std::size_t n_keys = 0;
  std::vector<std::vector<std::int32_t>> rows;   // sorted, strictly increasing
  std::vector<std::vector<double>> weights;      // parallel to rows; empty if hard

  bool soft() const { return !weights.empty(); }
  std::size_t total_cells() const;
  bool attends(std::size_t q, std::size_t k) const;
  double weight_at(std::size_t q, std::size_t k) const;  // 1.0 for hard cells, 0.0 if absent

  // Checks index bounds, strict ordering, weight range. Throws std::invalid_argument.
  void validate() const;

  static AttentionMask empty(std::size_t n_queries, std::size_t n_keys);
  static AttentionMask full(std::size_t n_queries, std::size_t n_keys);
};

bool same_support(const AttentionMask& a, const AttentionMask& b);
AttentionMask union_masks(const AttentionMask& a, const AttentionMask& b);

enum class PatternKind {
  full,
  window,
  adaptive_span,
  global,         // global tokens added to a window base (or empty base if window == 0)
  stride,         // stride keys added to a window base (or empty base)
  random_blocks,  // random partner block added to a window base (or empty base)
  hepos,
};

const char* pattern_kind_name(PatternKind kind);

// Declarative description of one attention sparsity pattern. Only the fields
// relevant for `kind` are read; sizes are validated against the sequence
// length at build time.
struct PatternSpec {
  PatternKind kind = PatternKind::full;
  std::size_t window = 0;         // w: window width in tokens, even
  std::size_t span = 0;           // z: adaptive span actually used
  std::size_t max_span = 0;       // max adaptive span cap; 0 = no cap
  std::size_t ramp = 32;          // R: adaptive-span ramp width
  std::size_t global_tokens = 0;  // g
  std::size_t stride = 0;         // s
  std::size_t block = 0;          // block size for random attention (= r keys per query)
  std::size_t hepos_stride = 0;   // s_h
  std::size_t head = 0;           // h, 0-based
  std::uint64_t seed = 0;         // consumed only by random_blocks
};

// --- builders ------------------------------------------------------------

// Query i attends {max(0,i-w/2) .. min(n-1,i+w/2)}, self included. w must be even.
AttentionMask window_mask(std::size_t n, std::size_t w);

// Every query additionally attends keys 0..g-1; queries 0..g-1 attend all keys.
AttentionMask add_global(const AttentionMask& base, std::size_t g);

// Every query additionally attends keys {0, s, 2s, ...}.
AttentionMask add_stride(const AttentionMask& base, std::size_t s);

// Each query block attends one distinct other block chosen by the seeded RNG.
// If block does not divide n, the last block is simply shorter.
AttentionMask add_random_blocks(const AttentionMask& base, std::size_t block, std::uint64_t seed);

// Soft mask: weight at distance d = clamp((ramp + z - d)/ramp, 0, 1);
// hard support is d <= z + ramp. Throws if z > max_span (when max_span > 0).
AttentionMask adaptive_span_mask(std::size_t n, std::size_t z, std::size_t max_span,
                                 std::size_t ramp);

// One soft mask per head, from that head's span value.
std::vector<AttentionMask> adaptive_span_masks(std::size_t n,
                                               const std::vector<std::size_t>& spans,
                                               std::size_t max_span, std::size_t ramp);

// 0-based membership rule: key i belongs to head h iff
// (i - (h mod s_h)) mod s_h == 0. Heads beyond s_h cycle through the offsets.
bool hepos_membership(std::size_t key, std::size_t head, std::size_t stride);

// Every decoder query row attends exactly the head's membership set
// {o, o+s_h, ...} with o = head mod s_h. Throws empty_row semantics
// (std::invalid_argument) when s_h > n.
AttentionMask hepos_mask(std::size_t m, std::size_t n, std::size_t head, std::size_t stride);

// Lower-triangular self-attention mask used by the toy decoder.
AttentionMask causal_mask(std::size_t n);

// Dispatch on spec.kind for (n queries/keys, m decoder queries for hepos).
AttentionMask build_pattern(const PatternSpec& spec, std::size_t n, std::size_t m);

// --- export ---------------------------------------------------------------

// Rows = queries; '#' = attended, '.' = not. Soft cells with weight < 1 render
// as 'o' when weight >= 0.5 and ':' otherwise.
std::string mask_to_text(const AttentionMask& mask);

// Binary PGM (P5), one pixel per (query,key): 0 = not attended, 255 = hard,
// round(255 * weight) for soft cells.
std::vector<unsigned char> mask_to_pgm(const AttentionMask& mask);

}  // namespace longattn
