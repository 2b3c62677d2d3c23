// Exact accounting of attended score cells and newly introduced parameters
// per attention variant. Each report carries three counts:
//   measured_cells — summed over the instrumented mask construction,
//   formula_cells  — closed-form count of the pattern definition (equals
//                    measured exactly for deterministic patterns),
//   budget_cells   — the coarse per-variant budget (n*(w+1), l*n*b_l, ...)
//                    that upper-bounds the measured count.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "longattn/kernels.hpp"
#include "longattn/mask.hpp"

namespace longattn {

struct ComplexityReport {
  std::string pattern;
  std::size_t n = 0;  // key / encoder length
  std::size_t m = 0;  // query length (== n for self-attention)
  std::size_t measured_cells = 0;
  std::size_t formula_cells = 0;
  std::size_t budget_cells = 0;
  std::size_t new_params = 0;
  bool deterministic = true;  // measured == formula must hold
  std::size_t bytes() const { return measured_cells * 8; }
};

// Fixed patterns and hepos; m is used only for hepos (decoder queries).
ComplexityReport count_cells(const PatternSpec& spec, std::size_t n, std::size_t m);

// Low-rank / learnable variants.
ComplexityReport count_cells_linformer(std::size_t n, std::size_t m, std::size_t k,
                                       bool enc_dec);
// Measured on seeded synthetic keys (dimension d); capped by l*n*b_l.
ComplexityReport count_cells_lsh(std::size_t n, const LshSpec& spec, std::size_t d = 16);
// Measured from the realized block assignment of seeded sort logits.
ComplexityReport count_cells_sinkhorn(std::size_t n, std::size_t block_size,
                                      std::uint64_t seed);

// Hyperparameter parity constraints for comparable memory budgets:
// w = max_span = k = l*b_l = 2*b_s, l = 4 rounds, per-query augmentation
// budget g = ceil(n/s) = r = 128, and s_h = n/k.
struct ParityConfig {
  std::size_t n = 1024;
  std::size_t w = 256;
  std::size_t max_span = 256;
  std::size_t k = 256;
  std::size_t l = 4;
  std::size_t b_l = 64;
  std::size_t b_s = 128;
  std::size_t g = 128;
  std::size_t s = 8;
  std::size_t r = 128;
  std::size_t s_h = 4;
};

bool parity_check(const ParityConfig& config);

// The standard benchmark rows (full, window, adaptive, window+global,
// window+stride, window+random, linformer self/enc-dec, lsh, sinkhorn,
// hepos) at the given n with m = n/2 for encoder-decoder rows. Oversized
// hyperparameters are clamped to the sequence length.
std::vector<ComplexityReport> bench_reports(std::size_t n, const ParityConfig& config,
                                            std::uint64_t seed);

std::string reports_to_table(const std::vector<ComplexityReport>& reports);
std::string reports_to_csv(const std::vector<ComplexityReport>& reports);

}  // namespace longattn
