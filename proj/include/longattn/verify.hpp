// Reusable verification harnesses: kernel-vs-oracle equivalence sweeps,
// finite-difference gradient checks, and the hepos structural checks.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace longattn {

enum class KernelKind { full, window, linformer, linformer_encdec, lsh, sinkhorn, hepos };

const char* kernel_kind_name(KernelKind kind);

// Runs the kernel on a seeded random instance and returns the max-abs
// difference against masked_attention_reference on the pattern's mask.
// `tampered_mask` flips one mask bit on the oracle side (fault injection).
double oracle_equivalence_error(KernelKind kind, std::size_t n, std::size_t d,
                                std::uint64_t seed, bool tampered_mask = false);

// Analytic gradients (taped composition) vs central finite differences of the
// forward value, w.r.t. Q, K and V. Returns the max relative error.
double kernel_gradcheck_error(KernelKind kind, std::size_t n, std::size_t d,
                              std::uint64_t seed, double step = 1e-5);

// Max relative finite-difference error across all tape primitives.
double primitive_gradcheck_error(std::uint64_t seed, double step = 1e-5);

struct HeposStructure {
  bool row_counts_ok = true;  // per-head per-query key count in {floor, ceil} of n/s_h
  bool partition_ok = true;   // heads 0..s_h-1 partition the keys exactly
  bool coverage_ok = true;    // union over heads covers every key
  std::string detail;
  bool all_ok() const { return row_counts_ok && partition_ok && coverage_ok; }
};

// Exhaustive over all (n, s_h) with 1 <= s_h <= n <= max_n.
HeposStructure check_hepos_structure(std::size_t max_n);

}  // namespace longattn
