#include "longattn/ledger.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace longattn {

namespace {

std::size_t tri(std::size_t k) { return k * (k + 1) / 2; }

// sum over i in [0, n) of min(i, h)
std::size_t capped_ramp_sum(std::size_t n, std::size_t h) {
  if (n == 0) return 0;
  if (h >= n - 1) return tri(n - 1);
  return tri(h) + (n - 1 - h) * h;
}

// Exact cell count of a clamped symmetric band with half-width `half`.
std::size_t band_cells(std::size_t n, std::size_t half) {
  return n + 2 * capped_ramp_sum(n, half);
}

struct BandRow {
  std::size_t lo, hi;  // inclusive
  std::size_t size() const { return hi - lo + 1; }
};

BandRow band_row(std::size_t i, std::size_t n, std::size_t half) {
  return BandRow{i > half ? i - half : 0, std::min(n - 1, i + half)};
}

// |[lo,hi] ∩ [0,g)|
std::size_t interval_prefix_overlap(const BandRow& row, std::size_t g) {
  if (g == 0 || row.lo >= g) return 0;
  return std::min(row.hi, g - 1) - row.lo + 1;
}

// |[lo,hi] ∩ {0, s, 2s, ...}|
std::size_t interval_stride_overlap(const BandRow& row, std::size_t s) {
  const std::size_t first = (row.lo + s - 1) / s;  // ceil(lo/s)
  const std::size_t last = row.hi / s;
  return last >= first ? last - first + 1 : 0;
}

// Per-row arithmetic accounting for an optional window base; half == npos
// encodes an empty base.
constexpr std::size_t kNoBase = static_cast<std::size_t>(-1);

std::size_t base_row_size(std::size_t i, std::size_t n, std::size_t half) {
  return half == kNoBase ? 0 : band_row(i, n, half).size();
}

std::size_t global_formula(std::size_t n, std::size_t half, std::size_t g) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < g) {
      total += n;  // global tokens attend the full sequence
    } else if (half == kNoBase) {
      total += g;
    } else {
      const BandRow row = band_row(i, n, half);
      total += row.size() + g - interval_prefix_overlap(row, g);
    }
  }
  return total;
}

std::size_t stride_formula(std::size_t n, std::size_t half, std::size_t s) {
  const std::size_t stride_keys = (n + s - 1) / s;
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (half == kNoBase) {
      total += stride_keys;
    } else {
      const BandRow row = band_row(i, n, half);
      total += row.size() + stride_keys - interval_stride_overlap(row, s);
    }
  }
  return total;
}

std::size_t hepos_formula(std::size_t m, std::size_t n, std::size_t head, std::size_t s_h) {
  const std::size_t offset = head % s_h;
  return m * ((n - 1 - offset) / s_h + 1);
}

std::size_t budget_band(std::size_t n, std::size_t width) {
  return n * std::min(width, n);
}

}  // namespace

ComplexityReport count_cells(const PatternSpec& spec, std::size_t n, std::size_t m) {
  ComplexityReport rep;
  rep.pattern = pattern_kind_name(spec.kind);
  rep.n = n;
  rep.m = spec.kind == PatternKind::hepos ? m : n;

  const AttentionMask mask = build_pattern(spec, n, m);
  rep.measured_cells = mask.total_cells();

  const std::size_t base_half = spec.window > 0 ? spec.window / 2 : kNoBase;
  switch (spec.kind) {
    case PatternKind::full:
      rep.formula_cells = n * n;
      rep.budget_cells = n * n;
      break;
    case PatternKind::window:
      rep.formula_cells = band_cells(n, spec.window / 2);
      rep.budget_cells = budget_band(n, spec.window + 1);
      break;
    case PatternKind::adaptive_span:
      rep.formula_cells = band_cells(n, spec.span + spec.ramp);
      rep.budget_cells = budget_band(n, 2 * (spec.span + spec.ramp) + 1);
      rep.new_params = 1;  // one learned span scalar per head
      break;
    case PatternKind::global:
      rep.pattern = spec.window > 0 ? "window+global" : "global";
      rep.formula_cells = global_formula(n, base_half, spec.global_tokens);
      rep.budget_cells = (spec.window > 0 ? budget_band(n, spec.window + 1) : 0) +
                         2 * n * spec.global_tokens;
      break;
    case PatternKind::stride:
      rep.pattern = spec.window > 0 ? "window+stride" : "stride";
      rep.formula_cells = stride_formula(n, base_half, spec.stride);
      rep.budget_cells = (spec.window > 0 ? budget_band(n, spec.window + 1) : 0) +
                         n * ((n + spec.stride - 1) / spec.stride);
      break;
    case PatternKind::random_blocks:
      rep.pattern = spec.window > 0 ? "window+random" : "random";
      // partner choice is seeded; the closed form is the per-query budget
      rep.formula_cells = (spec.window > 0 ? band_cells(n, base_half) : 0) + n * spec.block;
      rep.budget_cells = (spec.window > 0 ? budget_band(n, spec.window + 1) : 0) +
                         n * spec.block;
      rep.deterministic = false;
      break;
    case PatternKind::hepos:
      rep.formula_cells = hepos_formula(m, n, spec.head, spec.hepos_stride);
      rep.budget_cells = m * ((n + spec.hepos_stride - 1) / spec.hepos_stride);
      break;
  }
  return rep;
}

ComplexityReport count_cells_linformer(std::size_t n, std::size_t m, std::size_t k,
                                       bool enc_dec) {
  ComplexityReport rep;
  rep.pattern = enc_dec ? "linformer-encdec" : "linformer";
  rep.n = n;
  rep.m = enc_dec ? m : n;
  rep.measured_cells = rep.m * k;  // the score matrix is m x k by construction
  rep.formula_cells = rep.m * k;
  rep.budget_cells = rep.m * k;
  rep.new_params = 2 * k * n;  // key and value projections, k x n each
  return rep;
}

ComplexityReport count_cells_lsh(std::size_t n, const LshSpec& spec, std::size_t d) {
  ComplexityReport rep;
  rep.pattern = "lsh";
  rep.n = n;
  rep.m = n;
  Rng rng(spec.seed + 0x5bd1e995u);
  const Tensor keys = Tensor::randn(n, d, rng);
  std::size_t measured = 0;
  for (const auto& mask : lsh_round_masks(keys, spec)) measured += mask.total_cells();
  rep.measured_cells = measured;
  rep.formula_cells = spec.rounds * n * spec.bucket_size;
  rep.budget_cells = rep.formula_cells;
  rep.deterministic = false;  // bucket occupancy is capped, measured <= formula
  return rep;
}

ComplexityReport count_cells_sinkhorn(std::size_t n, std::size_t block_size,
                                      std::uint64_t seed) {
  ComplexityReport rep;
  rep.pattern = "sinkhorn";
  rep.n = n;
  rep.m = n;
  const std::size_t n_blocks = (n + block_size - 1) / block_size;
  Rng rng(seed + 0x27d4eb2fu);
  SinkhornSpec spec;
  spec.block_size = block_size;
  spec.sort_logits = Tensor::randn(n_blocks, n_blocks, rng);
  rep.measured_cells = sinkhorn_block_mask(n, spec).total_cells();
  rep.formula_cells = 2 * n * block_size;
  rep.budget_cells = rep.formula_cells;
  rep.deterministic = false;  // self-paired blocks attend b_s cells, not 2*b_s
  return rep;
}

bool parity_check(const ParityConfig& c) {
  if (c.s == 0 || c.k == 0) return false;
  const bool core = c.w == 256 && c.max_span == 256 && c.k == 256 && c.l == 4 &&
                    c.l * c.b_l == 256 && 2 * c.b_s == 256;
  const bool budget = c.g == 128 && c.r == 128 && (c.n + c.s - 1) / c.s == 128;
  const bool enc_dec = c.s_h * c.k == c.n;
  return core && budget && enc_dec;
}

std::vector<ComplexityReport> bench_reports(std::size_t n, const ParityConfig& config,
                                            std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("bench_reports: n must be >= 2");
  const std::size_t m = std::max<std::size_t>(1, n / 2);
  std::vector<ComplexityReport> out;

  PatternSpec spec;
  spec.kind = PatternKind::full;
  out.push_back(count_cells(spec, n, n));

  {
    ComplexityReport full_ed;
    full_ed.pattern = "full-encdec";
    full_ed.n = n;
    full_ed.m = m;
    full_ed.measured_cells = AttentionMask::full(m, n).total_cells();
    full_ed.formula_cells = m * n;
    full_ed.budget_cells = m * n;
    out.push_back(full_ed);
  }

  spec = PatternSpec{};
  spec.kind = PatternKind::window;
  spec.window = config.w;
  out.push_back(count_cells(spec, n, n));

  spec = PatternSpec{};
  spec.kind = PatternKind::adaptive_span;
  spec.span = config.max_span;
  spec.max_span = config.max_span;
  spec.ramp = 32;
  out.push_back(count_cells(spec, n, n));

  spec = PatternSpec{};
  spec.kind = PatternKind::global;
  spec.window = config.w;
  spec.global_tokens = std::min(config.g, n);
  out.push_back(count_cells(spec, n, n));

  spec = PatternSpec{};
  spec.kind = PatternKind::stride;
  spec.window = config.w;
  spec.stride = config.s;
  out.push_back(count_cells(spec, n, n));

  spec = PatternSpec{};
  spec.kind = PatternKind::random_blocks;
  spec.window = config.w;
  spec.block = std::min(config.r, n);
  spec.seed = seed;
  out.push_back(count_cells(spec, n, n));

  const std::size_t k = std::min(config.k, n);
  out.push_back(count_cells_linformer(n, m, k, false));
  out.push_back(count_cells_linformer(n, m, k, true));

  LshSpec lsh;
  lsh.rounds = config.l;
  lsh.bucket_size = config.b_l;
  std::size_t buckets = (n + config.b_l - 1) / config.b_l;
  if (buckets < 2) buckets = 2;
  if (buckets % 2 != 0) ++buckets;
  lsh.n_buckets = buckets;
  lsh.seed = seed;
  out.push_back(count_cells_lsh(n, lsh));

  out.push_back(count_cells_sinkhorn(n, std::min(config.b_s, n), seed));

  spec = PatternSpec{};
  spec.kind = PatternKind::hepos;
  spec.hepos_stride = std::min(config.s_h, n);
  spec.head = 0;
  out.push_back(count_cells(spec, n, m));

  return out;
}

std::string reports_to_table(const std::vector<ComplexityReport>& reports) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %6s %6s %12s %12s %12s %12s %10s\n", "pattern", "n",
                "m", "measured", "formula", "budget", "bytes", "new_params");
  os << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-18s %6zu %6zu %12zu %12zu %12zu %12zu %10zu\n",
                  r.pattern.c_str(), r.n, r.m, r.measured_cells, r.formula_cells,
                  r.budget_cells, r.bytes(), r.new_params);
    os << line;
  }
  return os.str();
}

std::string reports_to_csv(const std::vector<ComplexityReport>& reports) {
  std::ostringstream os;
  os << "pattern,n,m,cells,bytes,new_params\n";
  for (const auto& r : reports)
    os << r.pattern << ',' << r.n << ',' << r.m << ',' << r.measured_cells << ',' << r.bytes()
       << ',' << r.new_params << '\n';
  return os.str();
}

}  // namespace longattn
