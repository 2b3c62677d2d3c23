#include "longattn/mask.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

namespace longattn {

std::size_t AttentionMask::total_cells() const {
  std::size_t total = 0;
  for (const auto& row : rows) total += row.size();
  return total;
}

bool AttentionMask::attends(std::size_t q, std::size_t k) const {
  const auto& row = rows[q];
  return std::binary_search(row.begin(), row.end(), static_cast<std::int32_t>(k));
}

double AttentionMask::weight_at(std::size_t q, std::size_t k) const {
  const auto& row = rows[q];
  auto it = std::lower_bound(row.begin(), row.end(), static_cast<std::int32_t>(k));
  if (it == row.end() || *it != static_cast<std::int32_t>(k)) return 0.0;
  if (!soft()) return 1.0;
  return weights[q][static_cast<std::size_t>(it - row.begin())];
}

void AttentionMask::validate() const {
  if (rows.size() != n_queries)
    throw std::invalid_argument("mask: row count does not match n_queries");
  if (soft() && weights.size() != n_queries)
    throw std::invalid_argument("mask: weight rows do not match n_queries");
  for (std::size_t q = 0; q < n_queries; ++q) {
    const auto& row = rows[q];
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] < 0 || static_cast<std::size_t>(row[j]) >= n_keys)
        throw std::invalid_argument("mask: key index out of range");
      if (j > 0 && row[j] <= row[j - 1])
        throw std::invalid_argument("mask: indices not strictly increasing");
    }
    if (soft()) {
      if (weights[q].size() != row.size())
        throw std::invalid_argument("mask: weight row length mismatch");
      for (double w : weights[q])
        if (!(w >= 0.0 && w <= 1.0))
          throw std::invalid_argument("mask: soft weight outside [0,1]");
    }
  }
}

AttentionMask AttentionMask::empty(std::size_t n_queries, std::size_t n_keys) {
  AttentionMask m;
  m.n_queries = n_queries;
  m.n_keys = n_keys;
  m.rows.assign(n_queries, {});
  return m;
}

AttentionMask AttentionMask::full(std::size_t n_queries, std::size_t n_keys) {
  AttentionMask m = empty(n_queries, n_keys);
  std::vector<std::int32_t> all(n_keys);
  for (std::size_t k = 0; k < n_keys; ++k) all[k] = static_cast<std::int32_t>(k);
  for (auto& row : m.rows) row = all;
  return m;
}

bool same_support(const AttentionMask& a, const AttentionMask& b) {
  return a.n_queries == b.n_queries && a.n_keys == b.n_keys && a.rows == b.rows;
}

AttentionMask union_masks(const AttentionMask& a, const AttentionMask& b) {
  if (a.n_queries != b.n_queries || a.n_keys != b.n_keys)
    throw std::invalid_argument("union_masks: dimension mismatch");
  if (a.soft() || b.soft())
    throw std::invalid_argument("union_masks: soft masks cannot be unioned");
  AttentionMask out = AttentionMask::empty(a.n_queries, a.n_keys);
  for (std::size_t q = 0; q < a.n_queries; ++q) {
    std::set_union(a.rows[q].begin(), a.rows[q].end(), b.rows[q].begin(), b.rows[q].end(),
                   std::back_inserter(out.rows[q]));
  }
  return out;
}

const char* pattern_kind_name(PatternKind kind) {
  switch (kind) {
    case PatternKind::full: return "full";
    case PatternKind::window: return "window";
    case PatternKind::adaptive_span: return "adaptive_span";
    case PatternKind::global: return "global";
    case PatternKind::stride: return "stride";
    case PatternKind::random_blocks: return "random";
    case PatternKind::hepos: return "hepos";
  }
  return "?";
}

AttentionMask window_mask(std::size_t n, std::size_t w) {
  if (w < 2 || w % 2 != 0)
    throw std::invalid_argument("window_mask: width must be even and >= 2");
  const std::size_t half = w / 2;
  AttentionMask m = AttentionMask::empty(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    auto& row = m.rows[i];
    row.reserve(hi - lo + 1);
    for (std::size_t j = lo; j <= hi; ++j) row.push_back(static_cast<std::int32_t>(j));
  }
  return m;
}

AttentionMask add_global(const AttentionMask& base, std::size_t g) {
  if (g > base.n_keys) throw std::invalid_argument("add_global: g exceeds key count");
  if (base.soft()) throw std::invalid_argument("add_global: soft base not supported");
  if (g == 0) return base;
  AttentionMask out = base;
  std::vector<std::int32_t> globals(g);
  for (std::size_t k = 0; k < g; ++k) globals[k] = static_cast<std::int32_t>(k);
  for (std::size_t q = 0; q < out.n_queries; ++q) {
    if (q < g && out.n_queries == out.n_keys) {
      // global tokens attend the full sequence (symmetric operation)
      out.rows[q].resize(out.n_keys);
      for (std::size_t k = 0; k < out.n_keys; ++k)
        out.rows[q][k] = static_cast<std::int32_t>(k);
    } else {
      std::vector<std::int32_t> merged;
      std::set_union(out.rows[q].begin(), out.rows[q].end(), globals.begin(), globals.end(),
                     std::back_inserter(merged));
      out.rows[q] = std::move(merged);
    }
  }
  return out;
}

AttentionMask add_stride(const AttentionMask& base, std::size_t s) {
  if (s < 1) throw std::invalid_argument("add_stride: stride must be >= 1");
  if (base.soft()) throw std::invalid_argument("add_stride: soft base not supported");
  AttentionMask out = base;
  std::vector<std::int32_t> strided;
  for (std::size_t k = 0; k < out.n_keys; k += s) strided.push_back(static_cast<std::int32_t>(k));
  for (std::size_t q = 0; q < out.n_queries; ++q) {
    std::vector<std::int32_t> merged;
    std::set_union(out.rows[q].begin(), out.rows[q].end(), strided.begin(), strided.end(),
                   std::back_inserter(merged));
    out.rows[q] = std::move(merged);
  }
  return out;
}

AttentionMask add_random_blocks(const AttentionMask& base, std::size_t block,
                                std::uint64_t seed) {
  if (block < 1 || block > base.n_keys)
    throw std::invalid_argument("add_random_blocks: invalid block size");
  if (base.soft()) throw std::invalid_argument("add_random_blocks: soft base not supported");
  const std::size_t n = base.n_keys;
  const std::size_t n_blocks = (n + block - 1) / block;
  if (n_blocks <= 1) return base;

  std::mt19937_64 gen(seed);
  AttentionMask out = base;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    // pick a distinct partner block
    std::size_t partner = gen() % (n_blocks - 1);
    if (partner >= b) ++partner;
    const std::size_t plo = partner * block;
    const std::size_t phi = std::min(n, plo + block);
    std::vector<std::int32_t> partner_keys;
    partner_keys.reserve(phi - plo);
    for (std::size_t k = plo; k < phi; ++k) partner_keys.push_back(static_cast<std::int32_t>(k));

    const std::size_t qlo = b * block;
    const std::size_t qhi = std::min(out.n_queries, qlo + block);
    for (std::size_t q = qlo; q < qhi; ++q) {
      std::vector<std::int32_t> merged;
      std::set_union(out.rows[q].begin(), out.rows[q].end(), partner_keys.begin(),
                     partner_keys.end(), std::back_inserter(merged));
      out.rows[q] = std::move(merged);
    }
  }
  return out;
}

AttentionMask adaptive_span_mask(std::size_t n, std::size_t z, std::size_t max_span,
                                 std::size_t ramp) {
  if (ramp < 1) throw std::invalid_argument("adaptive_span_mask: ramp must be >= 1");
  if (max_span > 0 && z > max_span)
    throw std::invalid_argument("adaptive_span_mask: span exceeds max span");
  const std::size_t reach = z + ramp;  // hard support is |i-j| <= z + ramp
  AttentionMask m = AttentionMask::empty(n, n);
  m.weights.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > reach ? i - reach : 0;
    const std::size_t hi = std::min(n - 1, i + reach);
    for (std::size_t j = lo; j <= hi; ++j) {
      const std::size_t d = i > j ? i - j : j - i;
      double w = (static_cast<double>(ramp) + static_cast<double>(z) - static_cast<double>(d)) /
                 static_cast<double>(ramp);
      w = std::min(1.0, std::max(0.0, w));
      m.rows[i].push_back(static_cast<std::int32_t>(j));
      m.weights[i].push_back(w);
    }
  }
  return m;
}

std::vector<AttentionMask> adaptive_span_masks(std::size_t n,
                                               const std::vector<std::size_t>& spans,
                                               std::size_t max_span, std::size_t ramp) {
  std::vector<AttentionMask> masks;
  masks.reserve(spans.size());
  for (std::size_t z : spans) masks.push_back(adaptive_span_mask(n, z, max_span, ramp));
  return masks;
}

bool hepos_membership(std::size_t key, std::size_t head, std::size_t stride) {
  if (stride < 1) throw std::invalid_argument("hepos_membership: stride must be >= 1");
  return key % stride == head % stride;
}

AttentionMask hepos_mask(std::size_t m, std::size_t n, std::size_t head, std::size_t stride) {
  if (stride < 1) throw std::invalid_argument("hepos_mask: stride must be >= 1");
  if (stride > n)
    throw std::invalid_argument("hepos_mask: stride exceeds key count (empty rows)");
  const std::size_t offset = head % stride;
  std::vector<std::int32_t> keys;
  for (std::size_t k = offset; k < n; k += stride) keys.push_back(static_cast<std::int32_t>(k));
  AttentionMask out = AttentionMask::empty(m, n);
  for (auto& row : out.rows) row = keys;
  return out;
}

AttentionMask causal_mask(std::size_t n) {
  AttentionMask m = AttentionMask::empty(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m.rows[i].resize(i + 1);
    for (std::size_t j = 0; j <= i; ++j) m.rows[i][j] = static_cast<std::int32_t>(j);
  }
  return m;
}

AttentionMask build_pattern(const PatternSpec& spec, std::size_t n, std::size_t m) {
  switch (spec.kind) {
    case PatternKind::full:
      return AttentionMask::full(n, n);
    case PatternKind::window:
      return window_mask(n, spec.window);
    case PatternKind::adaptive_span:
      return adaptive_span_mask(n, spec.span, spec.max_span, spec.ramp);
    case PatternKind::global: {
      AttentionMask base = spec.window > 0 ? window_mask(n, spec.window)
                                           : AttentionMask::empty(n, n);
      return add_global(base, spec.global_tokens);
    }
    case PatternKind::stride: {
      AttentionMask base = spec.window > 0 ? window_mask(n, spec.window)
                                           : AttentionMask::empty(n, n);
      return add_stride(base, spec.stride);
    }
    case PatternKind::random_blocks: {
      AttentionMask base = spec.window > 0 ? window_mask(n, spec.window)
                                           : AttentionMask::empty(n, n);
      return add_random_blocks(base, spec.block, spec.seed);
    }
    case PatternKind::hepos:
      return hepos_mask(m, n, spec.head, spec.hepos_stride);
  }
  throw std::invalid_argument("build_pattern: unknown kind");
}

std::string mask_to_text(const AttentionMask& mask) {
  std::string out;
  out.reserve(mask.n_queries * (mask.n_keys + 1));
  for (std::size_t q = 0; q < mask.n_queries; ++q) {
    std::string line(mask.n_keys, '.');
    const auto& row = mask.rows[q];
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto k = static_cast<std::size_t>(row[j]);
      if (!mask.soft()) {
        line[k] = '#';
      } else {
        const double w = mask.weights[q][j];
        line[k] = w >= 1.0 ? '#' : (w >= 0.5 ? 'o' : ':');
      }
    }
    out += line;
    out += '\n';
  }
  return out;
}

std::vector<unsigned char> mask_to_pgm(const AttentionMask& mask) {
  char header[64];
  const int len = std::snprintf(header, sizeof(header), "P5\n%zu %zu\n255\n", mask.n_keys,
                                mask.n_queries);
  std::vector<unsigned char> out(header, header + len);
  out.resize(static_cast<std::size_t>(len) + mask.n_queries * mask.n_keys, 0);
  unsigned char* pixels = out.data() + len;
  for (std::size_t q = 0; q < mask.n_queries; ++q) {
    const auto& row = mask.rows[q];
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double w = mask.soft() ? mask.weights[q][j] : 1.0;
      pixels[q * mask.n_keys + static_cast<std::size_t>(row[j])] =
          static_cast<unsigned char>(w * 255.0 + 0.5);
    }
  }
  return out;
}

}  // namespace longattn
