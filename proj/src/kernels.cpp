#include "longattn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace longattn {

namespace {

// Sparse per-row route shared by the efficient kernels: per attended cell
// compute the scaled dot product, soft-max over the row's attended set, then
// accumulate value rows. Touches exactly mask.total_cells() score cells.
Tensor masked_attention_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                const AttentionMask& mask, double scale, std::size_t* cells) {
  if (q.rows() != mask.n_queries || k.rows() != mask.n_keys || v.rows() != mask.n_keys ||
      q.cols() != k.cols())
    throw std::invalid_argument("masked attention: shape/mask mismatch");
  const std::size_t d = q.cols(), dv = v.cols();
  Tensor out(mask.n_queries, dv, 0.0);
  std::vector<double> scores;
  for (std::size_t i = 0; i < mask.n_queries; ++i) {
    const auto& row = mask.rows[i];
    if (row.empty())
      throw empty_row_error("masked attention: empty attended set at row " + std::to_string(i));
    scores.resize(row.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto kj = static_cast<std::size_t>(row[j]);
      double dot = 0.0;
      for (std::size_t x = 0; x < d; ++x) dot += q.at(i, x) * k.at(kj, x);
      scores[j] = scale * dot;
      mx = std::max(mx, scores[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double w = mask.soft() ? mask.weights[i][j] : 1.0;
      scores[j] = w * std::exp(scores[j] - mx);
      z += scores[j];
    }
    if (!(z > 0.0))
      throw empty_row_error("masked attention: zero total weight at row " + std::to_string(i));
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double p = scores[j] / z;
      const auto kj = static_cast<std::size_t>(row[j]);
      for (std::size_t x = 0; x < dv; ++x) out.at(i, x) += p * v.at(kj, x);
    }
  }
  if (cells) *cells += mask.total_cells();
  return out;
}

Tensor slice_cols_of(const Tensor& a, std::size_t c0, std::size_t c1) {
  Tensor out(a.rows(), c1 - c0);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = a.at(r, c);
  return out;
}

}  // namespace

void AttentionInputs::validate() const {
  if (q.rows() < 1 || k.rows() < 1)
    throw std::invalid_argument("attention inputs: empty query or key set");
  if (q.cols() != k.cols())
    throw std::invalid_argument("attention inputs: query/key dimension mismatch");
  if (k.rows() != v.rows())
    throw std::invalid_argument("attention inputs: key/value count mismatch");
}

Tensor masked_attention_reference(const AttentionInputs& in, const AttentionMask& mask) {
  in.validate();
  if (mask.n_queries != in.query_count() || mask.n_keys != in.key_count())
    throw std::invalid_argument("masked_attention_reference: mask dimension mismatch");
  const double s = 1.0 / std::sqrt(static_cast<double>(in.q.cols()));
  Tensor scores = scale(matmul(in.q, transpose(in.k)), s);
  Tensor probs = softmax_masked(scores, mask);
  return matmul(probs, in.v);
}

Tensor full_attention(const AttentionInputs& in, std::size_t* cells) {
  in.validate();
  return masked_attention_forward(in.q, in.k, in.v,
                                  AttentionMask::full(in.query_count(), in.key_count()),
                                  1.0 / std::sqrt(static_cast<double>(in.q.cols())), cells);
}

Tensor windowed_attention(const AttentionInputs& in, std::size_t w, std::size_t* cells) {
  in.validate();
  if (in.query_count() != in.key_count())
    throw std::invalid_argument("windowed_attention: requires self-attention (m == n)");
  const AttentionMask mask = window_mask(in.key_count(), w);
  return masked_attention_forward(in.q, in.k, in.v, mask,
                                  1.0 / std::sqrt(static_cast<double>(in.q.cols())), cells);
}

Tensor linformer_encdec_attention(const Tensor& q_dec, const Tensor& k, const Tensor& v,
                                  const LowRankSpec& spec, std::size_t* cells) {
  const std::size_t n = k.rows();
  if (spec.key_proj.rows() != spec.k || spec.key_proj.cols() != n ||
      spec.value_proj.rows() != spec.k || spec.value_proj.cols() != n)
    throw std::invalid_argument("linformer: projection dimensions disagree with n");
  if (spec.k > n) throw std::invalid_argument("linformer: k must be <= n");
  Tensor k_low = matmul(spec.key_proj, k);    // k x d_k
  Tensor v_low = matmul(spec.value_proj, v);  // k x d_v
  return masked_attention_forward(q_dec, k_low, v_low,
                                  AttentionMask::full(q_dec.rows(), spec.k),
                                  1.0 / std::sqrt(static_cast<double>(q_dec.cols())), cells);
}

Tensor linformer_attention(const AttentionInputs& in, const LowRankSpec& spec,
                           std::size_t* cells) {
  in.validate();
  return linformer_encdec_attention(in.q, in.k, in.v, spec, cells);
}

std::vector<AttentionMask> lsh_round_masks(const Tensor& keys, const LshSpec& spec) {
  const std::size_t n = keys.rows();
  const std::size_t d = keys.cols();
  if (spec.rounds < 1 || spec.bucket_size < 1)
    throw std::invalid_argument("lsh: rounds and bucket size must be >= 1");
  if (spec.n_buckets * spec.bucket_size < n)
    throw std::invalid_argument("lsh: bucket capacity below sequence length");
  if (spec.n_buckets != 1 && spec.n_buckets % 2 != 0)
    throw std::invalid_argument("lsh: bucket count must be 1 or even");

  std::vector<AttentionMask> masks;
  masks.reserve(spec.rounds);
  for (std::size_t round = 0; round < spec.rounds; ++round) {
    std::vector<std::size_t> bucket(n, 0);
    std::vector<double> hash_score(n, 0.0);
    if (spec.n_buckets > 1) {
      // random rotation; argmax over [xR; -xR]
      Rng rng(spec.seed * 0x9e3779b97f4a7c15ULL + round + 1);
      const std::size_t half = spec.n_buckets / 2;
      Tensor rot = Tensor::randn(d, half, rng);
      for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t b = 0; b < half; ++b) {
          double proj = 0.0;
          for (std::size_t x = 0; x < d; ++x) proj += keys.at(i, x) * rot.at(x, b);
          if (proj > best) { best = proj; arg = b; }
          if (-proj > best) { best = -proj; arg = b + half; }
        }
        bucket[i] = arg;
        hash_score[i] = best;
      }
    }
    std::vector<std::vector<std::int32_t>> members(spec.n_buckets);
    for (std::size_t i = 0; i < n; ++i) members[bucket[i]].push_back(static_cast<std::int32_t>(i));

    // cap each bucket's key set at bucket_size, strongest hash scores first
    std::vector<std::vector<std::int32_t>> bucket_keys(spec.n_buckets);
    for (std::size_t b = 0; b < spec.n_buckets; ++b) {
      auto order = members[b];
      std::stable_sort(order.begin(), order.end(), [&](std::int32_t x, std::int32_t y) {
        if (hash_score[x] != hash_score[y]) return hash_score[x] > hash_score[y];
        return x < y;
      });
      if (order.size() > spec.bucket_size) order.resize(spec.bucket_size);
      std::sort(order.begin(), order.end());
      bucket_keys[b] = std::move(order);
    }

    AttentionMask mask = AttentionMask::empty(n, n);
    for (std::size_t i = 0; i < n; ++i) mask.rows[i] = bucket_keys[bucket[i]];
    masks.push_back(std::move(mask));
  }
  return masks;
}

AttentionMask lsh_union_mask(const Tensor& keys, const LshSpec& spec) {
  auto masks = lsh_round_masks(keys, spec);
  AttentionMask out = masks[0];
  for (std::size_t r = 1; r < masks.size(); ++r) out = union_masks(out, masks[r]);
  return out;
}

Tensor lsh_attention(const AttentionInputs& in, const LshSpec& spec, LshMode mode,
                     std::size_t* cells) {
  in.validate();
  if (in.query_count() != in.key_count())
    throw std::invalid_argument("lsh_attention: requires self-attention (m == n)");
  const double s = 1.0 / std::sqrt(static_cast<double>(in.q.cols()));
  if (mode == LshMode::mask_union) {
    return masked_attention_forward(in.q, in.k, in.v, lsh_union_mask(in.k, spec), s, cells);
  }
  auto masks = lsh_round_masks(in.k, spec);
  Tensor out(in.query_count(), in.v.cols(), 0.0);
  for (const auto& mask : masks)
    out = add(out, masked_attention_forward(in.q, in.k, in.v, mask, s, cells));
  return scale(out, 1.0 / static_cast<double>(masks.size()));
}

Tensor sinkhorn_normalize(const Tensor& logits, std::size_t iters, double temperature) {
  if (iters < 1) throw std::invalid_argument("sinkhorn_normalize: iters must be >= 1");
  if (!(temperature > 0.0))
    throw std::invalid_argument("sinkhorn_normalize: temperature must be > 0");
  if (!logits.all_finite())
    throw std::runtime_error("sinkhorn_normalize: non-finite logits");
  const std::size_t b = logits.rows();
  if (logits.cols() != b) throw std::invalid_argument("sinkhorn_normalize: logits not square");
  Tensor p(b, b);
  for (std::size_t i = 0; i < p.data.size(); ++i)
    p.data[i] = std::exp(logits.data[i] / temperature);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t r = 0; r < b; ++r) {
      double z = 0.0;
      for (std::size_t c = 0; c < b; ++c) z += p.at(r, c);
      for (std::size_t c = 0; c < b; ++c) p.at(r, c) /= z;
    }
    for (std::size_t c = 0; c < b; ++c) {
      double z = 0.0;
      for (std::size_t r = 0; r < b; ++r) z += p.at(r, c);
      for (std::size_t r = 0; r < b; ++r) p.at(r, c) /= z;
    }
  }
  if (!p.all_finite()) throw std::runtime_error("sinkhorn_normalize: normalization diverged");
  return p;
}

std::vector<std::size_t> sinkhorn_partners(const Tensor& normalized) {
  const std::size_t b = normalized.rows();
  std::vector<std::size_t> partner(b, 0);
  std::vector<bool> taken(b, false);
  for (std::size_t r = 0; r < b; ++r) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t c = 0; c < b; ++c) {
      if (taken[c]) continue;
      if (normalized.at(r, c) > best) { best = normalized.at(r, c); arg = c; }
    }
    partner[r] = arg;
    taken[arg] = true;
  }
  return partner;
}

AttentionMask sinkhorn_block_mask(std::size_t n, const SinkhornSpec& spec) {
  if (spec.block_size < 1) throw std::invalid_argument("sinkhorn: block size must be >= 1");
  const std::size_t n_blocks = (n + spec.block_size - 1) / spec.block_size;
  if (spec.sort_logits.rows() != n_blocks || spec.sort_logits.cols() != n_blocks)
    throw std::invalid_argument("sinkhorn: sort_logits must be B x B for B = ceil(n/b_s)");
  const Tensor p = sinkhorn_normalize(spec.sort_logits, spec.iters, spec.temperature);
  const std::vector<std::size_t> partner = sinkhorn_partners(p);

  auto block_keys = [&](std::size_t b) {
    std::vector<std::int32_t> keys;
    const std::size_t lo = b * spec.block_size;
    const std::size_t hi = std::min(n, lo + spec.block_size);
    for (std::size_t k = lo; k < hi; ++k) keys.push_back(static_cast<std::int32_t>(k));
    return keys;
  };

  AttentionMask mask = AttentionMask::empty(n, n);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    std::vector<std::int32_t> keys = block_keys(b);
    if (partner[b] != b) {
      std::vector<std::int32_t> merged;
      std::vector<std::int32_t> pk = block_keys(partner[b]);
      std::set_union(keys.begin(), keys.end(), pk.begin(), pk.end(), std::back_inserter(merged));
      keys = std::move(merged);
    }
    const std::size_t lo = b * spec.block_size;
    const std::size_t hi = std::min(n, lo + spec.block_size);
    for (std::size_t q = lo; q < hi; ++q) mask.rows[q] = keys;
  }
  return mask;
}

Tensor sinkhorn_attention(const AttentionInputs& in, const SinkhornSpec& spec,
                          std::size_t* cells) {
  in.validate();
  if (in.query_count() != in.key_count())
    throw std::invalid_argument("sinkhorn_attention: requires self-attention (m == n)");
  const AttentionMask mask = sinkhorn_block_mask(in.key_count(), spec);
  return masked_attention_forward(in.q, in.k, in.v, mask,
                                  1.0 / std::sqrt(static_cast<double>(in.q.cols())), cells);
}

Tensor hepos_attention(const Tensor& q_dec, const Tensor& k, const Tensor& v,
                       const HeposSpec& spec, std::size_t* cells) {
  const std::size_t m = q_dec.rows(), n = k.rows();
  if (spec.heads < 1) throw std::invalid_argument("hepos_attention: needs >= 1 head");
  if (q_dec.cols() % spec.heads != 0 || v.cols() % spec.heads != 0)
    throw std::invalid_argument("hepos_attention: head count must divide d_k and d_v");
  if (q_dec.cols() != k.cols())
    throw std::invalid_argument("hepos_attention: query/key dimension mismatch");
  const std::size_t dk = q_dec.cols() / spec.heads;
  const std::size_t dv = v.cols() / spec.heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor out(m, v.cols(), 0.0);
  for (std::size_t h = 0; h < spec.heads; ++h) {
    const AttentionMask mask = hepos_mask(m, n, h, spec.stride);
    Tensor qh = slice_cols_of(q_dec, h * dk, (h + 1) * dk);
    Tensor kh = slice_cols_of(k, h * dk, (h + 1) * dk);
    Tensor vh = slice_cols_of(v, h * dv, (h + 1) * dv);
    Tensor oh = masked_attention_forward(qh, kh, vh, mask, s, cells);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < dv; ++c) out.at(r, h * dv + c) = oh.at(r, c);
  }
  return out;
}

}  // namespace longattn
