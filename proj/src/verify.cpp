#include "longattn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "longattn/autodiff.hpp"
#include "longattn/kernels.hpp"
#include "longattn/mask.hpp"
#include "longattn/tensor.hpp"

namespace longattn {

namespace {

std::uint64_t mix(std::uint64_t seed, std::size_t n, std::size_t d) {
  return seed * 1000003ULL + n * 31ULL + d;
}

void flip_mask_bit(AttentionMask& mask) {
  auto& row = mask.rows[0];
  const std::int32_t key = static_cast<std::int32_t>(mask.n_keys / 2);
  auto it = std::lower_bound(row.begin(), row.end(), key);
  const auto pos = it - row.begin();
  if (it != row.end() && *it == key) {
    row.erase(it);
    if (mask.soft()) mask.weights[0].erase(mask.weights[0].begin() + pos);
  } else {
    row.insert(it, key);
    if (mask.soft()) mask.weights[0].insert(mask.weights[0].begin() + pos, 1.0);
  }
}

struct Instance {
  Tensor q, k, v;
};

Instance make_instance(std::size_t m, std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Instance inst;
  inst.q = Tensor::randn(m, d, rng);
  inst.k = Tensor::randn(n, d, rng);
  inst.v = Tensor::randn(n, d, rng);
  return inst;
}

std::size_t hepos_heads_for(std::size_t d) { return d % 4 == 0 && d >= 8 ? 4 : 2; }

}  // namespace

const char* kernel_kind_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::full: return "full";
    case KernelKind::window: return "window";
    case KernelKind::linformer: return "linformer";
    case KernelKind::linformer_encdec: return "linformer-encdec";
    case KernelKind::lsh: return "lsh";
    case KernelKind::sinkhorn: return "sinkhorn";
    case KernelKind::hepos: return "hepos";
  }
  return "?";
}

double oracle_equivalence_error(KernelKind kind, std::size_t n, std::size_t d,
                                std::uint64_t seed, bool tampered_mask) {
  const std::uint64_t s = mix(seed, n, d);
  switch (kind) {
    case KernelKind::full: {
      Instance inst = make_instance(n, n, d, s);
      AttentionInputs in{inst.q, inst.k, inst.v};
      AttentionMask mask = AttentionMask::full(n, n);
      if (tampered_mask) flip_mask_bit(mask);
      return max_abs_diff(full_attention(in), masked_attention_reference(in, mask));
    }
    case KernelKind::window: {
      Instance inst = make_instance(n, n, d, s);
      AttentionInputs in{inst.q, inst.k, inst.v};
      const std::size_t w = 4;
      AttentionMask mask = window_mask(n, w);
      if (tampered_mask) flip_mask_bit(mask);
      return max_abs_diff(windowed_attention(in, w), masked_attention_reference(in, mask));
    }
    case KernelKind::linformer:
    case KernelKind::linformer_encdec: {
      const std::size_t m = kind == KernelKind::linformer ? n : std::max<std::size_t>(1, n / 2);
      Instance inst = make_instance(m, n, d, s);
      Rng rng(s ^ 0xabcdef);
      LowRankSpec spec;
      spec.k = std::max<std::size_t>(1, n / 2);
      const double p = 1.0 / std::sqrt(static_cast<double>(n));
      spec.key_proj = Tensor::randn(spec.k, n, rng, p);
      spec.value_proj = Tensor::randn(spec.k, n, rng, p);
      Tensor out = kind == KernelKind::linformer
                       ? linformer_attention({inst.q, inst.k, inst.v}, spec)
                       : linformer_encdec_attention(inst.q, inst.k, inst.v, spec);
      // the oracle runs on the projected key/value sequences
      AttentionInputs low{inst.q, matmul(spec.key_proj, inst.k),
                          matmul(spec.value_proj, inst.v)};
      AttentionMask mask = AttentionMask::full(m, spec.k);
      if (tampered_mask) flip_mask_bit(mask);
      return max_abs_diff(out, masked_attention_reference(low, mask));
    }
    case KernelKind::lsh: {
      Instance inst = make_instance(n, n, d, s);
      AttentionInputs in{inst.q, inst.k, inst.v};
      LshSpec spec;
      spec.rounds = 2;
      spec.bucket_size = std::max<std::size_t>(2, n / 2);
      spec.n_buckets = 4;
      spec.seed = s;
      AttentionMask mask = lsh_union_mask(inst.k, spec);
      if (tampered_mask) flip_mask_bit(mask);
      return max_abs_diff(lsh_attention(in, spec, LshMode::mask_union),
                          masked_attention_reference(in, mask));
    }
    case KernelKind::sinkhorn: {
      Instance inst = make_instance(n, n, d, s);
      AttentionInputs in{inst.q, inst.k, inst.v};
      SinkhornSpec spec;
      spec.block_size = std::max<std::size_t>(1, n / 4);
      const std::size_t blocks = (n + spec.block_size - 1) / spec.block_size;
      Rng rng(s ^ 0x1234567);
      spec.sort_logits = Tensor::randn(blocks, blocks, rng);
      AttentionMask mask = sinkhorn_block_mask(n, spec);
      if (tampered_mask) flip_mask_bit(mask);
      return max_abs_diff(sinkhorn_attention(in, spec), masked_attention_reference(in, mask));
    }
    case KernelKind::hepos: {
      const std::size_t m = std::max<std::size_t>(1, n / 2);
      Instance inst = make_instance(m, n, d, s);
      HeposSpec spec;
      spec.heads = hepos_heads_for(d);
      spec.stride = 1 + seed % std::min<std::size_t>(3, n);
      Tensor out = hepos_attention(inst.q, inst.k, inst.v, spec);
      // oracle: per-head reference on the head's slices, concatenated
      const std::size_t dh = d / spec.heads;
      Tensor expect(m, d, 0.0);
      double err = 0.0;
      for (std::size_t h = 0; h < spec.heads; ++h) {
        Tensor qh(m, dh), kh(n, dh), vh(n, dh);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < dh; ++c) qh.at(r, c) = inst.q.at(r, h * dh + c);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < dh; ++c) {
            kh.at(r, c) = inst.k.at(r, h * dh + c);
            vh.at(r, c) = inst.v.at(r, h * dh + c);
          }
        AttentionMask mask = hepos_mask(m, n, h, spec.stride);
        if (tampered_mask && h == 0) flip_mask_bit(mask);
        Tensor oh = masked_attention_reference({qh, kh, vh}, mask);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < dh; ++c)
            err = std::max(err, std::abs(oh.at(r, c) - out.at(r, h * dh + c)));
      }
      return err;
    }
  }
  return 0.0;
}

namespace {

// Taped composition of each kernel; loss = sum(out * coeff).
Var taped_kernel_loss(Tape& tape, KernelKind kind, Var q, Var k, Var v, std::size_t n,
                      std::size_t d, const Tensor& coeff, std::uint64_t seed) {
  const double scale_full = 1.0 / std::sqrt(static_cast<double>(d));
  Var out;
  switch (kind) {
    case KernelKind::full: {
      out = masked_attention(tape, q, k, v, AttentionMask::full(n, n), scale_full);
      break;
    }
    case KernelKind::window: {
      out = masked_attention(tape, q, k, v, window_mask(n, 4), scale_full);
      break;
    }
    case KernelKind::linformer:
    case KernelKind::linformer_encdec: {
      Rng rng(seed ^ 0xabcdef);
      const std::size_t klow = std::max<std::size_t>(1, n / 2);
      const double p = 1.0 / std::sqrt(static_cast<double>(n));
      Var e = tape.input(Tensor::randn(klow, n, rng, p));
      Var f = tape.input(Tensor::randn(klow, n, rng, p));
      Var k_low = tape.matmul(e, k);
      Var v_low = tape.matmul(f, v);
      const std::size_t m = tape.value(q).rows();
      out = masked_attention(tape, q, k_low, v_low, AttentionMask::full(m, klow), scale_full);
      break;
    }
    case KernelKind::hepos: {
      const std::size_t heads = hepos_heads_for(d);
      const std::size_t dh = d / heads;
      const std::size_t stride = 1 + seed % std::min<std::size_t>(3, n);
      const std::size_t m = tape.value(q).rows();
      const double s = 1.0 / std::sqrt(static_cast<double>(dh));
      std::vector<Var> outs;
      for (std::size_t h = 0; h < heads; ++h) {
        Var qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        outs.push_back(masked_attention(tape, qh, kh, vh, hepos_mask(m, n, h, stride), s));
      }
      out = tape.concat_cols(outs);
      break;
    }
    default:
      throw std::invalid_argument("gradcheck: unsupported kernel kind");
  }
  return tape.sum(tape.mul(out, tape.input(coeff)));
}

}  // namespace

double kernel_gradcheck_error(KernelKind kind, std::size_t n, std::size_t d,
                              std::uint64_t seed, double step) {
  const std::uint64_t s = mix(seed, n, d);
  const std::size_t m =
      (kind == KernelKind::linformer_encdec || kind == KernelKind::hepos)
          ? std::max<std::size_t>(1, n / 2)
          : n;
  Instance inst = make_instance(m, n, d, s);
  Rng rng(s ^ 0xfeed);
  const Tensor coeff = Tensor::randn(m, d, rng);

  Tensor q = inst.q, k = inst.k, v = inst.v;
  Tape tape;
  Var vq = tape.leaf(q), vk = tape.leaf(k), vv = tape.leaf(v);
  tape.backward(taped_kernel_loss(tape, kind, vq, vk, vv, n, d, coeff, s));

  auto loss_with = [&](const Tensor& pq, const Tensor& pk, const Tensor& pv) {
    Tape t;
    Var a = t.input(pq), b = t.input(pk), c = t.input(pv);
    return t.value(taped_kernel_loss(t, kind, a, b, c, n, d, coeff, s)).scalar();
  };

  Tensor gq = q; gq.data = *q.grad;
  Tensor gk = k; gk.data = *k.grad;
  Tensor gv = v; gv.data = *v.grad;
  double err = 0.0;
  err = std::max(err, finite_difference_check(
                          [&](const Tensor& x) { return loss_with(x, inst.k, inst.v); }, inst.q,
                          gq, step));
  err = std::max(err, finite_difference_check(
                          [&](const Tensor& x) { return loss_with(inst.q, x, inst.v); }, inst.k,
                          gk, step));
  err = std::max(err, finite_difference_check(
                          [&](const Tensor& x) { return loss_with(inst.q, inst.k, x); }, inst.v,
                          gv, step));
  return err;
}

namespace {

// Generic scaffold: analytic grad of `build`'s scalar loss at x0 vs central
// finite differences of the same computation.
double check_primitive(const Tensor& x0, double step,
                       const std::function<Var(Tape&, Var)>& build) {
  Tensor x = x0;
  Tape tape;
  Var vx = tape.leaf(x);
  tape.backward(build(tape, vx));
  Tensor analytic = x0;
  analytic.data = *x.grad;
  auto f = [&](const Tensor& probe) {
    Tape t;
    return t.value(build(t, t.input(probe))).scalar();
  };
  return finite_difference_check(f, x0, analytic, step);
}

}  // namespace

double primitive_gradcheck_error(std::uint64_t seed, double step) {
  Rng rng(seed);
  const std::size_t r = 5, c = 6;
  const Tensor x = Tensor::randn(r, c, rng);
  const Tensor b = Tensor::randn(c, 4, rng);
  const Tensor coeff_rc = Tensor::randn(r, c, rng);
  const Tensor coeff_r4 = Tensor::randn(r, 4, rng);
  const Tensor coeff_cr = Tensor::randn(c, r, rng);

  AttentionMask mask = AttentionMask::empty(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    // ragged but never empty rows
    for (std::size_t j = i % 2; j < c; j += 1 + i % 3)
      mask.rows[i].push_back(static_cast<std::int32_t>(j));
  }
  const AttentionMask soft = adaptive_span_mask(r, 1, 0, 2);
  const Tensor xs = Tensor::randn(r, r, rng);
  const Tensor coeff_rr = Tensor::randn(r, r, rng);
  const Tensor kmat = Tensor::randn(c, c, rng);  // n_keys rows, d = c
  const Tensor vmat = Tensor::randn(c, 3, rng);
  const Tensor coeff_r3 = Tensor::randn(r, 3, rng);

  double err = 0.0;
  auto track = [&](double e) { err = std::max(err, e); };

  track(check_primitive(x, step, [&](Tape& t, Var v) {
    return t.sum(t.mul(t.matmul(v, t.input(b)), t.input(coeff_r4)));
  }));
  track(check_primitive(x, step, [&](Tape& t, Var v) {
    return t.sum(t.mul(t.add(v, t.input(coeff_rc)), t.input(coeff_rc)));
  }));
  track(check_primitive(x, step, [&](Tape& t, Var v) {
    return t.sum(t.mul(t.transpose(t.scale(v, 1.7)), t.input(coeff_cr)));
  }));
  track(check_primitive(x, step, [&](Tape& t, Var v) {
    return t.sum(t.mul(t.softmax_masked(v, mask), t.input(coeff_rc)));
  }));
  track(check_primitive(xs, step, [&](Tape& t, Var v) {
    return t.sum(t.mul(t.softmax_masked(v, soft), t.input(coeff_rr)));
  }));
  track(check_primitive(x, step, [&](Tape& t, Var v) {
    Var scores = t.masked_scores(v, t.input(kmat), mask, 0.7);
    return t.sum(t.mul(scores, t.input(coeff_rc)));
  }));
  track(check_primitive(x, step, [&](Tape& t, Var v) {
    Var probs = t.softmax_masked(t.masked_scores(v, t.input(kmat), mask, 0.7), mask);
    Var out = t.masked_weighted_sum(probs, t.input(vmat), mask);
    return t.sum(t.mul(out, t.input(coeff_r3)));
  }));
  const Tensor coeff_4c = Tensor::randn(4, c, rng);
  track(check_primitive(x, step, [&](Tape& t, Var v) {
    return t.sum(t.mul(t.gather_rows(v, {4, 0, 2, 2}), t.input(coeff_4c)));
  }));
  track(check_primitive(x, step, [&](Tape& t, Var v) {
    Var joined = t.concat_cols({t.slice_cols(v, 0, c / 2), t.slice_cols(v, c / 2, c)});
    return t.sum(t.mul(joined, t.input(coeff_rc)));
  }));
  track(check_primitive(x, step, [&](Tape& t, Var v) {
    return t.cross_entropy(v, {1, 0, 3, 2, 5});
  }));
  return err;
}

HeposStructure check_hepos_structure(std::size_t max_n) {
  HeposStructure result;
  for (std::size_t n = 1; n <= max_n && result.all_ok(); ++n) {
    for (std::size_t stride = 1; stride <= n; ++stride) {
      const std::size_t lo = n / stride, hi = (n + stride - 1) / stride;
      std::vector<int> owner(n, -1);
      std::size_t total = 0;
      bool ok = true;
      for (std::size_t h = 0; h < stride; ++h) {
        const AttentionMask mask = hepos_mask(1, n, h, stride);
        const std::size_t count = mask.rows[0].size();
        if (count != lo && count != hi) {
          result.row_counts_ok = false;
          ok = false;
        }
        total += count;
        for (std::int32_t k : mask.rows[0]) {
          if (owner[static_cast<std::size_t>(k)] != -1) {
            result.partition_ok = false;  // two heads claim the same key
            ok = false;
          }
          owner[static_cast<std::size_t>(k)] = static_cast<int>(h);
        }
      }
      if (total != n) result.partition_ok = false, ok = false;
      for (std::size_t k = 0; k < n; ++k)
        if (owner[k] == -1) {
          result.coverage_ok = false;
          ok = false;
        }
      if (!ok) {
        result.detail = "n=" + std::to_string(n) + " s_h=" + std::to_string(stride);
        return result;
      }
    }
  }
  return result;
}

}  // namespace longattn
