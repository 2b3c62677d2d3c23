#include "longattn/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace longattn {

int Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::invalid_argument("tape: variable does not belong to this record");
  return v.id;
}

Var Tape::push(Tensor value, std::function<void(Tape&, Node&)> backward_fn) {
  Node node;
  node.grad = value;
  std::fill(node.grad.data.begin(), node.grad.data.end(), 0.0);
  node.value = std::move(value);
  node.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor& param) {
  Var v = push(param, nullptr);
  nodes_[v.id].leaf = &param;
  return v;
}

Var Tape::input(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::matmul(Var a, Var b) {
  const int ia = check(a), ib = check(b);
  Tensor out = longattn::matmul(nodes_[ia].value, nodes_[ib].value);
  return push(std::move(out), [ia, ib](Tape& t, Node& self) {
    const Tensor& A = t.nodes_[ia].value;
    const Tensor& B = t.nodes_[ib].value;
    Tensor& dA = t.nodes_[ia].grad;
    Tensor& dB = t.nodes_[ib].grad;
    const std::size_t p = A.rows(), q = A.cols(), r = B.cols();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < r; ++j) {
        const double g = self.grad.at(i, j);
        if (g == 0.0) continue;
        for (std::size_t k = 0; k < q; ++k) {
          dA.at(i, k) += g * B.at(k, j);
          dB.at(k, j) += g * A.at(i, k);
        }
      }
  });
}

Var Tape::transpose(Var a) {
  const int ia = check(a);
  return push(longattn::transpose(nodes_[ia].value), [ia](Tape& t, Node& self) {
    Tensor& dA = t.nodes_[ia].grad;
    for (std::size_t i = 0; i < self.grad.rows(); ++i)
      for (std::size_t j = 0; j < self.grad.cols(); ++j)
        dA.at(j, i) += self.grad.at(i, j);
  });
}

Var Tape::add(Var a, Var b) {
  const int ia = check(a), ib = check(b);
  return push(longattn::add(nodes_[ia].value, nodes_[ib].value), [ia, ib](Tape& t, Node& self) {
    Tensor& dA = t.nodes_[ia].grad;
    Tensor& dB = t.nodes_[ib].grad;
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
      dA.data[i] += self.grad.data[i];
      dB.data[i] += self.grad.data[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const int ia = check(a), ib = check(b);
  return push(longattn::mul(nodes_[ia].value, nodes_[ib].value), [ia, ib](Tape& t, Node& self) {
    const Tensor& A = t.nodes_[ia].value;
    const Tensor& B = t.nodes_[ib].value;
    Tensor& dA = t.nodes_[ia].grad;
    Tensor& dB = t.nodes_[ib].grad;
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
      dA.data[i] += self.grad.data[i] * B.data[i];
      dB.data[i] += self.grad.data[i] * A.data[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  const int ia = check(a);
  return push(longattn::scale(nodes_[ia].value, c), [ia, c](Tape& t, Node& self) {
    Tensor& dA = t.nodes_[ia].grad;
    for (std::size_t i = 0; i < self.grad.data.size(); ++i)
      dA.data[i] += c * self.grad.data[i];
  });
}

Var Tape::masked_scores(Var q, Var k, const AttentionMask& mask, double c) {
  const int iq = check(q), ik = check(k);
  const Tensor& Q = nodes_[iq].value;
  const Tensor& K = nodes_[ik].value;
  if (Q.rows() != mask.n_queries || K.rows() != mask.n_keys || Q.cols() != K.cols())
    throw std::invalid_argument("masked_scores: shape/mask mismatch");
  const std::size_t d = Q.cols();
  Tensor out(mask.n_queries, mask.n_keys, 0.0);
  for (std::size_t i = 0; i < mask.n_queries; ++i) {
    for (std::int32_t kj : mask.rows[i]) {
      const auto j = static_cast<std::size_t>(kj);
      double dot = 0.0;
      for (std::size_t x = 0; x < d; ++x) dot += Q.at(i, x) * K.at(j, x);
      out.at(i, j) = c * dot;
    }
  }
  score_cells_ += mask.total_cells();
  AttentionMask m = mask;
  return push(std::move(out), [iq, ik, c, m = std::move(m)](Tape& t, Node& self) {
    const Tensor& Q = t.nodes_[iq].value;
    const Tensor& K = t.nodes_[ik].value;
    Tensor& dQ = t.nodes_[iq].grad;
    Tensor& dK = t.nodes_[ik].grad;
    const std::size_t d = Q.cols();
    for (std::size_t i = 0; i < m.n_queries; ++i) {
      for (std::int32_t kj : m.rows[i]) {
        const auto j = static_cast<std::size_t>(kj);
        const double g = c * self.grad.at(i, j);
        if (g == 0.0) continue;
        for (std::size_t x = 0; x < d; ++x) {
          dQ.at(i, x) += g * K.at(j, x);
          dK.at(j, x) += g * Q.at(i, x);
        }
      }
    }
  });
}

Var Tape::softmax_masked(Var scores, const AttentionMask& mask) {
  const int is = check(scores);
  Tensor probs = longattn::softmax_masked(nodes_[is].value, mask);
  AttentionMask m = mask;
  return push(std::move(probs), [is, m = std::move(m)](Tape& t, Node& self) {
    const Tensor& P = self.value;
    Tensor& dS = t.nodes_[is].grad;
    for (std::size_t i = 0; i < m.n_queries; ++i) {
      double dot = 0.0;
      for (std::int32_t kj : m.rows[i]) {
        const auto j = static_cast<std::size_t>(kj);
        dot += self.grad.at(i, j) * P.at(i, j);
      }
      for (std::int32_t kj : m.rows[i]) {
        const auto j = static_cast<std::size_t>(kj);
        dS.at(i, j) += P.at(i, j) * (self.grad.at(i, j) - dot);
      }
    }
  });
}

Var Tape::masked_weighted_sum(Var probs, Var v, const AttentionMask& mask) {
  const int ip = check(probs), iv = check(v);
  const Tensor& P = nodes_[ip].value;
  const Tensor& V = nodes_[iv].value;
  if (P.rows() != mask.n_queries || P.cols() != mask.n_keys || V.rows() != mask.n_keys)
    throw std::invalid_argument("masked_weighted_sum: shape/mask mismatch");
  const std::size_t dv = V.cols();
  Tensor out(mask.n_queries, dv, 0.0);
  for (std::size_t i = 0; i < mask.n_queries; ++i) {
    for (std::int32_t kj : mask.rows[i]) {
      const auto j = static_cast<std::size_t>(kj);
      const double p = P.at(i, j);
      for (std::size_t x = 0; x < dv; ++x) out.at(i, x) += p * V.at(j, x);
    }
  }
  AttentionMask m = mask;
  return push(std::move(out), [ip, iv, m = std::move(m)](Tape& t, Node& self) {
    const Tensor& P = t.nodes_[ip].value;
    const Tensor& V = t.nodes_[iv].value;
    Tensor& dP = t.nodes_[ip].grad;
    Tensor& dV = t.nodes_[iv].grad;
    const std::size_t dv = V.cols();
    for (std::size_t i = 0; i < m.n_queries; ++i) {
      for (std::int32_t kj : m.rows[i]) {
        const auto j = static_cast<std::size_t>(kj);
        double acc = 0.0;
        for (std::size_t x = 0; x < dv; ++x) {
          acc += self.grad.at(i, x) * V.at(j, x);
          dV.at(j, x) += P.at(i, j) * self.grad.at(i, x);
        }
        dP.at(i, j) += acc;
      }
    }
  });
}

Var Tape::gather_rows(Var table, std::vector<int> ids) {
  const int it = check(table);
  const Tensor& T = nodes_[it].value;
  Tensor out(ids.size(), T.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= T.rows())
      throw std::invalid_argument("gather_rows: id out of range");
    for (std::size_t c = 0; c < T.cols(); ++c)
      out.at(r, c) = T.at(static_cast<std::size_t>(ids[r]), c);
  }
  return push(std::move(out), [it, ids = std::move(ids)](Tape& t, Node& self) {
    Tensor& dT = t.nodes_[it].grad;
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < dT.cols(); ++c)
        dT.at(static_cast<std::size_t>(ids[r]), c) += self.grad.at(r, c);
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  std::vector<int> ids;
  std::size_t total = 0;
  const std::size_t rows = nodes_[check(parts[0])].value.rows();
  for (Var p : parts) {
    const int i = check(p);
    if (nodes_[i].value.rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch");
    ids.push_back(i);
    total += nodes_[i].value.cols();
  }
  Tensor out(rows, total);
  std::size_t off = 0;
  for (int i : ids) {
    const Tensor& part = nodes_[i].value;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < part.cols(); ++c) out.at(r, off + c) = part.at(r, c);
    off += part.cols();
  }
  return push(std::move(out), [ids = std::move(ids)](Tape& t, Node& self) {
    std::size_t off = 0;
    for (int i : ids) {
      Tensor& dP = t.nodes_[i].grad;
      for (std::size_t r = 0; r < dP.rows(); ++r)
        for (std::size_t c = 0; c < dP.cols(); ++c) dP.at(r, c) += self.grad.at(r, off + c);
      off += dP.cols();
    }
  });
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  const int ia = check(a);
  const Tensor& A = nodes_[ia].value;
  if (c0 >= c1 || c1 > A.cols()) throw std::invalid_argument("slice_cols: bad range");
  Tensor out(A.rows(), c1 - c0);
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = A.at(r, c);
  return push(std::move(out), [ia, c0](Tape& t, Node& self) {
    Tensor& dA = t.nodes_[ia].grad;
    for (std::size_t r = 0; r < self.grad.rows(); ++r)
      for (std::size_t c = 0; c < self.grad.cols(); ++c)
        dA.at(r, c0 + c) += self.grad.at(r, c);
  });
}

Var Tape::sum(Var a) {
  const int ia = check(a);
  double total = 0.0;
  for (double v : nodes_[ia].value.data) total += v;
  return push(Tensor::scalar_value(total), [ia](Tape& t, Node& self) {
    Tensor& dA = t.nodes_[ia].grad;
    const double g = self.grad.data[0];
    for (auto& v : dA.data) v += g;
  });
}

Var Tape::cross_entropy(Var logits, std::vector<int> targets) {
  const int il = check(logits);
  const Tensor& L = nodes_[il].value;
  if (targets.size() != L.rows())
    throw std::invalid_argument("cross_entropy: target count mismatch");
  // row softmax with max subtraction, saved for the backward pass
  Tensor probs(L.rows(), L.cols());
  double nll = 0.0;
  for (std::size_t r = 0; r < L.rows(); ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= L.cols())
      throw std::invalid_argument("cross_entropy: target out of range");
    double mx = L.at(r, 0);
    for (std::size_t c = 1; c < L.cols(); ++c) mx = std::max(mx, L.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < L.cols(); ++c) {
      probs.at(r, c) = std::exp(L.at(r, c) - mx);
      z += probs.at(r, c);
    }
    for (std::size_t c = 0; c < L.cols(); ++c) probs.at(r, c) /= z;
    nll -= std::log(probs.at(r, static_cast<std::size_t>(targets[r])));
  }
  nll /= static_cast<double>(L.rows());
  if (!std::isfinite(nll)) throw std::runtime_error("cross_entropy: non-finite loss");
  Tensor saved = std::move(probs);
  return push(Tensor::scalar_value(nll),
              [il, targets = std::move(targets), saved = std::move(saved)](Tape& t, Node& self) {
                Tensor& dL = t.nodes_[il].grad;
                const double g = self.grad.data[0] / static_cast<double>(saved.rows());
                for (std::size_t r = 0; r < saved.rows(); ++r)
                  for (std::size_t c = 0; c < saved.cols(); ++c) {
                    const double onehot =
                        (c == static_cast<std::size_t>(targets[r])) ? 1.0 : 0.0;
                    dL.at(r, c) += g * (saved.at(r, c) - onehot);
                  }
              });
}

void Tape::backward(Var loss) {
  const int il = check(loss);
  if (consumed_) throw std::logic_error("tape: record already consumed by backward()");
  if (!nodes_[il].value.is_scalar())
    throw std::invalid_argument("backward: loss must be a scalar");
  consumed_ = true;

  std::unordered_set<Tensor*> leaves;
  for (auto& node : nodes_)
    if (node.leaf) leaves.insert(node.leaf);
  for (Tensor* leaf : leaves) leaf->reset_grad();

  nodes_[il].grad.data[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward_fn) node.backward_fn(*this, node);
    if (node.leaf) {
      auto& g = *node.leaf->grad;
      for (std::size_t x = 0; x < g.size(); ++x) g[x] += node.grad.data[x];
    }
  }
}

Var masked_attention(Tape& tape, Var q, Var k, Var v, const AttentionMask& mask, double scale) {
  Var scores = tape.masked_scores(q, k, mask, scale);
  Var probs = tape.softmax_masked(scores, mask);
  return tape.masked_weighted_sum(probs, v, mask);
}

double finite_difference_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               const Tensor& analytic, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be > 0");
  if (!x.same_shape(analytic))
    throw std::invalid_argument("finite_difference_check: gradient shape mismatch");
  Tensor probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.data.size(); ++i) {
    const double saved = probe.data[i];
    probe.data[i] = saved + step;
    const double fp = f(probe);
    probe.data[i] = saved - step;
    const double fm = f(probe);
    probe.data[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_difference_check: non-finite evaluation");
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic.data[i];
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace longattn
