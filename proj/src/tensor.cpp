#include "longattn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace longattn {

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar_value(double v) {
  Tensor t;
  t.shape = {1};
  t.data = {v};
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Tensor t;
  t.shape = {rows.size(), rows.begin()->size()};
  t.data.reserve(rows.size() * rows.begin()->size());
  for (const auto& row : rows) {
    if (row.size() != rows.begin()->size())
      throw std::invalid_argument("from_rows: ragged initializer");
    t.data.insert(t.data.end(), row.begin(), row.end());
  }
  return t;
}

Tensor Tensor::randn(std::size_t r, std::size_t c, Rng& rng, double stddev) {
  Tensor t(r, c);
  for (auto& v : t.data) v = rng.gaussian() * stddev;
  return t;
}

double Tensor::scalar() const {
  if (!is_scalar()) throw std::invalid_argument("scalar(): tensor is not a scalar");
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::reset_grad() {
  if (!grad) grad.emplace(data.size(), 0.0);
  else std::fill(grad->begin(), grad->end(), 0.0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree");
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  Tensor out(p, r, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < r; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (auto& v : out.data) v *= c;
  return out;
}

Tensor softmax_masked(const Tensor& scores, const AttentionMask& mask) {
  if (scores.rows() != mask.n_queries || scores.cols() != mask.n_keys)
    throw std::invalid_argument("softmax_masked: score/mask shape mismatch");
  Tensor out(scores.rows(), scores.cols(), 0.0);
  for (std::size_t q = 0; q < mask.n_queries; ++q) {
    const auto& row = mask.rows[q];
    if (row.empty())
      throw empty_row_error("softmax_masked: row " + std::to_string(q) +
                            " has an empty attended set");
    // max-subtraction over the attended set only
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int32_t k : row) mx = std::max(mx, scores.at(q, static_cast<std::size_t>(k)));
    double z = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto k = static_cast<std::size_t>(row[j]);
      const double w = mask.soft() ? mask.weights[q][j] : 1.0;
      const double e = w * std::exp(scores.at(q, k) - mx);
      out.at(q, k) = e;
      z += e;
    }
    if (!(z > 0.0) || !std::isfinite(z))
      throw empty_row_error("softmax_masked: row " + std::to_string(q) +
                            " has no positive attention weight");
    for (std::int32_t k : row) out.at(q, static_cast<std::size_t>(k)) /= z;
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double mx = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
  return mx;
}

}  // namespace longattn
