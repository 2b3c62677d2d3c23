// Dense 64-bit tensor core: row-major matrices, matmul, masked row softmax.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "longattn/mask.hpp"

namespace longattn {

// Deterministic RNG used everywhere randomness is needed. All draws go
// through one engine so that a fixed seed fixes every downstream value.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {
    // 53-bit mantissa in [0,1)
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; no cached second value so the draw count stays predictable.
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  std::uint64_t next() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;  // same length as data when present

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : shape{r, c}, data(r * c, fill) {}

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c, 0.0); }
  static Tensor filled(std::size_t r, std::size_t c, double v) { return Tensor(r, c, v); }
  static Tensor identity(std::size_t n);
  static Tensor scalar_value(double v);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor randn(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0);

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
  bool is_scalar() const { return size() == 1; }
  double scalar() const;

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  // Allocates (or zeroes) the gradient buffer.
  void reset_grad();
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);

// Row softmax restricted to the mask's attended sets. Hard masks yield a
// probability distribution supported exactly on each row's attended set;
// soft weights multiply the exponentials before renormalization. A row whose
// effective support is empty throws empty_row_error.
Tensor softmax_masked(const Tensor& scores, const AttentionMask& mask);

double max_abs_diff(const Tensor& a, const Tensor& b);

struct empty_row_error : std::runtime_error {
  explicit empty_row_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace longattn
