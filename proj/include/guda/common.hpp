/* Copyright 2026 The GUDA Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace guda {

using Vec = std::vector<double>;

/// Raised when a precondition on an argument is violated.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on NaN/Inf inputs or degenerate numerics (zero norms etc).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

// ---------------------------------------------------------------------------
// Seeds. Every random stream in the project is derived from a parent seed and
// a small tuple of integers/tags, so results never depend on call order.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {
inline std::uint64_t seed_part(std::string_view tag) { return fnv1a(tag); }
inline std::uint64_t seed_part(const char* tag) { return fnv1a(tag); }
template <std::integral I>
std::uint64_t seed_part(I v) {
  return static_cast<std::uint64_t>(v);
}
}  // namespace detail

/// Child seed of `parent` for a path of integer ids and string tags.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t parent, Parts&&... parts) {
  std::uint64_t h = parent;
  ((h = splitmix64(h ^ splitmix64(detail::seed_part(parts) + 0x632be59bd9b4e019ULL))), ...);
  return h;
}

using Rng = std::mt19937_64;

/// Standard normal draws via Box-Muller so the stream is identical across
/// standard library implementations.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  Vec vector(std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = (*this)();
    return v;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(rng_() % span);
  }

  Rng& engine() { return rng_; }

 private:
  Rng rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Small dense helpers.

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// An optional conditioning vector; empty span means "no condition".
using CondView = std::span<const double>;

/// Anything that predicts epsilon from (x_t, t, condition): trained networks
/// and the closed-form empirical denoiser both satisfy this.
template <typename M>
concept EpsModel = requires(const M& m, std::span<const double> x, int t, CondView c) {
  { m.predict(x, t, c) } -> std::convertible_to<Vec>;
  { m.dim() } -> std::convertible_to<int>;
};

}  // namespace guda
