#pragma once

// Galerkin block of a single hop delta for a constant field, in closed form:
// fl_{gamma,gamma'}(x, x) = x^T B delta, so the block entry is a product of
// sinc factors.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double sinc(double t) { return std::abs(t) < 1e-8 ? 1.0 - t * t / 6.0 : std::sin(t) / t; }

inline Eigen::MatrixXcd hop_block(const Eigen::MatrixXd& field, double b, const std::vector<int>& delta, int cutoff,
                                  std::complex<double> coeff) {
  const int d = static_cast<int>(delta.size());
  std::vector<double> v(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) v[i] += b * field(i, k) * delta[k];
  const int side = 2 * cutoff + 1;
  int m = 1;
  for (int i = 0; i < d; ++i) m *= side;
  auto mode = [&](int idx, int axis) {
    for (int j = d - 1; j > axis; --j) idx /= side;
    return idx % side - cutoff;
  };
  Eigen::MatrixXcd out(m, m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      double prod = 1.0;
      for (int j = 0; j < d; ++j) {
        prod *= sinc((v[j] + 2.0 * std::numbers::pi * (mode(c, j) - mode(r, j))) / 2.0);
      }
      out(r, c) = coeff * prod;
    }
  }
  return out;
}

}  // namespace oracle
