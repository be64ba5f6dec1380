#pragma once

// q x q Bloch reduction of the Harper model at flux theta = 2 pi p / q per
// plaquette, Landau gauge. Written independently of the library's lattice
// and phase code.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

struct Band {
  double lo;
  double hi;
};

inline std::vector<Band> harper_bands(int p, int q, int samples = 96) {
  const double theta = 2.0 * std::numbers::pi * p / q;
  std::vector<Band> bands(static_cast<std::size_t>(q), Band{1e300, -1e300});
  for (int a = 0; a < samples; ++a) {
    for (int c = 0; c < samples; ++c) {
      const double k1 = 2.0 * std::numbers::pi * a / samples;
      const double k2 = 2.0 * std::numbers::pi * c / samples;
      Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(q, q);
      for (int j = 0; j < q; ++j) {
        h(j, j) += 2.0 * std::cos(k2 + theta * j);
        const int next = (j + 1) % q;
        const std::complex<double> hop = next == 0 ? std::polar(1.0, k1) : std::complex<double>(1.0, 0.0);
        h(j, next) += hop;
        h(next, j) += std::conj(hop);
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
      for (int j = 0; j < q; ++j) {
        bands[j].lo = std::min(bands[j].lo, es.eigenvalues()(j));
        bands[j].hi = std::max(bands[j].hi, es.eigenvalues()(j));
      }
    }
  }
  return bands;
}

// Open gaps between the merged bands.
inline std::vector<Band> band_gaps(const std::vector<Band>& bands, double min_width) {
  std::vector<Band> sorted = bands;
  std::sort(sorted.begin(), sorted.end(), [](const Band& x, const Band& y) { return x.lo < y.lo; });
  std::vector<Band> gaps;
  double reach = sorted.front().hi;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].lo - reach >= min_width) gaps.push_back({reach, sorted[i].lo});
    reach = std::max(reach, sorted[i].hi);
  }
  return gaps;
}

}  // namespace oracle
