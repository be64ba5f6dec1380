#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace hofmat {

/// The cube {-radius..radius}^dim of integer points, enumerated
/// lexicographically with the first coordinate slowest. Used both for
/// lattice sites and for Fourier modes.
class IndexCube {
 public:
  IndexCube() = default;
  IndexCube(int dim, int radius) : dim_(dim), radius_(radius) {
    if (dim < 1 || radius < 0) throw std::invalid_argument("IndexCube: bad dimension or radius");
    const auto side = static_cast<std::size_t>(2 * radius + 1);
    std::size_t n = 1;
    for (int j = 0; j < dim; ++j) n *= side;
    coords_.resize(n * static_cast<std::size_t>(dim));
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t rest = i;
      for (int j = dim - 1; j >= 0; --j) {
        coords_[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(j)] =
            static_cast<int>(rest % side) - radius;
        rest /= side;
      }
    }
  }

  int dim() const { return dim_; }
  int radius() const { return radius_; }
  std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / static_cast<std::size_t>(dim_); }

  std::span<const int> operator[](std::size_t i) const {
    return {coords_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  std::optional<std::size_t> index_of(std::span<const int> p) const {
    if (static_cast<int>(p.size()) != dim_) return std::nullopt;
    const auto side = static_cast<std::size_t>(2 * radius_ + 1);
    std::size_t idx = 0;
    for (int v : p) {
      if (v < -radius_ || v > radius_) return std::nullopt;
      idx = idx * side + static_cast<std::size_t>(v + radius_);
    }
    return idx;
  }

 private:
  int dim_ = 0;
  int radius_ = 0;
  std::vector<int> coords_;
};

}  // namespace hofmat
