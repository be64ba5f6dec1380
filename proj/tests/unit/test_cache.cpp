#include <cstring>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "hofmat/cache.hpp"

using namespace hofmat;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_bits(cplx a, cplx b) { return same_bits(a.real(), b.real()) && same_bits(a.imag(), b.imag()); }

}  // namespace

TEST_SUITE("cache") {
  TEST_CASE("round trip is bit exact") {
    TruncationParams p;
    p.lattice_radius = 1;
    p.band_cut = 1;
    p.fourier_cutoff = 1;
    p.space_quad = 6;
    const GeneralizedMatrix h = assemble(gaussian_xi(2, 1.0, 24), MagneticField::unit_2d(), 0.37, p);
    const auto path = std::filesystem::temp_directory_path() / cache_key(h.symbol_id, h.field_hash, h.b, p);
    write_cache(h, path);
    const GeneralizedMatrix r = read_cache(path);
    CHECK(same_bits(r.b, h.b));
    CHECK(r.dim == h.dim);
    CHECK(r.symbol_id == h.symbol_id);
    CHECK(r.field_hash == h.field_hash);
    CHECK(r.hermitian == h.hermitian);
    CHECK(r.params.band_cut == p.band_cut);
    REQUIRE(r.entries.size() == h.entries.size());
    bool exact = true;
    for (std::size_t n = 0; n < h.entries.size(); ++n) {
      const BlockEntry& a = h.entries[n];
      const BlockEntry& b = r.entries[n];
      exact = exact && a.row == b.row && a.col == b.col && same_bits(a.phase, b.phase);
      for (Eigen::Index k = 0; k < a.block.size(); ++k) exact = exact && same_bits(a.block(k), b.block(k));
    }
    CHECK(exact);

    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    CHECK_THROWS(read_cache(path));
    {
      std::ofstream os(path, std::ios::binary | std::ios::trunc);
      os << "NOTACACHE";
    }
    CHECK_THROWS(read_cache(path));
    std::filesystem::remove(path);
  }

  TEST_CASE("cache key depends on b") {
    TruncationParams p;
    CHECK(cache_key("g", 1, 0.5, p) != cache_key("g", 1, 0.25, p));
    CHECK(cache_key("g", 1, 0.5, p) == cache_key("g", 1, 0.5, p));
  }
}
