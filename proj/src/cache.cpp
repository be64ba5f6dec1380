#include "hofmat/cache.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

#include "hofmat/util.hpp"

namespace hofmat {

namespace {

constexpr char kMagic[8] = {'H', 'O', 'F', 'M', 'A', 'T', 'G', 'M'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ofstream& os) : os_(os) {}
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os_.write(reinterpret_cast<const char*>(b), 8);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os_.write(reinterpret_cast<const char*>(b), 4);
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void c128(cplx v) {
    f64(v.real());
    f64(v.imag());
  }
  void raw(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }

 private:
  std::ofstream& os_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& is) : is_(is) {}
  void raw(char* p, std::size_t n) {
    is_.read(p, static_cast<std::streamsize>(n));
    if (!is_) throw std::runtime_error("cache: truncated file");
  }
  std::uint64_t u64() {
    unsigned char b[8];
    raw(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    raw(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  cplx c128() {
    const double re = f64();
    const double im = f64();
    return {re, im};
  }

 private:
  std::ifstream& is_;
};

}  // namespace

void write_cache(const GeneralizedMatrix& h, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cache: cannot open " + path.string());
  Writer w(os);
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.f64(h.b);
  w.i32(h.dim);
  w.i32(h.params.lattice_radius);
  w.i32(h.params.band_cut);
  w.i32(h.params.fourier_cutoff);
  w.f64(h.params.epsilon);
  w.i32(h.params.space_quad);
  w.u64(h.symbol_id.size());
  w.raw(h.symbol_id.data(), h.symbol_id.size());
  w.u64(h.field_hash);
  const char herm = h.hermitian ? 1 : 0;
  w.raw(&herm, 1);
  w.u64(h.entries.size());
  const auto m = static_cast<Eigen::Index>(h.block_size());
  for (const BlockEntry& e : h.entries) {
    if (e.block.rows() != m || e.block.cols() != m) throw std::invalid_argument("cache: block size mismatch");
    w.u64(e.row);
    w.u64(e.col);
    w.c128(e.phase);
    for (Eigen::Index c = 0; c < m; ++c) {
      for (Eigen::Index r = 0; r < m; ++r) w.c128(e.block(r, c));
    }
  }
  if (!os) throw std::runtime_error("cache: write failed for " + path.string());
}

GeneralizedMatrix read_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cache: cannot open " + path.string());
  Reader r(is);
  char magic[8];
  r.raw(magic, 8);
  if (!std::equal(magic, magic + 8, kMagic)) throw std::runtime_error("cache: bad magic");
  if (r.u32() != kVersion) throw std::runtime_error("cache: unsupported version");
  GeneralizedMatrix h;
  h.b = r.f64();
  h.dim = r.i32();
  h.params.lattice_radius = r.i32();
  h.params.band_cut = r.i32();
  h.params.fourier_cutoff = r.i32();
  h.params.epsilon = r.f64();
  h.params.space_quad = r.i32();
  h.params.validate();
  if (h.dim < 1) throw std::runtime_error("cache: bad dimension");
  h.symbol_id.resize(r.u64());
  r.raw(h.symbol_id.data(), h.symbol_id.size());
  h.field_hash = r.u64();
  char herm = 0;
  r.raw(&herm, 1);
  h.hermitian = herm != 0;
  const std::uint64_t count = r.u64();
  const auto m = static_cast<Eigen::Index>(h.block_size());
  const std::size_t sites = h.site_count();
  h.entries.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    BlockEntry e;
    e.row = r.u64();
    e.col = r.u64();
    if (e.row >= sites || e.col >= sites) throw std::runtime_error("cache: site index out of range");
    e.phase = r.c128();
    e.block.resize(m, m);
    for (Eigen::Index c = 0; c < m; ++c) {
      for (Eigen::Index rr = 0; rr < m; ++rr) e.block(rr, c) = r.c128();
    }
    h.entries.push_back(std::move(e));
  }
  return h;
}

std::string cache_key(const std::string& symbol_id, std::uint64_t field_hash, double b, const TruncationParams& params) {
  Fnv1a h;
  h.add(symbol_id);
  h.add(field_hash);
  h.add(b);
  h.add(params.hash());
  return "gm-" + hex64(h.value()) + ".bin";
}

}  // namespace hofmat
