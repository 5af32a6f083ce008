#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "fb/error.hpp"
#include "fb/grid.hpp"

namespace fb {

static_assert(std::endian::native == std::endian::little, "FBGRID1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'F', 'B', 'G', 'R', 'I', 'D', '1', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorCode::BadFormat, "truncated FBGRID1 stream");
  return v;
}

}  // namespace

void write_field(const ScalarField& u, std::ostream& out) {
  const Grid& g = u.grid;
  out.write(kMagic, sizeof kMagic);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(g.dim));
  for (int a = 0; a < g.dim; ++a) put<std::uint64_t>(out, static_cast<std::uint64_t>(g.cells[a] + 1));
  put<double>(out, g.h);
  for (int a = 0; a < g.dim; ++a) put<double>(out, g.origin[a]);
  out.write(reinterpret_cast<const char*>(u.values.data()),
            static_cast<std::streamsize>(u.values.size() * sizeof(double)));
  if (!out) throw Error(ErrorCode::BadFormat, "failed to write FBGRID1 stream");
}

void write_field(const ScalarField& u, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::BadFormat, "cannot open " + path + " for writing");
  write_field(u, out);
}

ScalarField read_field(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw Error(ErrorCode::BadFormat, "missing FBGRID1 magic");
  Grid g;
  g.dim = get<std::uint8_t>(in);
  if (g.dim < 1 || g.dim > 3) throw Error(ErrorCode::BadFormat, "FBGRID1 dimension must be 1..3");
  for (int a = 0; a < g.dim; ++a) {
    const auto nodes = get<std::uint64_t>(in);
    if (nodes < 2 || nodes > (1u << 24)) throw Error(ErrorCode::BadFormat, "bad FBGRID1 node count");
    g.cells[a] = static_cast<std::int64_t>(nodes) - 1;
  }
  g.h = get<double>(in);
  if (!(g.h > 0.0)) throw Error(ErrorCode::BadFormat, "FBGRID1 spacing must be positive");
  g.origin = Vec(g.dim);
  for (int a = 0; a < g.dim; ++a) g.origin[a] = get<double>(in);
  ScalarField u(g);
  in.read(reinterpret_cast<char*>(u.values.data()),
          static_cast<std::streamsize>(u.values.size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::BadFormat, "truncated FBGRID1 values");
  return u;
}

ScalarField read_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::BadFormat, "cannot open " + path);
  return read_field(in);
}

}  // namespace fb
