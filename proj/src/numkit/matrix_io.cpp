#include "kgaudit/numkit.hpp"

#include "kgaudit/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

namespace kgaudit {

static_assert(std::endian::native == std::endian::little,
              "matrix serialization assumes a little-endian host");

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ArgumentError("read_matrix: truncated header");
  return v;
}

}  // namespace

void write_matrix(std::ostream& out, const Matrix& m) {
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_matrix(std::istream& in) {
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 40;
  if (rows > kLimit || cols > kLimit || (cols != 0 && rows > kLimit / cols)) {
    throw ArgumentError("read_matrix: implausible dimensions");
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw ArgumentError("read_matrix: truncated payload");
  return m;
}

void save_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot open " + path + " for writing");
  write_matrix(out, m);
  if (!out) throw ArgumentError("failed writing " + path);
}

Matrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path);
  return read_matrix(in);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  out.precision(old);
}

}  // namespace kgaudit
