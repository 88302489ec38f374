#include "ontic/field_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ontic {
namespace {

static_assert(std::endian::native == std::endian::little, "binary field format assumes little-endian host");

constexpr char kMagic[4] = {'O', 'N', 'T', 'F'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("field file truncated");
  return v;
}

void write_header(std::ostream& out, const Grid& g, std::uint8_t kind) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFieldFormatVersion);
  put<std::uint8_t>(out, kind);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.dims()));
  for (const auto& ax : g.axes()) {
    put<double>(out, ax.lower);
    put<double>(out, ax.upper);
    put<std::uint64_t>(out, ax.points);
    put<std::uint8_t>(out, ax.boundary == Boundary::periodic ? 0 : 1);
  }
}

Grid read_header(std::istream& in, std::uint8_t expected_kind) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not an ontic field file");
  if (get<std::uint32_t>(in) != kFieldFormatVersion) throw std::runtime_error("unsupported field format version");
  if (get<std::uint8_t>(in) != expected_kind) throw std::runtime_error("field kind mismatch");
  const auto dims = get<std::uint32_t>(in);
  if (dims == 0 || dims > static_cast<std::uint32_t>(kMaxDims)) throw std::runtime_error("bad field dimension");
  std::vector<Axis> axes(dims);
  for (auto& ax : axes) {
    ax.lower = get<double>(in);
    ax.upper = get<double>(in);
    ax.points = get<std::uint64_t>(in);
    const auto b = get<std::uint8_t>(in);
    if (b > 1) throw std::runtime_error("bad boundary code");
    ax.boundary = b == 0 ? Boundary::periodic : Boundary::vanishing;
  }
  return Grid(std::move(axes));
}

void write_csv_header(std::ostream& out, const Grid& g, const char* kind) {
  out << "# ontic-field " << kFieldFormatVersion << '\n' << "# kind " << kind << '\n' << "# dims " << g.dims() << '\n';
  out << std::setprecision(17);
  for (std::size_t a = 0; a < g.dims(); ++a) {
    const auto& ax = g.axis(a);
    out << "# axis " << a << ' ' << ax.lower << ' ' << ax.upper << ' ' << ax.points << ' ' << to_string(ax.boundary)
        << '\n';
  }
  for (std::size_t a = 0; a < g.dims(); ++a) out << 'q' << a << ',';
}

struct CsvBody {
  Grid grid;
  std::vector<std::vector<double>> rows;
};

CsvBody read_csv_body(std::istream& in, const std::string& expected_kind, std::size_t value_columns) {
  std::string line;
  std::string kind;
  std::size_t dims = 0;
  std::vector<Axis> axes;
  bool header_row_seen = false;
  CsvBody body;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key;
      ss >> key;
      if (key == "kind") {
        ss >> kind;
      } else if (key == "dims") {
        ss >> dims;
      } else if (key == "axis") {
        std::size_t i;
        Axis ax;
        std::string b;
        ss >> i >> ax.lower >> ax.upper >> ax.points >> b;
        if (!ss) throw std::runtime_error("malformed axis line in field csv");
        ax.boundary = boundary_from_string(b);
        if (i != axes.size()) throw std::runtime_error("axis lines out of order in field csv");
        axes.push_back(ax);
      }
      continue;
    }
    if (!header_row_seen) {
      header_row_seen = true;
      continue;
    }
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != dims + value_columns) throw std::runtime_error("field csv row has wrong column count");
    body.rows.push_back(std::move(row));
  }
  if (kind != expected_kind) throw std::runtime_error("field csv kind mismatch");
  if (dims == 0 || axes.size() != dims) throw std::runtime_error("field csv header incomplete");
  body.grid = Grid(std::move(axes));
  if (body.rows.size() != body.grid.size()) throw std::runtime_error("field csv row count does not match grid");
  return body;
}

template <typename F>
void save_impl(const std::filesystem::path& path, const F& f) {
  const bool csv = path.extension() == ".csv";
  std::ofstream out(path, csv ? std::ios::out : std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (csv)
    write_csv(out, f);
  else
    write_binary(out, f);
}

}  // namespace

void write_binary(std::ostream& out, const ScalarField& f) {
  write_header(out, f.grid(), 0);
  for (std::size_t k = 0; k < f.size(); ++k) put<double>(out, f[k]);
}

void write_binary(std::ostream& out, const ComplexField& f) {
  write_header(out, f.grid(), 1);
  for (std::size_t k = 0; k < f.size(); ++k) {
    put<double>(out, f[k].real());
    put<double>(out, f[k].imag());
  }
}

void write_csv(std::ostream& out, const ScalarField& f) {
  const Grid& g = f.grid();
  write_csv_header(out, g, "real");
  out << "value\n";
  for (std::size_t k = 0; k < g.size(); ++k) {
    for (std::size_t a = 0; a < g.dims(); ++a) out << g.coord(k, a) << ',';
    out << f[k] << '\n';
  }
}

void write_csv(std::ostream& out, const ComplexField& f) {
  const Grid& g = f.grid();
  write_csv_header(out, g, "complex");
  out << "re,im\n";
  for (std::size_t k = 0; k < g.size(); ++k) {
    for (std::size_t a = 0; a < g.dims(); ++a) out << g.coord(k, a) << ',';
    out << f[k].real() << ',' << f[k].imag() << '\n';
  }
}

ScalarField read_scalar_binary(std::istream& in) {
  ScalarField f(read_header(in, 0));
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = get<double>(in);
  return f;
}

ComplexField read_complex_binary(std::istream& in) {
  ComplexField f(read_header(in, 1));
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double re = get<double>(in);
    f[k] = Complex(re, get<double>(in));
  }
  return f;
}

ScalarField read_scalar_csv(std::istream& in) {
  auto body = read_csv_body(in, "real", 1);
  ScalarField f(body.grid);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = body.rows[k].back();
  return f;
}

ComplexField read_complex_csv(std::istream& in) {
  auto body = read_csv_body(in, "complex", 2);
  ComplexField f(body.grid);
  for (std::size_t k = 0; k < f.size(); ++k) {
    const auto& r = body.rows[k];
    f[k] = Complex(r[r.size() - 2], r[r.size() - 1]);
  }
  return f;
}

void save(const std::filesystem::path& path, const ScalarField& f) { save_impl(path, f); }
void save(const std::filesystem::path& path, const ComplexField& f) { save_impl(path, f); }

ScalarField load_scalar(const std::filesystem::path& path) {
  const bool csv = path.extension() == ".csv";
  std::ifstream in(path, csv ? std::ios::in : std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return csv ? read_scalar_csv(in) : read_scalar_binary(in);
}

ComplexField load_complex(const std::filesystem::path& path) {
  const bool csv = path.extension() == ".csv";
  std::ifstream in(path, csv ? std::ios::in : std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return csv ? read_complex_csv(in) : read_complex_binary(in);
}

}  // namespace ontic
