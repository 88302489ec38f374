#pragma once

#include "ontic/field.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace ontic {

// Binary layout (little-endian):
//   char[4]  "ONTF"
//   u32      format version (1)
//   u8       kind: 0 = real, 1 = complex
//   u32      dims
//   per axis: f64 lower, f64 upper, u64 points, u8 boundary (0 periodic, 1 vanishing)
//   values in row-major order: f64 (real) or f64 re, f64 im (complex)
//
// CSV layout:
//   # ontic-field 1
//   # kind real|complex
//   # dims N
//   # axis <i> <lower> <upper> <points> <periodic|vanishing>
//   q0,...,q{N-1},value            (complex: ...,re,im)
//   one row per grid point in row-major order

inline constexpr std::uint32_t kFieldFormatVersion = 1;

void write_binary(std::ostream& out, const ScalarField& f);
void write_binary(std::ostream& out, const ComplexField& f);
void write_csv(std::ostream& out, const ScalarField& f);
void write_csv(std::ostream& out, const ComplexField& f);

ScalarField read_scalar_binary(std::istream& in);
ComplexField read_complex_binary(std::istream& in);
ScalarField read_scalar_csv(std::istream& in);
ComplexField read_complex_csv(std::istream& in);

/// Dispatch on extension: ".csv" is text, anything else binary.
void save(const std::filesystem::path& path, const ScalarField& f);
void save(const std::filesystem::path& path, const ComplexField& f);
ScalarField load_scalar(const std::filesystem::path& path);
ComplexField load_complex(const std::filesystem::path& path);

}  // namespace ontic
