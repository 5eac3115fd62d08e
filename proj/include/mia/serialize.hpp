#pragma once

// Binary network format (all integers and floats little-endian):
//
//   offset  size  field
//   0       4     magic "MIAN"
//   4       4     u32 format version (1)
//   8       4     u32 input_dim
//   12      4     u32 num_classes
//   16      1     u8 activation (0 relu, 1 leaky_relu)
//   17      1     u8 head (0 softmax, 1 sigmoid)
//   18      2     u16 reserved, zero
//   20      8     f64 leaky slope
//   28      4     u32 hidden layer count H
//   32      4*H   u32 hidden widths
//   ...           per layer: weight (out x in, row-major f64), then bias (out f64)
//
// Values are stored as raw IEEE-754 bit patterns, so a load of a saved
// network is bit-identical.

#include <filesystem>
#include <iosfwd>

#include "mia/nn.hpp"

namespace mia {

inline constexpr std::uint32_t kNetworkFormatVersion = 1;

void write_network(std::ostream& out, const Network& net);
Network read_network(std::istream& in);

void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

namespace binary {

void write_u8(std::ostream& out, std::uint8_t v);
void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_f64(std::ostream& out, double v);
std::uint8_t read_u8(std::istream& in);
std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
double read_f64(std::istream& in);

}  // namespace binary

}  // namespace mia
