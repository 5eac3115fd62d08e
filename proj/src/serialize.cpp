#include "mia/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mia {
namespace binary {
namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> bytes;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError("binary: unexpected end of stream");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { write_le(out, v); }
void write_u16(std::ostream& out, std::uint16_t v) { write_le(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
std::uint8_t read_u8(std::istream& in) { return read_le<std::uint8_t>(in); }
std::uint16_t read_u16(std::istream& in) { return read_le<std::uint16_t>(in); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

}  // namespace binary

namespace {
constexpr std::array<char, 4> kMagic{'M', 'I', 'A', 'N'};
constexpr std::uint32_t kMaxDim = 1u << 24;
}  // namespace

void write_network(std::ostream& out, const Network& net) {
  using namespace binary;
  const auto& c = net.config;
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, kNetworkFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(c.input_dim));
  write_u32(out, static_cast<std::uint32_t>(c.num_classes));
  write_u8(out, static_cast<std::uint8_t>(c.activation));
  write_u8(out, static_cast<std::uint8_t>(c.head));
  write_u16(out, 0);
  write_f64(out, c.slope);
  write_u32(out, static_cast<std::uint32_t>(c.hidden_dims.size()));
  for (int h : c.hidden_dims) write_u32(out, static_cast<std::uint32_t>(h));
  for (const auto& l : net.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index col = 0; col < l.weight.cols(); ++col) write_f64(out, l.weight(r, col));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) write_f64(out, l.bias(r));
  }
  if (!out) throw IoError("network: write failed");
}

Network read_network(std::istream& in) {
  using namespace binary;
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("network: bad magic");
  const auto version = read_u32(in);
  if (version != kNetworkFormatVersion) {
    throw IoError("network: unsupported format version " + std::to_string(version));
  }
  NetworkConfig c;
  const auto input_dim = read_u32(in);
  const auto num_classes = read_u32(in);
  if (input_dim == 0 || input_dim > kMaxDim || num_classes > kMaxDim) {
    throw IoError("network: implausible dimensions in header");
  }
  c.input_dim = static_cast<int>(input_dim);
  c.num_classes = static_cast<int>(num_classes);
  const auto act = read_u8(in);
  const auto head = read_u8(in);
  if (act > 1 || head > 1) throw IoError("network: unknown activation or head code");
  c.activation = static_cast<Activation>(act);
  c.head = static_cast<OutputHead>(head);
  read_u16(in);
  c.slope = read_f64(in);
  const auto hidden = read_u32(in);
  if (hidden > 1024) throw IoError("network: implausible hidden layer count");
  for (std::uint32_t i = 0; i < hidden; ++i) {
    const auto h = read_u32(in);
    if (h == 0 || h > kMaxDim) throw IoError("network: implausible hidden width");
    c.hidden_dims.push_back(static_cast<int>(h));
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("network: invalid header: ") + e.what());
  }

  Network net{c, {}};
  int fan_in = c.input_dim;
  std::vector<int> widths = c.hidden_dims;
  widths.push_back(c.output_dim());
  for (int out : widths) {
    Layer l{Matrix(out, fan_in), Vector(out)};
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index col = 0; col < l.weight.cols(); ++col) l.weight(r, col) = read_f64(in);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = read_f64(in);
    net.layers.push_back(std::move(l));
    fan_in = out;
  }
  return net;
}

void save_network(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("network: cannot open " + path.string() + " for writing");
  write_network(out, net);
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("network: cannot open " + path.string());
  return read_network(in);
}

}  // namespace mia
