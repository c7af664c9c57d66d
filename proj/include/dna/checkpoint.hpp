// Checkpoint container: a flat sequence of named float tensors.
//
// Layout: magic "DNA1", then per tensor: name length (u16 LE), name bytes,
// rank (u8), dims (u32 LE each), raw 32-bit LE floats row-major. Loaders
// reject any other magic. Values are stored as float regardless of the
// in-memory scalar type.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dna/tensor.hpp"

namespace dna {

template <class Scalar>
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor<Scalar>>> items;

  void add(const std::string& name, Tensor<Scalar> t) {
    items.emplace_back(name, std::move(t));
  }

  const Tensor<Scalar>* find(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor<Scalar>& at(const std::string& name) const {
    const Tensor<Scalar>* t = find(name);
    require(t != nullptr, "checkpoint: missing tensor '" + name + "'");
    return *t;
  }
};

namespace ckptdet {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline bool get_u16(std::istream& is, std::uint16_t& v) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) return false;
  v = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  return true;
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_f32(std::istream& is, float& v) {
  std::uint32_t bits;
  if (!get_u32(is, bits)) return false;
  std::memcpy(&v, &bits, 4);
  return true;
}

}  // namespace ckptdet

template <class Scalar>
void save_checkpoint(const std::string& path, const NamedTensors<Scalar>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write("DNA1", 4);
  for (const auto& [name, t] : tensors.items) {
    require(name.size() <= 0xffff, "checkpoint: tensor name too long");
    require(t.rank() <= 255, "checkpoint: tensor rank too large");
    ckptdet::put_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(t.rank()));
    for (int i = 0; i < t.rank(); ++i)
      ckptdet::put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
    for (Index i = 0; i < t.numel(); ++i) ckptdet::put_f32(os, static_cast<float>(t[i]));
  }
  if (!os) throw std::runtime_error("checkpoint: write to " + path + " failed");
}

template <class Scalar = float>
NamedTensors<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DNA1", 4) != 0)
    throw std::runtime_error("checkpoint: " + path + " has unknown magic (expected DNA1)");

  NamedTensors<Scalar> out;
  for (;;) {
    std::uint16_t name_len;
    if (!ckptdet::get_u16(is, name_len)) break;  // clean EOF
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("checkpoint: truncated name in " + path);
    const int rank = is.get();
    if (rank < 0) throw std::runtime_error("checkpoint: truncated rank in " + path);
    Shape shape(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) {
      std::uint32_t d;
      if (!ckptdet::get_u32(is, d))
        throw std::runtime_error("checkpoint: truncated dims in " + path);
      shape[static_cast<std::size_t>(i)] = static_cast<Index>(d);
    }
    Tensor<Scalar> t(shape);
    for (Index i = 0; i < t.numel(); ++i) {
      float v;
      if (!ckptdet::get_f32(is, v))
        throw std::runtime_error("checkpoint: truncated data for '" + name + "' in " + path);
      t[i] = static_cast<Scalar>(v);
    }
    out.add(name, std::move(t));
  }
  return out;
}

}  // namespace dna
