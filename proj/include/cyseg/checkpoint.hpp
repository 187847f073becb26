#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyseg/tensor.hpp"

namespace cyseg {

// Version-tagged binary container: a string map (config, RNG states,
// counters) plus a named tensor map (parameters, optimizer moments).
// Doubles are stored raw little-endian, which is what every target we
// build on uses.
struct Checkpoint {
  static constexpr char kMagic[8] = {'C', 'Y', 'S', 'E', 'G', 'C', 'K', '1'};

  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
    f.write(kMagic, sizeof(kMagic));
    write_u64(f, meta.size());
    for (const auto& [k, v] : meta) {
      write_str(f, k);
      write_str(f, v);
    }
    write_u64(f, tensors.size());
    for (const auto& [k, t] : tensors) {
      write_str(f, k);
      write_u64(f, t.rank());
      for (int i = 0; i < t.rank(); ++i) write_u64(f, t.dim(i));
      f.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("checkpoint: write failure on " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[sizeof(kMagic)];
    f.read(magic, sizeof(magic));
    if (!f || std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(kMagic)))
      throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ck;
    std::uint64_t n = read_u64(f);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string k = read_str(f);
      ck.meta[k] = read_str(f);
    }
    n = read_u64(f);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string k = read_str(f);
      std::uint64_t rank = read_u64(f);
      std::vector<int> shape(rank);
      std::int64_t numel = 1;
      for (auto& d : shape) {
        d = static_cast<int>(read_u64(f));
        numel *= d;
      }
      std::vector<double> data(numel);
      f.read(reinterpret_cast<char*>(data.data()),
             static_cast<std::streamsize>(numel * sizeof(double)));
      if (!f) throw std::runtime_error("checkpoint: truncated tensor in " + path);
      ck.tensors[k] = Tensor::from(shape, std::move(data));
    }
    return ck;
  }

  const std::string& require(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end())
      throw std::runtime_error("checkpoint: missing meta key '" + key + "'");
    return it->second;
  }

  const Tensor& require_tensor(const std::string& key) const {
    auto it = tensors.find(key);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint: missing tensor '" + key + "'");
    return it->second;
  }

 private:
  static void write_u64(std::ofstream& f, std::uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint64_t read_u64(std::ifstream& f) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    return v;
  }
  static void write_str(std::ofstream& f, const std::string& s) {
    write_u64(f, s.size());
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static std::string read_str(std::ifstream& f) {
    std::uint64_t n = read_u64(f);
    std::string s(n, '\0');
    f.read(s.data(), static_cast<std::streamsize>(n));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    return s;
  }
};

}  // namespace cyseg
