#pragma once

// Portable weight bundle (".swb").
//
//   bytes 0-3   magic "SWB1"
//   bytes 4-7   header length L, unsigned 32-bit little-endian
//   next L      UTF-8 header text, one record per '\n'-terminated line:
//                 version 1
//                 meta <key> <value>             (any number, value may hold spaces)
//                 array <name> <d0>x<d1>... float32
//   payload     every array's elements row-major as little-endian IEEE-754
//               binary32, concatenated in header order with no padding
//
// The file ends exactly at the end of the payload.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "secovarc/nd.hpp"

namespace secovarc {

inline constexpr char kBundleMagic[4] = {'S', 'W', 'B', '1'};
inline constexpr int kBundleVersion = 1;

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  nd::Shape shape;
  std::vector<float> values;
};

struct Bundle {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedArray> arrays;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> find_meta(const std::string& key) const;
  std::string require_meta(const std::string& key) const;
  void add(const std::string& name, const nd::Tensor& tensor);
  const NamedArray* find(const std::string& name) const;
  // Throws if the array is absent or its shape differs from `expected`.
  nd::Tensor tensor(const std::string& name, const nd::Shape& expected,
                    bool requires_grad = true) const;
};

std::vector<std::uint8_t> encode_bundle(const Bundle& bundle);
Bundle decode_bundle(const std::vector<std::uint8_t>& bytes);

void write_bundle(const std::filesystem::path& path, const Bundle& bundle);
Bundle read_bundle(const std::filesystem::path& path);

}  // namespace secovarc
