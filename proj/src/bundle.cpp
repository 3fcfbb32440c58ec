#include "secovarc/bundle.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace secovarc {

static_assert(std::endian::native == std::endian::little,
              "bundle I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

void Bundle::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

std::optional<std::string> Bundle::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  return std::nullopt;
}

std::string Bundle::require_meta(const std::string& key) const {
  auto v = find_meta(key);
  if (!v) throw BundleError("bundle is missing meta field '" + key + "'");
  return *v;
}

void Bundle::add(const std::string& name, const nd::Tensor& tensor) {
  NamedArray a{name, tensor.shape(), {}};
  a.values.reserve(tensor.size());
  for (double v : tensor.data()) a.values.push_back(static_cast<float>(v));
  arrays.push_back(std::move(a));
}

const NamedArray* Bundle::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

nd::Tensor Bundle::tensor(const std::string& name, const nd::Shape& expected,
                          bool requires_grad) const {
  const NamedArray* a = find(name);
  if (!a) throw BundleError("bundle is missing array '" + name + "'");
  if (a->shape != expected) {
    throw BundleError("shape mismatch for '" + name + "': bundle declares " +
                      nd::shape_str(a->shape) + ", expected " +
                      nd::shape_str(expected));
  }
  std::vector<double> values(a->values.begin(), a->values.end());
  return nd::Tensor::from(a->shape, std::move(values), requires_grad);
}

namespace {

std::string format_shape(const nd::Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

nd::Shape parse_shape(const std::string& text, std::size_t line_no) {
  nd::Shape shape;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto next = text.find('x', pos);
    const std::string part =
        text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (part.empty() ||
        part.find_first_not_of("0123456789") != std::string::npos) {
      throw BundleError("header line " + std::to_string(line_no) +
                        ": bad shape '" + text + "'");
    }
    shape.push_back(std::stoull(part));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return shape;
}

}  // namespace

std::vector<std::uint8_t> encode_bundle(const Bundle& bundle) {
  std::string header = "version " + std::to_string(kBundleVersion) + "\n";
  for (const auto& [k, v] : bundle.meta) {
    if (k.find_first_of(" \n") != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw BundleError("meta field '" + k + "' cannot be encoded");
    }
    header += "meta " + k + " " + v + "\n";
  }
  std::size_t payload = 0;
  for (const auto& a : bundle.arrays) {
    if (a.name.find_first_of(" \n") != std::string::npos) {
      throw BundleError("array name '" + a.name + "' contains whitespace");
    }
    if (nd::shape_size(a.shape) != a.values.size()) {
      throw BundleError("array '" + a.name + "' declares " +
                        nd::shape_str(a.shape) + " but holds " +
                        std::to_string(a.values.size()) + " values");
    }
    header += "array " + a.name + " " + format_shape(a.shape) + " float32\n";
    payload += a.values.size() * 4;
  }
  std::vector<std::uint8_t> out;
  out.reserve(8 + header.size() + payload);
  out.insert(out.end(), std::begin(kBundleMagic), std::end(kBundleMagic));
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& a : bundle.arrays) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(a.values.data());
    out.insert(out.end(), bytes, bytes + a.values.size() * 4);
  }
  return out;
}

Bundle decode_bundle(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kBundleMagic, 4) != 0) {
    throw BundleError("bad magic: not a weight bundle");
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) {
    throw BundleError("truncated header: declares " + std::to_string(len) +
                      " bytes, file has " + std::to_string(bytes.size() - 8));
  }
  std::istringstream header(
      std::string(reinterpret_cast<const char*>(bytes.data()) + 8, len));
  Bundle bundle;
  std::string line;
  std::size_t line_no = 0;
  bool saw_version = false;
  while (std::getline(header, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "version") {
      int version = 0;
      fields >> version;
      if (version != kBundleVersion) {
        throw BundleError("version mismatch: bundle has version " +
                          std::to_string(version) + ", reader supports " +
                          std::to_string(kBundleVersion));
      }
      saw_version = true;
    } else if (kind == "meta") {
      std::string key;
      fields >> key;
      std::string value;
      std::getline(fields, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      bundle.meta.emplace_back(key, value);
    } else if (kind == "array") {
      std::string name, shape, dtype;
      fields >> name >> shape >> dtype;
      if (dtype != "float32") {
        throw BundleError("header line " + std::to_string(line_no) +
                          ": unsupported element type '" + dtype + "'");
      }
      bundle.arrays.push_back({name, parse_shape(shape, line_no), {}});
    } else {
      throw BundleError("header line " + std::to_string(line_no) +
                        ": unknown record '" + kind + "'");
    }
  }
  if (!saw_version) throw BundleError("version mismatch: header has no version");

  std::size_t offset = 8 + len;
  for (auto& a : bundle.arrays) {
    const std::size_t n = nd::shape_size(a.shape);
    if (bytes.size() - offset < n * 4) {
      throw BundleError("truncated payload: array '" + a.name + "' " +
                        nd::shape_str(a.shape) + " needs " +
                        std::to_string(n * 4) + " bytes, " +
                        std::to_string(bytes.size() - offset) + " remain");
    }
    a.values.resize(n);
    std::memcpy(a.values.data(), bytes.data() + offset, n * 4);
    offset += n * 4;
  }
  if (offset != bytes.size()) {
    throw BundleError("trailing bytes: payload ends at " +
                      std::to_string(offset) + ", file is " +
                      std::to_string(bytes.size()) + " bytes");
  }
  return bundle;
}

void write_bundle(const std::filesystem::path& path, const Bundle& bundle) {
  const auto bytes = encode_bundle(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BundleError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw BundleError("write failed for " + path.string());
}

Bundle read_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_bundle(bytes);
}

}  // namespace secovarc
