// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/parameters.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ramanmatch/hash.hpp"

namespace ramanmatch::nd {

Parameter& ParameterSet::add(std::string name, Tensor value, ParamKind kind) {
  if (params_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Parameter p;
  p.grad = Tensor(value.batch(), value.channels(), value.width());
  p.value = std::move(value);
  p.kind = kind;
  return params_.emplace(std::move(name), std::move(p)).first->second;
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + std::string(name));
  }
  return it->second;
}

const Parameter& ParameterSet::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + std::string(name));
  }
  return it->second;
}

bool ParameterSet::contains(std::string_view name) const {
  return params_.find(name) != params_.end();
}

std::size_t ParameterSet::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (p.trainable()) n += p.value.size();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

double ParameterSet::weight_sum_squares() const {
  double s = 0.0;
  for (const auto& [name, p] : params_) {
    if (!p.regularized()) continue;
    for (double v : p.value.values()) s += v * v;
  }
  return s;
}

std::uint64_t ParameterSet::checksum() const {
  Fnv1a h;
  for (const auto& [name, p] : params_) {
    h.update(name);
    h.update(p.value.values());
  }
  return h.digest();
}

namespace {

constexpr std::array<char, 4> kMagic{'R', 'M', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw CheckpointError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(bytes[i]) << (8 * i);
  }
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto len = get_le<std::uint32_t>(in);
  if (len > (1u << 20)) throw CheckpointError("checkpoint string too long");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw CheckpointError("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterSet& params) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, params.init_seed);
  put_le<std::uint64_t>(out, params.arch_hash);
  put_string(out, params.version);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries()));
  for (const auto& [name, p] : params) {
    put_string(out, name);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.kind));
    put_le<std::uint64_t>(out, p.value.batch());
    put_le<std::uint64_t>(out, p.value.channels());
    put_le<std::uint64_t>(out, p.value.width());
    for (double v : p.value.values()) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &v, sizeof bits);
      put_le<std::uint64_t>(out, bits);
    }
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

ParameterSet read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError("not a checkpoint file");
  const auto format = get_le<std::uint32_t>(in);
  if (format != kFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " +
                          std::to_string(format));
  }
  ParameterSet params;
  params.init_seed = get_le<std::uint64_t>(in);
  params.arch_hash = get_le<std::uint64_t>(in);
  params.version = get_string(in);
  const auto count = get_le<std::uint32_t>(in);
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name = get_string(in);
    const auto kind = get_le<std::uint8_t>(in);
    if (kind > static_cast<std::uint8_t>(ParamKind::buffer)) {
      throw CheckpointError("bad parameter kind for " + name);
    }
    const auto b = get_le<std::uint64_t>(in);
    const auto c = get_le<std::uint64_t>(in);
    const auto w = get_le<std::uint64_t>(in);
    if (b * c * w > (1ULL << 32)) {
      throw CheckpointError("implausible tensor size for " + name);
    }
    Tensor t(b, c, w);
    for (double& v : t.values()) {
      const auto bits = get_le<std::uint64_t>(in);
      std::memcpy(&v, &bits, sizeof v);
    }
    params.add(std::move(name), std::move(t), static_cast<ParamKind>(kind));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path,
                     const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string());
  write_checkpoint(out, params);
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace ramanmatch::nd
