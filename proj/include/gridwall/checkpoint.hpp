#pragma once

// Checkpoint file layout:
//   8 bytes   magic "GRIDWALL"
//   8 bytes   little-endian u64 header length H
//   H bytes   JSON header (version, shapes, normalization, config hash, array table)
//   N bytes   little-endian float32 parameter block; array offsets are relative to its start

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "gridwall/policy.hpp"

namespace gridwall {

inline constexpr int kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'G', 'R', 'I', 'D', 'W', 'A', 'L', 'L'};

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_u64_le(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline void append_floats(std::string& block, std::span<const float> xs) {
  for (float x : xs) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(x));
    char b[4];
    std::memcpy(b, &bits, 4);
    block.append(b, 4);
  }
}

inline float read_float(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  return std::bit_cast<float>(to_le(bits));
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Serialize to bytes. `created` defaults to the current UTC time.
inline std::string encode_checkpoint(const Policy& p, std::optional<std::string> created = std::nullopt) {
  std::string block;
  json arrays = json::array();
  auto add_net = [&](const std::string& prefix, const Mlp<float>& net) {
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      const auto& layer = net.layers()[l];
      const std::string base = prefix + "." + std::to_string(l);
      arrays.push_back({{"name", base + ".weight"},
                        {"shape", {layer.weight.rows(), layer.weight.cols()}},
                        {"offset", block.size()},
                        {"count", layer.weight.size()}});
      detail::append_floats(block, std::span<const float>(layer.weight.data(), layer.weight.size()));
      arrays.push_back({{"name", base + ".bias"},
                        {"shape", {layer.bias.size()}},
                        {"offset", block.size()},
                        {"count", layer.bias.size()}});
      detail::append_floats(block, std::span<const float>(layer.bias.data(), layer.bias.size()));
    }
  };
  add_net("backbone", p.backbone());
  add_net("interaction", p.interaction());

  json header{
      {"format_version", kCheckpointVersion},
      {"created", created ? *created : detail::utc_now()},
      {"config_hash", p.track_hash()},
      {"elo", p.elo},
      {"metadata", p.metadata},
      {"delta", p.delta()},
      {"layout", "column-major"},
      {"activation", {{"hidden", "tanh"}, {"output", "identity"}, {"head", "tanh-squashed mean"}}},
      {"shapes", {{"backbone", p.backbone().sizes()}, {"interaction", p.interaction().sizes()}}},
      {"normalization",
       {{"ego", {{"offset", p.ego_norm().offset}, {"scale", p.ego_norm().scale}}},
        {"opponent", {{"offset", p.opp_norm().offset}, {"scale", p.opp_norm().scale}}}}},
      {"arrays", arrays},
      {"param_bytes", block.size()},
  };
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u64_le(out, h.size());
  out += h;
  out += block;
  return out;
}

/// Parse bytes; when `expected_hash` is given the track-config hash must match it.
inline Policy decode_checkpoint(const std::string& bytes, const std::optional<std::string>& expected_hash = std::nullopt) {
  using K = CheckpointError::Kind;
  if (bytes.size() < 16) throw CheckpointError(K::truncated, "checkpoint: file shorter than its fixed prefix");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) throw CheckpointError(K::bad_magic, "checkpoint: bad magic");
  const std::uint64_t hlen = detail::get_u64_le(bytes.data() + 8);
  if (hlen > bytes.size() - 16) throw CheckpointError(K::truncated, "checkpoint: header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const json::exception& e) {
    throw CheckpointError(K::malformed, std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(K::version_mismatch, "checkpoint: format version " + std::to_string(version) +
                                                     ", expected " + std::to_string(kCheckpointVersion));
    }
    const std::string hash = header.at("config_hash").get<std::string>();
    if (expected_hash && hash != *expected_hash) {
      throw CheckpointError(K::hash_mismatch, "checkpoint: track config hash " + hash + " does not match " + *expected_hash);
    }
    const std::size_t block_start = 16 + hlen;
    const std::size_t param_bytes = header.at("param_bytes").get<std::size_t>();
    if (bytes.size() - block_start < param_bytes) {
      throw CheckpointError(K::truncated, "checkpoint: parameter block truncated");
    }
    const char* block = bytes.data() + block_start;

    auto load_net = [&](const std::string& prefix) {
      Mlp<float> net(header.at("shapes").at(prefix).get<std::vector<int>>());
      std::size_t l = 0;
      for (auto& layer : net.layers()) {
        for (const char* part : {"weight", "bias"}) {
          const std::string name = prefix + "." + std::to_string(l) + "." + part;
          const json* entry = nullptr;
          for (const auto& a : header.at("arrays")) {
            if (a.at("name") == name) entry = &a;
          }
          if (!entry) throw CheckpointError(K::malformed, "checkpoint: missing array " + name);
          const auto offset = entry->at("offset").get<std::size_t>();
          const auto count = entry->at("count").get<std::size_t>();
          float* dst = std::string(part) == "weight" ? layer.weight.data() : layer.bias.data();
          const auto expect = static_cast<std::size_t>(std::string(part) == "weight" ? layer.weight.size() : layer.bias.size());
          if (count != expect) throw CheckpointError(K::malformed, "checkpoint: shape mismatch for " + name);
          if (offset > param_bytes || count * 4 > param_bytes - offset) {
            throw CheckpointError(K::truncated, "checkpoint: array " + name + " runs past the parameter block");
          }
          for (std::size_t i = 0; i < count; ++i) dst[i] = detail::read_float(block + offset + 4 * i);
        }
        ++l;
      }
      return net;
    };
    auto scaling = [&](const char* which) {
      const auto& n = header.at("normalization").at(which);
      return FeatureScaling{n.at("offset").get<std::vector<double>>(), n.at("scale").get<std::vector<double>>()};
    };
    Policy p = assemble_policy(load_net("backbone"), load_net("interaction"), scaling("ego"), scaling("opponent"),
                               header.at("delta").get<double>(), hash);
    p.elo = header.at("elo").get<double>();
    p.metadata = header.at("metadata");
    return p;
  } catch (const json::exception& e) {
    throw CheckpointError(K::malformed, std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ContractError& e) {
    throw CheckpointError(K::malformed, std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Policy& p, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(p);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: write failed for " + path.string());
}

inline Policy load_checkpoint(const std::filesystem::path& path,
                              const std::optional<std::string>& expected_hash = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected_hash);
}

}  // namespace gridwall
