#pragma once

// Model file layout:
//   "VPN1" | u32 LE length of spec JSON | spec JSON (UTF-8)
//   | float32 LE weights, tensors in declaration order

#include <filesystem>
#include <string>

#include "json.hpp"

#include "rgbdpose/file_util.hpp"
#include "rgbdpose/nn/network.hpp"

namespace rgbdpose::nn {

inline constexpr std::string_view kModelMagic = "VPN1";

inline std::string encode_params(const NetworkParams<float>& params) {
  check_params(params);
  const std::string spec_json = nlohmann::json(params.spec).dump();
  std::string out(kModelMagic);
  append_u32_le(out, static_cast<std::uint32_t>(spec_json.size()));
  out += spec_json;
  for (const auto& t : params.tensors) out += encode_f32(t.data);
  return out;
}

inline NetworkParams<float> decode_params(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != kModelMagic)
    throw FormatError("not a model file (bad magic)");
  const std::uint32_t len = read_u32_le(bytes.data() + 4);
  if (bytes.size() < 8 + std::size_t(len)) throw FormatError("truncated model header");
  NetworkSpec spec;
  try {
    spec = nlohmann::json::parse(bytes.substr(8, len)).get<NetworkSpec>();
    spec.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad network spec: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  NetworkParams<float> params = zero_params<float>(spec);
  std::size_t offset = 8 + len;
  for (auto& t : params.tensors) {
    const std::size_t n = t.size() * 4;
    if (bytes.size() < offset + n) throw FormatError("truncated model weights");
    t.data = decode_f32(bytes.substr(offset, n));
    offset += n;
  }
  if (offset != bytes.size()) throw FormatError("trailing bytes after model weights");
  return params;
}

inline void save_params(const std::filesystem::path& path, const NetworkParams<float>& params) {
  write_file_atomic(path, encode_params(params));
}

inline NetworkParams<float> load_params(const std::filesystem::path& path) {
  return decode_params(read_file(path));
}

}  // namespace rgbdpose::nn
