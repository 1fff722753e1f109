#pragma once

// FMAP grid files: "FMAP", then little-endian u32 version, width, height,
// channelCount, then channelCount * height * width IEEE-754 binary32 values,
// channel-major and row-major within a channel.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/geometry.hpp"
#include "compshape/model_io.hpp"

namespace compshape {

inline constexpr std::uint32_t kFmapVersion = 1;

namespace detail {

inline void putU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t getU32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline std::string encodeFmap(const std::vector<Grid<float>>& channels) {
  const std::uint32_t width = channels.empty() ? 0 : static_cast<std::uint32_t>(channels[0].width());
  const std::uint32_t height =
      channels.empty() ? 0 : static_cast<std::uint32_t>(channels[0].height());
  std::string out = "FMAP";
  detail::putU32(out, kFmapVersion);
  detail::putU32(out, width);
  detail::putU32(out, height);
  detail::putU32(out, static_cast<std::uint32_t>(channels.size()));
  out.reserve(out.size() + channels.size() * width * height * 4);
  for (const Grid<float>& g : channels) {
    if (g.width() != static_cast<int>(width) || g.height() != static_cast<int>(height)) {
      throw InvalidArgument("FMAP channels must share width and height");
    }
    for (float v : g.values()) detail::putU32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline std::vector<Grid<float>> decodeFmap(const std::string& bytes, const std::string& name) {
  constexpr std::size_t kHeader = 20;
  if (bytes.size() < kHeader || bytes.compare(0, 4, "FMAP") != 0) {
    throw SchemaError(name + ": not an FMAP file (bad magic)");
  }
  const std::uint32_t version = detail::getU32(bytes, 4);
  if (version != kFmapVersion) {
    throw SchemaError(name + ": unsupported FMAP version " + std::to_string(version));
  }
  const std::uint32_t width = detail::getU32(bytes, 8);
  const std::uint32_t height = detail::getU32(bytes, 12);
  const std::uint32_t count = detail::getU32(bytes, 16);
  const std::uint64_t expected =
      kHeader + std::uint64_t{4} * width * height * std::uint64_t{count};
  if (bytes.size() != expected) {
    throw SchemaError(name + ": expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  std::vector<Grid<float>> channels;
  std::size_t offset = kHeader;
  for (std::uint32_t c = 0; c < count; ++c) {
    Grid<float> g(static_cast<int>(width), static_cast<int>(height));
    for (float& v : g.values()) {
      v = std::bit_cast<float>(detail::getU32(bytes, offset));
      offset += 4;
    }
    channels.push_back(std::move(g));
  }
  return channels;
}

inline void writeFmap(const std::string& path, const std::vector<Grid<float>>& channels) {
  writeTextFile(path, encodeFmap(channels));
}

inline std::vector<Grid<float>> readFmap(const std::string& path) {
  return decodeFmap(readTextFile(path), path);
}

}  // namespace compshape
