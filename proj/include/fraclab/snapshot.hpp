#pragma once

// Field snapshots: <base>.bin holds little-endian float32 (re, im) pairs in grid
// order, <base>.json the sidecar {d, n, L, time, tag}.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fraclab/error.hpp"
#include "fraclab/grid.hpp"

namespace fraclab {

struct Snapshot {
  SpectralField field;
  double time = 0.0;
  std::string tag;
};

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  return v;
}

} // namespace detail

inline void write_snapshot(const std::filesystem::path& base, const SpectralField& f, double time,
                           const std::string& tag) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * f.values().size());
  for (const auto& v : f.values()) {
    for (float x : {static_cast<float>(v.real()), static_cast<float>(v.imag())})
      words.push_back(detail::to_le(std::bit_cast<std::uint32_t>(x)));
  }
  std::ofstream bin(base.string() + ".bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (!bin) throw Error(fmt::format("cannot write {}.bin", base.string()));

  const nlohmann::ordered_json side{{"d", f.grid().d()}, {"n", f.grid().n()}, {"L", f.grid().length()},
                                    {"time", time},      {"tag", tag}};
  std::ofstream js(base.string() + ".json");
  js << side.dump(2) << '\n';
  if (!js) throw Error(fmt::format("cannot write {}.json", base.string()));
}

inline Snapshot read_snapshot(const std::filesystem::path& base) {
  std::ifstream js(base.string() + ".json");
  if (!js) throw Error(fmt::format("cannot read {}.json", base.string()));
  const auto side = nlohmann::json::parse(js);
  const TorusGrid g(side.at("d").get<int>(), side.at("n").get<int>(), side.at("L").get<double>());

  std::ifstream bin(base.string() + ".bin", std::ios::binary);
  std::vector<std::uint32_t> words(2 * g.size());
  bin.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (!bin || bin.peek() != std::char_traits<char>::eof())
    throw ShapeError(fmt::format("{}.bin does not hold {} complex64 values", base.string(), g.size()));
  std::vector<cplx> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = {std::bit_cast<float>(detail::to_le(words[2 * i])), std::bit_cast<float>(detail::to_le(words[2 * i + 1]))};
  return {SpectralField(g, std::move(v)), side.at("time").get<double>(), side.at("tag").get<std::string>()};
}

} // namespace fraclab
