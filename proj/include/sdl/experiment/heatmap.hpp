#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdl/grid.hpp"

namespace sdl {

/// 8-bit grayscale pixels, row iy = 0 first, scaled by the maximum mass.
inline std::vector<std::uint8_t> heatmap_pixels(const Distribution& dist) {
  const auto mass = dist.mass();
  const double peak = *std::max_element(mass.begin(), mass.end());
  if (!(peak > 0.0)) throw std::invalid_argument("heatmap: distribution has no positive mass");
  std::vector<std::uint8_t> px(mass.size());
  for (std::size_t i = 0; i < mass.size(); ++i) {
    px[i] = static_cast<std::uint8_t>(std::lround(255.0 * mass[i] / peak));
  }
  return px;
}

/// Binary PGM (P5): width n_x, height n_y, maxval 255.
inline void write_pgm(std::ostream& out, const Distribution& dist) {
  const auto px = heatmap_pixels(dist);
  out << "P5\n" << dist.grid().nx() << ' ' << dist.grid().ny() << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

inline void render_heatmap(const Distribution& dist, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open `" + path + "` for writing");
  write_pgm(out, dist);
  if (!out) throw std::runtime_error("failed writing `" + path + "`");
}

}  // namespace sdl
