/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "cleartts/core/tensor.hpp"

namespace cleartts::viz {

using core::Tensor;

namespace detail {

inline void put_u32(std::vector<unsigned char>& b, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((x >> (8 * i)) & 0xff));
}
inline void put_u16(std::vector<unsigned char>& b, std::uint16_t x) {
  b.push_back(static_cast<unsigned char>(x & 0xff));
  b.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
}

// Dark-blue -> teal -> yellow gradient.
inline void colormap(double u, unsigned char& r, unsigned char& g, unsigned char& bl) {
  u = std::clamp(u, 0.0, 1.0);
  const double stops[4][3] = {
      {0.05, 0.03, 0.25}, {0.12, 0.40, 0.55}, {0.30, 0.75, 0.40}, {0.99, 0.90, 0.15}};
  const double pos = u * 3.0;
  const int k = std::min(2, static_cast<int>(pos));
  const double f = pos - k;
  r = static_cast<unsigned char>(255.0 * (stops[k][0] + f * (stops[k + 1][0] - stops[k][0])));
  g = static_cast<unsigned char>(255.0 * (stops[k][1] + f * (stops[k + 1][1] - stops[k][1])));
  bl = static_cast<unsigned char>(255.0 * (stops[k][2] + f * (stops[k + 1][2] - stops[k][2])));
}

}  // namespace detail

// Renders a [T, M] matrix as a 24-bit BMP heatmap: time on the horizontal
// axis, bin 0 at the bottom. Each cell becomes a `zoom` x `zoom` block.
inline void write_bmp_heatmap(const std::string& path, const Tensor& m,
                              double vmin, double vmax, int zoom = 3) {
  if (m.rank() != 2) throw InvalidInputError("heatmap: expects a [T, M] matrix");
  const int T = m.dim(0), M = m.dim(1);
  const int width = T * zoom, height = M * zoom;
  const int row_bytes = (width * 3 + 3) & ~3;
  const std::uint32_t data_size = static_cast<std::uint32_t>(row_bytes) * height;

  std::vector<unsigned char> b;
  b.reserve(54 + data_size);
  b.push_back('B');
  b.push_back('M');
  detail::put_u32(b, 54 + data_size);
  detail::put_u32(b, 0);
  detail::put_u32(b, 54);
  detail::put_u32(b, 40);  // BITMAPINFOHEADER
  detail::put_u32(b, static_cast<std::uint32_t>(width));
  detail::put_u32(b, static_cast<std::uint32_t>(height));
  detail::put_u16(b, 1);
  detail::put_u16(b, 24);
  detail::put_u32(b, 0);
  detail::put_u32(b, data_size);
  detail::put_u32(b, 2835);
  detail::put_u32(b, 2835);
  detail::put_u32(b, 0);
  detail::put_u32(b, 0);

  const double range = vmax > vmin ? vmax - vmin : 1.0;
  for (int y = 0; y < height; ++y) {  // BMP rows are bottom-up
    const int bin = y / zoom;
    std::size_t row_start = b.size();
    for (int x = 0; x < width; ++x) {
      const int t = x / zoom;
      unsigned char r, g, bl;
      detail::colormap((m.at(t, bin) - vmin) / range, r, g, bl);
      b.push_back(bl);
      b.push_back(g);
      b.push_back(r);
    }
    while (b.size() - row_start < static_cast<std::size_t>(row_bytes)) b.push_back(0);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("heatmap: cannot open " + path);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
  if (!out) throw DataError("heatmap: write failed: " + path);
}

}  // namespace cleartts::viz
