#include "oob/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "oob/error.hpp"
#include "oob/png_io.hpp"

namespace oob {

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used (bit 4 = leftmost column).
struct Glyph {
  char ch;
  unsigned char rows[7];
};

const Glyph kFont[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
};

const Glyph* find_glyph(char c) {
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont)
    if (g.ch == up) return &g;
  return nullptr;
}

std::string format_value(Scalar v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4G", v);
  return buf;
}

}  // namespace

Canvas::Canvas(int width, int height, Rgb background) : w_(width), h_(height) {
  img_ = Tensor({3, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) pixel(x, y, background);
}

void Canvas::pixel(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
  img_.at3(0, y, x) = c.r;
  img_.at3(1, y, x) = c.g;
  img_.at3(2, y, x) = c.b;
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    pixel(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) pixel(x, y, c);
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  int cx = x;
  for (char ch : s) {
    if (const Glyph* g = find_glyph(ch)) {
      for (int r = 0; r < 7; ++r)
        for (int col = 0; col < 5; ++col)
          if (g->rows[r] & (1 << (4 - col)))
            fill_rect(cx + col * scale, y + r * scale, cx + col * scale + scale - 1,
                      y + r * scale + scale - 1, c);
    }
    cx += 6 * scale;
  }
}

void Canvas::save(const std::string& path) const { write_png(path, img_); }

void plot_line_chart(const std::string& png_path, const std::string& title,
                     const std::vector<Scalar>& series, const std::vector<int>& vmarkers,
                     std::optional<Scalar> hline) {
  if (series.empty()) throw Error::argument("plot_line_chart: empty series");
  const int w = 520, h = 340, ml = 56, mr = 16, mt = 28, mb = 32;
  Canvas cv(w, h, {1, 1, 1});
  const Rgb axis{0.25, 0.25, 0.25}, ink{0.1, 0.2, 0.7}, mark{0.85, 0.15, 0.1},
      ref{0.55, 0.55, 0.55};

  Scalar lo = series[0], hi = series[0];
  for (Scalar v : series) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hline) {
    lo = std::min(lo, *hline);
    hi = std::max(hi, *hline);
  }
  if (hi - lo < 1e-12) {
    hi += 0.5;
    lo -= 0.5;
  }

  const int x0 = ml, x1 = w - mr, y0 = h - mb, y1 = mt;
  auto px = [&](std::size_t i) {
    return series.size() == 1
               ? (x0 + x1) / 2
               : x0 + static_cast<int>(std::lround((x1 - x0) * static_cast<Scalar>(i) /
                                                   (series.size() - 1)));
  };
  auto py = [&](Scalar v) {
    return y0 - static_cast<int>(std::lround((y0 - y1) * (v - lo) / (hi - lo)));
  };

  cv.text(8, 8, title, axis);
  cv.line(x0, y0, x1, y0, axis);
  cv.line(x0, y0, x0, y1, axis);
  cv.text(2, py(hi) - 3, format_value(hi), axis);
  cv.text(2, py(lo) - 3, format_value(lo), axis);
  cv.text(x1 - 6 * static_cast<int>(std::to_string(series.size() - 1).size()), y0 + 6,
          std::to_string(series.size() - 1), axis);
  cv.text(x0, y0 + 6, "0", axis);

  for (int m : vmarkers) {
    if (m < 0 || m >= static_cast<int>(series.size())) continue;
    const int x = px(static_cast<std::size_t>(m));
    for (int y = y1; y <= y0; y += 3) cv.pixel(x, y, mark);
    cv.fill_rect(x - 1, py(series[static_cast<std::size_t>(m)]) - 1, x + 1,
                 py(series[static_cast<std::size_t>(m)]) + 1, mark);
  }
  if (hline) {
    const int y = py(*hline);
    for (int x = x0; x <= x1; x += 3) cv.pixel(x, y, ref);
  }
  for (std::size_t i = 1; i < series.size(); ++i)
    cv.line(px(i - 1), py(series[i - 1]), px(i), py(series[i]), ink);

  cv.save(png_path);
}

void plot_bars(const std::string& png_path, const std::string& title,
               const std::vector<std::pair<std::string, Scalar>>& bars) {
  if (bars.empty()) throw Error::argument("plot_bars: no bars");
  const int w = 520, h = 340, ml = 56, mr = 16, mt = 28, mb = 60;
  Canvas cv(w, h, {1, 1, 1});
  const Rgb axis{0.25, 0.25, 0.25}, fill{0.2, 0.45, 0.75};

  Scalar hi = 0;
  for (const auto& [name, v] : bars) hi = std::max(hi, v);
  if (hi <= 0) hi = 1;

  const int x0 = ml, x1 = w - mr, y0 = h - mb, y1 = mt;
  const int n = static_cast<int>(bars.size());
  const int slot = (x1 - x0) / n;
  cv.text(8, 8, title, axis);
  cv.line(x0, y0, x1, y0, axis);
  cv.line(x0, y0, x0, y1, axis);
  cv.text(2, y1 - 3, format_value(hi), axis);
  cv.text(2, y0 - 3, "0", axis);

  for (int i = 0; i < n; ++i) {
    const auto& [name, v] = bars[static_cast<std::size_t>(i)];
    const int bx0 = x0 + i * slot + slot / 6;
    const int bx1 = x0 + (i + 1) * slot - slot / 6;
    const int by = y0 - static_cast<int>(std::lround((y0 - y1) * v / hi));
    cv.fill_rect(bx0, by, bx1, y0 - 1, fill);
    cv.text(bx0, y0 + 8, name.substr(0, static_cast<std::size_t>(slot / 6)), axis);
    cv.text(bx0, by - 10, format_value(v), axis);
  }
  cv.save(png_path);
}

}  // namespace oob
