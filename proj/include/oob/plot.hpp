#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oob/tensor.hpp"

namespace oob {

struct Rgb {
  Scalar r = 0, g = 0, b = 0;
};

// Minimal raster canvas with a built-in 5x7 uppercase font, saved as PNG.
class Canvas {
 public:
  Canvas(int width, int height, Rgb background);
  int width() const { return w_; }
  int height() const { return h_; }
  void pixel(int x, int y, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  void save(const std::string& path) const;

 private:
  int w_, h_;
  Tensor img_;
};

// Line chart with optional vertical markers (x indices) and an optional
// horizontal reference line.
void plot_line_chart(const std::string& png_path, const std::string& title,
                     const std::vector<Scalar>& series, const std::vector<int>& vmarkers,
                     std::optional<Scalar> hline);

void plot_bars(const std::string& png_path, const std::string& title,
               const std::vector<std::pair<std::string, Scalar>>& bars);

}  // namespace oob
