#include "ciss/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ciss/error.hpp"

namespace ciss {

namespace {

constexpr Rgb kPalette[] = {
    {40, 40, 40},    // 0 background: dark gray
    {230, 60, 60},   // 1
    {60, 90, 230},   // 2
    {60, 200, 90},   // 3
    {240, 160, 40},  // 4
    {60, 200, 220},  // 5
    {150, 230, 70},  // 6
    {200, 80, 200},  // 7
    {250, 230, 80},  // 8
    {140, 100, 60},  // 9
    {90, 240, 180},  // 10
    {240, 120, 160}, // 11
};
constexpr int kPaletteSize = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));

struct Canvas {
  int w, h;
  std::vector<uint8_t> px;
  Canvas(int width, int height, Rgb bg = {255, 255, 255})
      : w(width), h(height), px(static_cast<size_t>(width) * height * 3) {
    for (int i = 0; i < w * h; ++i) {
      px[3 * static_cast<size_t>(i)] = bg.r;
      px[3 * static_cast<size_t>(i) + 1] = bg.g;
      px[3 * static_cast<size_t>(i) + 2] = bg.b;
    }
  }
  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    const size_t i = (static_cast<size_t>(y) * w + x) * 3;
    px[i] = c.r;
    px[i + 1] = c.g;
    px[i + 2] = c.b;
  }
  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, c);
  }
  void line(int x0, int y0, int x1, int y1, Rgb c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1, err = dx + dy;
    for (;;) {
      set(x0, y0, c);
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
  void save(const std::filesystem::path& path) const {
    write_png(path, ImageU8{w, h, 3, px});
  }
};

Rgb series_color(size_t i) {
  static const Rgb colors[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                               {214, 39, 40},  {148, 103, 189}, {140, 86, 75},
                               {227, 119, 194}, {127, 127, 127}};
  return colors[i % 8];
}

std::string rgb_hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Extent {
  double lo, hi;
};

Extent value_extent(const std::vector<Series>& series) {
  double lo = 1e300, hi = -1e300;
  for (const Series& s : series)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (lo > hi) {
    lo = 0;
    hi = 1;
  }
  if (hi == lo) hi = lo + 1;
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

} // namespace

Rgb class_color(int class_id) {
  if (class_id == 255) return {255, 255, 255};
  return kPalette[class_id % kPaletteSize];
}

void write_line_plot(const std::filesystem::path& base, const LinePlotSpec& spec) {
  const int W = 640, H = 420, ml = 60, mr = 20, mt = 40, mb = 50;
  const int pw = W - ml - mr, ph = H - mt - mb;
  size_t max_n = 1;
  for (const Series& s : spec.series) max_n = std::max(max_n, s.values.size());
  const Extent ey = value_extent(spec.series);
  auto X = [&](double i) { return ml + pw * (max_n <= 1 ? 0.5 : i / (double)(max_n - 1)); };
  auto Y = [&](double v) { return mt + ph * (1.0 - (v - ey.lo) / (ey.hi - ey.lo)); };

  // SVG
  {
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' font-family='sans-serif' font-size='12'>\n";
    svg << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
    if (spec.shade_until_x >= 0) {
      svg << "<rect x='" << ml << "' y='" << mt << "' width='"
          << X(spec.shade_until_x) - ml << "' height='" << ph
          << "' fill='#eeeeee'/>\n";
    }
    svg << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>"
        << xml_escape(spec.title) << "</text>\n";
    svg << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='"
        << mt + ph << "' stroke='black'/>\n";
    svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + ph
        << "' stroke='black'/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double v = ey.lo + k * (ey.hi - ey.lo) / 4;
      svg << "<text x='" << ml - 6 << "' y='" << Y(v) + 4
          << "' text-anchor='end'>" << std::round(v * 100) / 100 << "</text>\n";
      svg << "<line x1='" << ml << "' y1='" << Y(v) << "' x2='" << ml + pw << "' y2='" << Y(v)
          << "' stroke='#dddddd'/>\n";
    }
    for (size_t i = 0; i < max_n; i += std::max<size_t>(1, max_n / 8))
      svg << "<text x='" << X(static_cast<double>(i)) << "' y='" << mt + ph + 16
          << "' text-anchor='middle'>" << i << "</text>\n";
    svg << "<text x='" << ml + pw / 2 << "' y='" << H - 12 << "' text-anchor='middle'>"
        << xml_escape(spec.x_label) << "</text>\n";
    svg << "<text x='16' y='" << mt + ph / 2
        << "' text-anchor='middle' transform='rotate(-90 16 " << mt + ph / 2 << ")'>"
        << xml_escape(spec.y_label) << "</text>\n";
    for (size_t si = 0; si < spec.series.size(); ++si) {
      const Series& s = spec.series[si];
      svg << "<polyline fill='none' stroke='" << rgb_hex(series_color(si))
          << "' stroke-width='2' points='";
      for (size_t i = 0; i < s.values.size(); ++i)
        svg << X(static_cast<double>(i)) << "," << Y(s.values[i]) << " ";
      svg << "'/>\n";
      svg << "<text x='" << ml + pw - 140 << "' y='" << mt + 16 + 16 * si << "' fill='"
          << rgb_hex(series_color(si)) << "'>" << xml_escape(s.name) << "</text>\n";
    }
    svg << "</svg>\n";
    std::ofstream out(base.string() + ".svg");
    out << svg.str();
  }

  // PNG twin
  {
    Canvas c(W, H);
    if (spec.shade_until_x >= 0)
      c.rect(ml, mt, static_cast<int>(X(spec.shade_until_x)), mt + ph, {238, 238, 238});
    c.rect(ml, mt + ph, ml + pw, mt + ph + 1, {0, 0, 0});
    c.rect(ml - 1, mt, ml, mt + ph, {0, 0, 0});
    for (int k = 0; k <= 4; ++k) {
      const double v = ey.lo + k * (ey.hi - ey.lo) / 4;
      c.line(ml, static_cast<int>(Y(v)), ml + pw, static_cast<int>(Y(v)), {221, 221, 221});
    }
    for (size_t si = 0; si < spec.series.size(); ++si) {
      const Series& s = spec.series[si];
      const Rgb col = series_color(si);
      for (size_t i = 0; i + 1 < s.values.size(); ++i)
        c.line(static_cast<int>(X(static_cast<double>(i))), static_cast<int>(Y(s.values[i])),
               static_cast<int>(X(static_cast<double>(i + 1))),
               static_cast<int>(Y(s.values[i + 1])), col);
      c.rect(ml + pw - 150, mt + 10 + 16 * static_cast<int>(si), ml + pw - 140,
             mt + 18 + 16 * static_cast<int>(si), col);
    }
    c.save(base.string() + ".png");
  }
}

void write_bar_plot(const std::filesystem::path& base, const BarPlotSpec& spec) {
  const int n = static_cast<int>(spec.values.size());
  const int W = std::max(360, 80 + n * 48), H = 360, ml = 60, mt = 40, mb = 60;
  const int ph = H - mt - mb;
  double lo = 0, hi = 0;
  for (double v : spec.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) hi = lo + 1;
  auto Y = [&](double v) { return mt + ph * (1.0 - (v - lo) / (hi - lo)); };

  auto bar_color = [&](int i) -> Rgb {
    if (spec.groups.empty()) return series_color(0);
    if (spec.groups[static_cast<size_t>(i)] == "background") return {120, 120, 120};
    if (spec.groups[static_cast<size_t>(i)] == "old") return {31, 119, 180};
    return {214, 39, 40};
  };

  {
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' font-family='sans-serif' font-size='12'>\n<rect width='" << W << "' height='"
        << H << "' fill='white'/>\n";
    svg << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>"
        << xml_escape(spec.title) << "</text>\n";
    svg << "<line x1='" << ml << "' y1='" << Y(0) << "' x2='" << W - 20 << "' y2='" << Y(0)
        << "' stroke='black'/>\n";
    for (int i = 0; i < n; ++i) {
      const int x = ml + 10 + i * 48;
      const double v = spec.values[static_cast<size_t>(i)];
      svg << "<rect x='" << x << "' y='" << std::min(Y(v), Y(0)) << "' width='28' height='"
          << std::fabs(Y(v) - Y(0)) << "' fill='" << rgb_hex(bar_color(i)) << "'/>\n";
      svg << "<text x='" << x + 14 << "' y='" << H - mb + 16 << "' text-anchor='middle'>"
          << xml_escape(i < static_cast<int>(spec.labels.size())
                            ? spec.labels[static_cast<size_t>(i)]
                            : std::to_string(i))
          << "</text>\n";
      svg << "<text x='" << x + 14 << "' y='" << std::min(Y(v), Y(0)) - 4
          << "' text-anchor='middle' font-size='10'>" << std::round(v * 1000) / 1000
          << "</text>\n";
    }
    svg << "</svg>\n";
    std::ofstream out(base.string() + ".svg");
    out << svg.str();
  }
  {
    Canvas c(W, H);
    c.line(ml, static_cast<int>(Y(0)), W - 20, static_cast<int>(Y(0)), {0, 0, 0});
    for (int i = 0; i < n; ++i) {
      const int x = ml + 10 + i * 48;
      const double v = spec.values[static_cast<size_t>(i)];
      c.rect(x, static_cast<int>(std::min(Y(v), Y(0))), x + 28,
             static_cast<int>(std::max(Y(v), Y(0))), bar_color(i));
    }
    c.save(base.string() + ".png");
  }
}

void write_heatmap(const std::filesystem::path& base, const HeatmapSpec& spec) {
  const int n = spec.n;
  CISS_CHECK(static_cast<int>(spec.values.size()) == n * n, shape, "heatmap must be square");
  const int cell = std::max(18, 220 / std::max(1, n));
  const int ml = 90, mt = 60;
  const int W = ml + n * cell + 30, H = mt + n * cell + 30;

  auto heat = [&](double v) -> Rgb {
    // white -> blue ramp
    v = std::clamp(v, 0.0, 1.0);
    return Rgb{static_cast<uint8_t>(255 - 215 * v), static_cast<uint8_t>(255 - 150 * v),
               static_cast<uint8_t>(255 - 65 * v)};
  };

  {
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' font-family='sans-serif' font-size='11'>\n<rect width='" << W << "' height='"
        << H << "' fill='white'/>\n";
    svg << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>"
        << xml_escape(spec.title) << "</text>\n";
    for (int i = 0; i < n; ++i) {
      const std::string name = i < static_cast<int>(spec.labels.size())
                                   ? spec.labels[static_cast<size_t>(i)]
                                   : std::to_string(i);
      svg << "<text x='" << ml - 6 << "' y='" << mt + i * cell + cell / 2 + 4
          << "' text-anchor='end'>" << xml_escape(name) << "</text>\n";
      svg << "<text x='" << ml + i * cell + cell / 2 << "' y='" << mt - 8
          << "' text-anchor='middle' transform='rotate(-45 " << ml + i * cell + cell / 2 << " "
          << mt - 8 << ")'>" << xml_escape(name) << "</text>\n";
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Rgb c = heat(spec.values[static_cast<size_t>(i) * n + j]);
        svg << "<rect x='" << ml + j * cell << "' y='" << mt + i * cell << "' width='" << cell
            << "' height='" << cell << "' fill='" << rgb_hex(c)
            << "' stroke='#cccccc' stroke-width='0.5'/>\n";
      }
    svg << "</svg>\n";
    std::ofstream out(base.string() + ".svg");
    out << svg.str();
  }
  {
    Canvas c(W, H);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        c.rect(ml + j * cell, mt + i * cell, ml + (j + 1) * cell - 1, mt + (i + 1) * cell - 1,
               heat(spec.values[static_cast<size_t>(i) * n + j]));
    c.save(base.string() + ".png");
  }
}

void write_image_grid(const std::filesystem::path& base,
                      const std::vector<std::vector<ImageU8>>& rows,
                      const std::vector<std::string>& column_titles) {
  CISS_CHECK(!rows.empty() && !rows[0].empty(), config, "image grid is empty");
  const int tile_h = rows[0][0].height, tile_w = rows[0][0].width;
  const int gap = 4, header = 18;
  const int cols = static_cast<int>(rows[0].size());
  const int W = gap + cols * (tile_w + gap);
  const int H = header + gap + static_cast<int>(rows.size()) * (tile_h + gap);
  Canvas c(W, H, {250, 250, 250});
  for (size_t r = 0; r < rows.size(); ++r) {
    CISS_CHECK(static_cast<int>(rows[r].size()) == cols, shape, "ragged image grid");
    for (int j = 0; j < cols; ++j) {
      const ImageU8& tile = rows[r][static_cast<size_t>(j)];
      CISS_CHECK(tile.channels == 3 && tile.width == tile_w && tile.height == tile_h, shape,
                 "grid tiles must share dimensions");
      const int x0 = gap + j * (tile_w + gap);
      const int y0 = header + gap + static_cast<int>(r) * (tile_h + gap);
      for (int y = 0; y < tile_h; ++y)
        for (int x = 0; x < tile_w; ++x) {
          const size_t i = (static_cast<size_t>(y) * tile_w + x) * 3;
          c.set(x0 + x, y0 + y, {tile.pixels[i], tile.pixels[i + 1], tile.pixels[i + 2]});
        }
    }
  }
  c.save(base.string() + ".png");

  // SVG wrapper with the column titles plus the raster grid
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' xmlns:xlink='http://www.w3.org/1999/xlink' "
         "width='"
      << W << "' height='" << H << "' font-family='sans-serif' font-size='11'>\n";
  for (int j = 0; j < cols && j < static_cast<int>(column_titles.size()); ++j)
    svg << "<text x='" << gap + j * (tile_w + gap) + tile_w / 2
        << "' y='14' text-anchor='middle'>" << xml_escape(column_titles[static_cast<size_t>(j)])
        << "</text>\n";
  svg << "<image x='0' y='0' width='" << W << "' height='" << H << "' xlink:href='"
      << base.filename().string() << ".png'/>\n</svg>\n";
  std::ofstream out(base.string() + ".svg");
  out << svg.str();
}

ImageU8 render_image(const Tensor& image) {
  const int h = image.dim(1), w = image.dim(2);
  ImageU8 out{w, h, 3, std::vector<uint8_t>(static_cast<size_t>(w) * h * 3)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.pixels[(static_cast<size_t>(y) * w + x) * 3 + c] = static_cast<uint8_t>(
            std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
  return out;
}

ImageU8 render_labels(const IntTensor& label, int ignore_id) {
  const int h = label.dim(0), w = label.dim(1);
  ImageU8 out{w, h, 3, std::vector<uint8_t>(static_cast<size_t>(w) * h * 3)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int v = label.at(y, x);
      const Rgb c = v == ignore_id ? Rgb{255, 255, 255} : class_color(v);
      const size_t i = (static_cast<size_t>(y) * w + x) * 3;
      out.pixels[i] = c.r;
      out.pixels[i + 1] = c.g;
      out.pixels[i + 2] = c.b;
    }
  return out;
}

} // namespace ciss
