#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ciss/image_io.hpp"
#include "ciss/tensor.hpp"

namespace ciss {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
};

// Fixed palette for class ids in rendered label/prediction maps.
Rgb class_color(int class_id);

struct Series {
  std::string name;
  std::vector<double> values;
};

struct LinePlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  double shade_until_x = -1.0; // x range [0, value] shaded (encoder region)
};

// Every plot is emitted twice: an SVG with axes and text labels and a PNG
// raster twin.
void write_line_plot(const std::filesystem::path& base_path_no_ext, const LinePlotSpec& spec);

struct BarPlotSpec {
  std::string title;
  std::vector<std::string> labels;
  std::vector<double> values;
  std::vector<std::string> groups; // optional, colors bars by group
};

void write_bar_plot(const std::filesystem::path& base_path_no_ext, const BarPlotSpec& spec);

struct HeatmapSpec {
  std::string title;
  std::vector<std::string> labels;   // row/col names
  std::vector<double> values;        // n*n, row-major, in [0,1]
  int n = 0;
};

void write_heatmap(const std::filesystem::path& base_path_no_ext, const HeatmapSpec& spec);

// Rows of image tiles (input / ground truth / predictions) composed into one
// PNG grid; an SVG wrapper referencing the PNG is written alongside.
void write_image_grid(const std::filesystem::path& base_path_no_ext,
                      const std::vector<std::vector<ImageU8>>& rows,
                      const std::vector<std::string>& column_titles);

ImageU8 render_image(const Tensor& image);                 // CHW [0,1] -> RGB
ImageU8 render_labels(const IntTensor& label, int ignore_id); // class ids -> palette

} // namespace ciss
