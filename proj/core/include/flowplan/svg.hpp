#pragma once

#include <string>
#include <utility>
#include <vector>

namespace flowplan {

// Minimal SVG writer for trajectory plots and ablation line charts.
// Geometry is given in user coordinates; the document maps them to pixels
// with y flipped so larger y is up.
class SvgDocument {
 public:
  SvgDocument(double x_min, double y_min, double x_max, double y_max,
              int pixel_width = 640, int pixel_height = 640);

  void add_rect(double x, double y, double w, double h, const std::string& stroke,
                const std::string& fill, double stroke_width = 1.5);
  void add_circle(double cx, double cy, double r, const std::string& stroke,
                  const std::string& fill, double stroke_width = 1.5);
  void add_polyline(const std::vector<std::pair<double, double>>& points,
                    const std::string& stroke, double stroke_width = 2.0);
  void add_polygon(const std::vector<std::pair<double, double>>& points,
                   const std::string& stroke, const std::string& fill,
                   double stroke_width = 1.5);
  void add_line(double x1, double y1, double x2, double y2,
                const std::string& stroke, double stroke_width = 1.0);
  void add_text(double x, double y, const std::string& text, int font_size = 12,
                const std::string& fill = "#333333");
  void add_marker(double x, double y, const std::string& fill, double r = 4.0);

  std::string str() const;
  void save(const std::string& path) const;

 private:
  double to_px_x(double x) const;
  double to_px_y(double y) const;

  double x_min_, y_min_, x_max_, y_max_;
  int width_, height_;
  std::vector<std::string> elements_;
};

}  // namespace flowplan
