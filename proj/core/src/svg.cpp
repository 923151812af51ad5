#include "flowplan/svg.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowplan {

namespace {
std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}
}  // namespace

SvgDocument::SvgDocument(double x_min, double y_min, double x_max, double y_max,
                         int pixel_width, int pixel_height)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max),
      width_(pixel_width), height_(pixel_height) {
  if (!(x_max > x_min) || !(y_max > y_min)) {
    throw std::invalid_argument("SvgDocument: empty extent");
  }
}

double SvgDocument::to_px_x(double x) const {
  return (x - x_min_) / (x_max_ - x_min_) * width_;
}

double SvgDocument::to_px_y(double y) const {
  return height_ - (y - y_min_) / (y_max_ - y_min_) * height_;
}

void SvgDocument::add_rect(double x, double y, double w, double h,
                           const std::string& stroke, const std::string& fill,
                           double stroke_width) {
  std::ostringstream el;
  el << "<rect x=\"" << fmt(to_px_x(x)) << "\" y=\"" << fmt(to_px_y(y + h))
     << "\" width=\"" << fmt(w / (x_max_ - x_min_) * width_) << "\" height=\""
     << fmt(h / (y_max_ - y_min_) * height_) << "\" stroke=\"" << stroke
     << "\" fill=\"" << fill << "\" stroke-width=\"" << stroke_width << "\"/>";
  elements_.push_back(el.str());
}

void SvgDocument::add_circle(double cx, double cy, double r, const std::string& stroke,
                             const std::string& fill, double stroke_width) {
  std::ostringstream el;
  el << "<circle cx=\"" << fmt(to_px_x(cx)) << "\" cy=\"" << fmt(to_px_y(cy))
     << "\" r=\"" << fmt(r / (x_max_ - x_min_) * width_) << "\" stroke=\"" << stroke
     << "\" fill=\"" << fill << "\" stroke-width=\"" << stroke_width << "\"/>";
  elements_.push_back(el.str());
}

void SvgDocument::add_polyline(const std::vector<std::pair<double, double>>& points,
                               const std::string& stroke, double stroke_width) {
  std::ostringstream el;
  el << "<polyline points=\"";
  for (const auto& [x, y] : points) {
    el << fmt(to_px_x(x)) << "," << fmt(to_px_y(y)) << " ";
  }
  el << "\" stroke=\"" << stroke << "\" fill=\"none\" stroke-width=\""
     << stroke_width << "\"/>";
  elements_.push_back(el.str());
}

void SvgDocument::add_polygon(const std::vector<std::pair<double, double>>& points,
                              const std::string& stroke, const std::string& fill,
                              double stroke_width) {
  std::ostringstream el;
  el << "<polygon points=\"";
  for (const auto& [x, y] : points) {
    el << fmt(to_px_x(x)) << "," << fmt(to_px_y(y)) << " ";
  }
  el << "\" stroke=\"" << stroke << "\" fill=\"" << fill << "\" stroke-width=\""
     << stroke_width << "\"/>";
  elements_.push_back(el.str());
}

void SvgDocument::add_line(double x1, double y1, double x2, double y2,
                           const std::string& stroke, double stroke_width) {
  std::ostringstream el;
  el << "<line x1=\"" << fmt(to_px_x(x1)) << "\" y1=\"" << fmt(to_px_y(y1))
     << "\" x2=\"" << fmt(to_px_x(x2)) << "\" y2=\"" << fmt(to_px_y(y2))
     << "\" stroke=\"" << stroke << "\" stroke-width=\"" << stroke_width << "\"/>";
  elements_.push_back(el.str());
}

void SvgDocument::add_text(double x, double y, const std::string& text,
                           int font_size, const std::string& fill) {
  std::ostringstream el;
  el << "<text x=\"" << fmt(to_px_x(x)) << "\" y=\"" << fmt(to_px_y(y))
     << "\" font-size=\"" << font_size << "\" fill=\"" << fill
     << "\" font-family=\"sans-serif\">" << text << "</text>";
  elements_.push_back(el.str());
}

void SvgDocument::add_marker(double x, double y, const std::string& fill, double r) {
  std::ostringstream el;
  el << "<circle cx=\"" << fmt(to_px_x(x)) << "\" cy=\"" << fmt(to_px_y(y))
     << "\" r=\"" << r << "\" fill=\"" << fill << "\"/>";
  elements_.push_back(el.str());
}

std::string SvgDocument::str() const {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_
      << "\" height=\"" << height_ << "\" viewBox=\"0 0 " << width_ << " "
      << height_ << "\">\n";
  for (const auto& el : elements_) out << "  " << el << "\n";
  out << "</svg>\n";
  return out.str();
}

void SvgDocument::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write SVG: " + path);
  out << str();
}

}  // namespace flowplan
