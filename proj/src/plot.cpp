#include "lstfuse/plot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace lstfuse {

std::vector<double> moving_average(std::span<const double> v, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving average window must be positive");
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= window) sum -= v[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

namespace {

using Color = std::array<std::uint8_t, 3>;

// 5x7 bitmap glyphs, one 5-bit row per entry, high bit on the left.
const std::map<char, std::array<std::uint8_t, 7>>& font() {
  static const std::map<char, std::array<std::uint8_t, 7>> f{
      {'0', {14, 17, 19, 21, 25, 17, 14}}, {'1', {4, 12, 4, 4, 4, 4, 14}},     {'2', {14, 17, 1, 2, 4, 8, 31}},
      {'3', {31, 2, 4, 2, 1, 17, 14}},     {'4', {2, 6, 10, 18, 31, 2, 2}},    {'5', {31, 16, 30, 1, 1, 17, 14}},
      {'6', {6, 8, 16, 30, 17, 17, 14}},   {'7', {31, 1, 2, 4, 8, 8, 8}},      {'8', {14, 17, 17, 14, 17, 17, 14}},
      {'9', {14, 17, 17, 15, 1, 2, 12}},   {'.', {0, 0, 0, 0, 0, 12, 12}},     {'-', {0, 0, 0, 31, 0, 0, 0}},
      {'+', {0, 4, 4, 31, 4, 4, 0}},       {'A', {14, 17, 17, 31, 17, 17, 17}}, {'D', {28, 18, 17, 17, 17, 18, 28}},
      {'E', {31, 16, 16, 30, 16, 16, 31}}, {'G', {14, 17, 16, 23, 17, 17, 15}}, {'L', {16, 16, 16, 16, 16, 16, 31}},
      {'M', {17, 27, 21, 21, 17, 17, 17}}, {'O', {14, 17, 17, 17, 17, 17, 14}}, {'P', {30, 17, 17, 30, 16, 16, 16}},
      {'R', {30, 17, 17, 30, 20, 18, 17}}, {'S', {15, 16, 16, 14, 1, 1, 30}},   {'T', {31, 4, 4, 4, 4, 4, 4}},
      {'V', {17, 17, 17, 17, 17, 10, 4}},  {'N', {17, 17, 25, 21, 19, 17, 17}}, {'I', {14, 4, 4, 4, 4, 4, 14}},
      {'C', {14, 17, 16, 16, 16, 17, 14}}, {'W', {17, 17, 17, 21, 21, 21, 10}}, {'X', {17, 17, 10, 4, 10, 17, 17}},
      {'H', {17, 17, 17, 31, 17, 17, 17}}, {'F', {31, 16, 16, 30, 16, 16, 16}}, {'U', {17, 17, 17, 17, 17, 17, 14}},
      {'Y', {17, 17, 10, 4, 4, 4, 4}},     {'K', {17, 18, 20, 24, 20, 18, 17}}, {'B', {30, 17, 17, 30, 17, 17, 30}},
  };
  return f;
}

void text(RgbImage& img, Index x, Index y, const std::string& s, Color c) {
  for (char ch : s) {
    const auto it = font().find(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    if (it != font().end()) {
      for (Index r = 0; r < 7; ++r) {
        for (Index k = 0; k < 5; ++k) {
          if ((it->second[static_cast<std::size_t>(r)] >> (4 - k)) & 1U) {
            const Index px = x + k, py = y + r;
            if (px >= 0 && py >= 0 && px < img.width && py < img.height) img.set(px, py, c);
          }
        }
      }
    }
    x += 6;
  }
}

void line(RgbImage& img, double x0, double y0, double x1, double y1, Color c) {
  const double steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1.0});
  for (double i = 0; i <= steps; ++i) {
    const auto px = static_cast<Index>(std::lround(x0 + (x1 - x0) * i / steps));
    const auto py = static_cast<Index>(std::lround(y0 + (y1 - y0) * i / steps));
    if (px >= 0 && py >= 0 && px < img.width && py < img.height) img.set(px, py, c);
  }
}

std::string tick_label(double v) {
  std::string s = fmt::format("{:.3g}", v);
  if (s == "-0") s = "0";
  return s;
}

struct Panel {
  Index left, top, right, bottom;
};

void draw_panel(RgbImage& img, const Panel& p, const std::vector<double>& steps, const std::vector<double>& raw,
                const std::vector<double>& smooth, const std::string& title, Color light, Color dark) {
  double lo = *std::min_element(raw.begin(), raw.end());
  double hi = *std::max_element(raw.begin(), raw.end());
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double s0 = steps.front();
  const double s1 = steps.size() > 1 ? steps.back() : s0 + 1.0;
  auto sx = [&](double s) { return p.left + (s - s0) / (s1 - s0) * static_cast<double>(p.right - p.left); };
  auto sy = [&](double v) { return p.bottom - (v - lo) / (hi - lo) * static_cast<double>(p.bottom - p.top); };

  const Color axis{40, 40, 40}, grid{225, 225, 225};
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = sy(v);
    line(img, static_cast<double>(p.left), y, static_cast<double>(p.right), y, grid);
    const std::string label = tick_label(v);
    text(img, p.left - 8 - 6 * static_cast<Index>(label.size()), static_cast<Index>(y) - 3, label, axis);
    const double s = s0 + (s1 - s0) * i / 4.0;
    const double x = sx(s);
    line(img, x, static_cast<double>(p.bottom), x, static_cast<double>(p.bottom + 4), axis);
    const std::string slabel = fmt::format("{}", static_cast<long long>(std::llround(s)));
    text(img, static_cast<Index>(x) - 3 * static_cast<Index>(slabel.size()), p.bottom + 8, slabel, axis);
  }
  line(img, static_cast<double>(p.left), static_cast<double>(p.top), static_cast<double>(p.left),
       static_cast<double>(p.bottom), axis);
  line(img, static_cast<double>(p.left), static_cast<double>(p.bottom), static_cast<double>(p.right),
       static_cast<double>(p.bottom), axis);
  for (std::size_t i = 1; i < raw.size(); ++i) line(img, sx(steps[i - 1]), sy(raw[i - 1]), sx(steps[i]), sy(raw[i]), light);
  for (std::size_t i = 1; i < smooth.size(); ++i) {
    line(img, sx(steps[i - 1]), sy(smooth[i - 1]), sx(steps[i]), sy(smooth[i]), dark);
    line(img, sx(steps[i - 1]), sy(smooth[i - 1]) + 1, sx(steps[i]), sy(smooth[i]) + 1, dark);
  }
  text(img, p.left + 8, p.top - 12, title, dark);
}

}  // namespace

RgbImage render_loss_curves(const LossTrace& trace, std::size_t window, Index width, Index height) {
  if (trace.records.empty()) throw std::invalid_argument("cannot plot an empty loss trace");
  if (width < 200 || height < 200) throw std::invalid_argument("plot is too small");
  std::vector<double> steps, g, d;
  for (const auto& r : trace.records) {
    steps.push_back(static_cast<double>(r.step));
    g.push_back(r.loss_g);
    d.push_back(r.loss_d);
  }
  RgbImage img(width, height);
  const Index left = 90, right = width - 20;
  const Index half = height / 2;
  draw_panel(img, {left, 24, right, half - 28}, steps, g, moving_average(g, window), "GENERATOR LOSS",
             {170, 200, 235}, {20, 80, 160});
  draw_panel(img, {left, half + 20, right, height - 36}, steps, d, moving_average(d, window), "DISCRIMINATOR LOSS",
             {240, 190, 160}, {190, 70, 20});
  text(img, (left + right) / 2 - 12, height - 12, "STEP", {40, 40, 40});
  return img;
}

void write_loss_plot(const std::filesystem::path& path, const LossTrace& trace, std::size_t window) {
  write_png(path, render_loss_curves(trace, window));
}

}  // namespace lstfuse
