#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace agpis {

// HxWx3 color image, values in [0,1], row-major with interleaved channels.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pix;  // height*width*3

  Image() = default;
  Image(int h, int w, double fill = 0.0) : height(h), width(w), pix(3ull * h * w, fill) {}

  double& at(int y, int x, int c) { return pix[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const {
    return pix[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool inside(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
};

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// h in [0,1), s,v in [0,1]
inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = h - std::floor(h);
  double hh = h * 6.0;
  int i = static_cast<int>(hh) % 6;
  double f = hh - std::floor(hh);
  double p = v * (1.0 - s);
  double q = v * (1.0 - s * f);
  double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  double mx = std::max({r, g, b});
  double mn = std::min({r, g, b});
  v = mx;
  double d = mx - mn;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 1e-12) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = (g - b) / d + (g < b ? 6.0 : 0.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h /= 6.0;
}

inline Image flip_horizontal(const Image& im) {
  Image out(im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = im.at(y, im.width - 1 - x, c);
  return out;
}

inline Image box_blur(const Image& im, int radius = 2) {
  Image out(im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      double acc[3] = {0, 0, 0};
      int count = 0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          int yy = std::clamp(y + dy, 0, im.height - 1);
          int xx = std::clamp(x + dx, 0, im.width - 1);
          for (int c = 0; c < 3; ++c) acc[c] += im.at(yy, xx, c);
          ++count;
        }
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = acc[c] / count;
    }
  return out;
}

inline Image shift_hue(const Image& im, double delta) {
  Image out(im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      double h, s, v, r, g, b;
      rgb_to_hsv(im.at(y, x, 0), im.at(y, x, 1), im.at(y, x, 2), h, s, v);
      hsv_to_rgb(h + delta, s, v, r, g, b);
      out.at(y, x, 0) = r;
      out.at(y, x, 1) = g;
      out.at(y, x, 2) = b;
    }
  return out;
}

// translate by (dy, dx), clamping samples at the border
inline Image translate(const Image& im, int dy, int dx) {
  Image out(im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      int yy = std::clamp(y - dy, 0, im.height - 1);
      int xx = std::clamp(x - dx, 0, im.width - 1);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = im.at(yy, xx, c);
    }
  return out;
}

// bilinear resample of an arbitrary sub-rectangle to out_h x out_w
inline Image resize_region(const Image& im, double ry, double rx, double rh, double rw,
                           int out_h, int out_w) {
  Image out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      double sy = ry + (y + 0.5) * rh / out_h - 0.5;
      double sx = rx + (x + 0.5) * rw / out_w - 0.5;
      int y0 = static_cast<int>(std::floor(sy));
      int x0 = static_cast<int>(std::floor(sx));
      double fy = sy - y0, fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        auto sample = [&](int yy, int xx) {
          yy = std::clamp(yy, 0, im.height - 1);
          xx = std::clamp(xx, 0, im.width - 1);
          return im.at(yy, xx, c);
        };
        double v = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                   fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
        out.at(y, x, c) = v;
      }
    }
  return out;
}

inline double pixel_l2_distance(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("pixel_l2_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.pix.size(); ++i) {
    double d = a.pix[i] - b.pix[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// binary PPM (P6), 8-bit
inline void write_ppm(const Image& im, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write image file: " + path);
  f << "P6\n" << im.width << " " << im.height << "\n255\n";
  std::vector<unsigned char> bytes(im.pix.size());
  for (std::size_t i = 0; i < im.pix.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(clamp01(im.pix[i]) * 255.0));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write on image file: " + path);
}

inline Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read image file: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("malformed PPM header in " + path);
  f.get();  // single whitespace after maxval
  Image im(h, w);
  std::vector<unsigned char> bytes(im.pix.size());
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw std::runtime_error("truncated PPM payload in " + path);
  for (std::size_t i = 0; i < bytes.size(); ++i) im.pix[i] = bytes[i] / 255.0;
  return im;
}

}  // namespace agpis
