#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "compshape/error.hpp"

namespace compshape {

// Integer grid position. Pixel (x, y) has its center at real coordinate (x, y).
struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
};

inline Vec2 toVec(Point p) { return {static_cast<double>(p.x), static_cast<double>(p.y)}; }

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double pointSegmentDistance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + t * ab);
}

using Polygon = std::vector<Vec2>;

// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw InvalidArgument("grid dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool contains(Point p) const noexcept { return contains(p.x, p.y); }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  Point position(std::size_t index) const noexcept {
    return {static_cast<int>(index % static_cast<std::size_t>(width_)),
            static_cast<int>(index / static_cast<std::size_t>(width_))};
  }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
  T& operator[](Point p) noexcept { return data_[index(p.x, p.y)]; }
  const T& operator[](Point p) const noexcept { return data_[index(p.x, p.y)]; }

  T& at(int x, int y) {
    if (!contains(x, y)) throw InvalidArgument("grid position out of range");
    return data_[index(x, y)];
  }
  const T& at(int x, int y) const {
    if (!contains(x, y)) throw InvalidArgument("grid position out of range");
    return data_[index(x, y)];
  }

  std::span<T> row(int y) noexcept {
    return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
  }
  std::span<const T> row(int y) const noexcept {
    return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
  }

  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool sameShape(const Grid& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Signed shoelace area. Positive for clockwise order in image coordinates (y down).
inline double signedArea(std::span<const Vec2> polygon) {
  double twice = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

inline double polygonArea(std::span<const Vec2> polygon) {
  return std::abs(signedArea(polygon));
}

inline double perimeter(std::span<const Vec2> polygon) {
  double total = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) total += distance(polygon[i], polygon[(i + 1) % n]);
  return total;
}

// Area centroid; falls back to the vertex mean for zero-area polygons.
inline Vec2 centroid(std::span<const Vec2> polygon) {
  const double area = signedArea(polygon);
  const std::size_t n = polygon.size();
  if (n == 0) return {};
  if (std::abs(area) < 1e-12) {
    Vec2 mean;
    for (const Vec2& p : polygon) mean = mean + p;
    return (1.0 / static_cast<double>(n)) * mean;
  }
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[(i + 1) % n];
    const double cross = a.x * b.y - b.x * a.y;
    cx += (a.x + b.x) * cross;
    cy += (a.y + b.y) * cross;
  }
  return {cx / (6.0 * area), cy / (6.0 * area)};
}

// Even-odd scanline fill. A pixel is inside when its center lies in the
// half-open span [x_enter, x_exit) of a scanline crossing pair. Writes
// `value` into `target` for every covered pixel and returns the count.
template <typename T>
std::size_t fillPolygon(std::span<const Vec2> polygon, Grid<T>& target, T value) {
  if (polygon.size() < 3) {
    throw InvalidArgument("polygon needs at least 3 vertices");
  }
  std::size_t filled = 0;
  std::vector<double> crossings;
  const std::size_t n = polygon.size();
  for (int y = 0; y < target.height(); ++y) {
    crossings.clear();
    const double sy = static_cast<double>(y);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& a = polygon[i];
      const Vec2& b = polygon[(i + 1) % n];
      const bool upward = a.y <= sy && sy < b.y;
      const bool downward = b.y <= sy && sy < a.y;
      if (upward || downward) {
        crossings.push_back(a.x + (sy - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const int first = std::max(0, static_cast<int>(std::ceil(crossings[k])));
      const int last =
          std::min(target.width(), static_cast<int>(std::ceil(crossings[k + 1])));
      for (int x = first; x < last; ++x) {
        target(x, y) = value;
        ++filled;
      }
    }
  }
  return filled;
}

inline Grid<std::uint8_t> rasterize(std::span<const Vec2> polygon, int width, int height) {
  Grid<std::uint8_t> mask(width, height, 0);
  fillPolygon<std::uint8_t>(polygon, mask, 1);
  return mask;
}

}  // namespace compshape
