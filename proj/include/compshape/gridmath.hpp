#pragma once

// Constrained generalized distance transform.
//
//   gamma(x) = min_{l(x) <= z <= u(x)} w * (x - h(z))^2 + g(z),   x, z in 1..n
//
// with h, l, u non-decreasing. Each z contributes a parabola that is valid
// only on the x-interval [u^-1(z), l^-1(z)]; both interval ends are
// non-decreasing in z, which is what makes a single left-to-right envelope
// sweep exact.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/geometry.hpp"

namespace compshape::gridmath {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Argmin sentinel for positions with no feasible z.
inline constexpr int kNoArgmin = 0;

// l(x) = slope * x + offset, slope >= 0.
struct AffineBound {
  std::int64_t slope = 0;
  std::int64_t offset = 0;

  std::int64_t operator()(std::int64_t x) const noexcept { return slope * x + offset; }
};

struct DtProblem1D {
  std::vector<double> g;
  // h(z) = z + shift unless `roots` holds one explicit value per z.
  double shift = 0.0;
  std::vector<double> roots;
  double weight = 1.0;
  AffineBound lower{0, std::numeric_limits<std::int32_t>::min()};
  AffineBound upper{0, std::numeric_limits<std::int32_t>::max()};

  int size() const noexcept { return static_cast<int>(g.size()); }
};

struct DtResult1D {
  std::vector<double> gamma;
  std::vector<int> argmin;

  bool feasible(int x) const { return argmin[static_cast<std::size_t>(x - 1)] != kNoArgmin; }
};

// Instrumentation of one or more envelope sweeps. The break counters follow
// the three ways a new parabola can meet the current rightmost one.
struct DtTrace {
  std::int64_t pushes = 0;
  std::int64_t pops = 0;             // parabola evicted from the envelope
  std::int64_t continuousBreaks = 0; // takeover at the intersection point
  std::int64_t clippedBreaks = 0;    // takeover delayed to u^-1(z): jump
  std::int64_t expiryBreaks = 0;     // previous parabola expired first: jump
  std::int64_t gaps = 0;             // uncovered positions between parabolas
  std::int64_t equalRoots = 0;       // w * (h(z) - h(k)) == 0
  std::int64_t neverOptimal = 0;     // admitted parabola that wins nowhere
  std::int64_t calls = 0;
  std::int64_t positions = 0;
  std::int64_t boundViolations = 0;  // calls with pushes + pops > 2n

  std::int64_t envelopeOps() const noexcept { return pushes + pops; }

  DtTrace& operator+=(const DtTrace& o) noexcept {
    pushes += o.pushes;
    pops += o.pops;
    continuousBreaks += o.continuousBreaks;
    clippedBreaks += o.clippedBreaks;
    expiryBreaks += o.expiryBreaks;
    gaps += o.gaps;
    equalRoots += o.equalRoots;
    neverOptimal += o.neverOptimal;
    calls += o.calls;
    positions += o.positions;
    boundViolations += o.boundViolations;
    return *this;
  }
};

namespace detail {

inline std::int64_t floorDiv(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t ceilDiv(std::int64_t a, std::int64_t b) { return -floorDiv(-a, b); }

// First x in [1, n] with u(x) >= z, or n + 1.
inline int firstValid(AffineBound upper, int z, int n) {
  if (upper.slope == 0) return upper.offset >= z ? 1 : n + 1;
  const std::int64_t x = ceilDiv(static_cast<std::int64_t>(z) - upper.offset, upper.slope);
  if (x > n) return n + 1;
  return static_cast<int>(std::max<std::int64_t>(x, 1));
}

// Last x in [1, n] with l(x) <= z, or 0.
inline int lastValid(AffineBound lower, int z, int n) {
  if (lower.slope == 0) return lower.offset <= z ? n : 0;
  const std::int64_t x = floorDiv(static_cast<std::int64_t>(z) - lower.offset, lower.slope);
  if (x < 1) return 0;
  return static_cast<int>(std::min<std::int64_t>(x, n));
}

struct ShiftRoot {
  double shift;
  double operator()(int z) const noexcept { return static_cast<double>(z) + shift; }
};

struct TableRoot {
  std::span<const double> roots;
  double operator()(int z) const noexcept { return roots[static_cast<std::size_t>(z - 1)]; }
};

}  // namespace detail

// Scratch buffers reused across calls in hot loops.
struct DtWorkspace {
  std::vector<int> roots;
  std::vector<int> starts;
  std::vector<int> firsts;  // validity range of each stacked parabola
  std::vector<int> lasts;
};

// Core sweep over spans. `g`, `gamma`, `argmin` have length n; index i holds
// position i + 1. Callers guarantee weight >= 0 and non-decreasing roots.
template <typename RootFn>
void solveInto(std::span<const double> g, RootFn root, double weight, AffineBound lower,
               AffineBound upper, std::span<double> gamma, std::span<int> argmin,
               DtWorkspace& ws, DtTrace& trace) {
  using detail::firstValid;
  using detail::lastValid;
  const int n = static_cast<int>(g.size());
  auto& zs = ws.roots;
  auto& starts = ws.starts;
  auto& firsts = ws.firsts;
  auto& lasts = ws.lasts;
  zs.clear();
  starts.clear();
  firsts.clear();
  lasts.clear();
  ++trace.calls;
  trace.positions += n;
  const std::int64_t opsBefore = trace.envelopeOps();

  auto cost = [&](int z) { return g[static_cast<std::size_t>(z - 1)]; };

  // First integer x at which parabola z is strictly better than parabola k or
  // k has expired, clamped below by z's own validity start. Ties stay with
  // the smaller z.
  enum class Break { kContinuous, kClipped, kExpiry, kGap };
  auto takeover = [&](int z, int k, int kLast, int zFirst, Break& kind) -> int {
    const double rise = weight * (root(z) - root(k));
    double s;
    if (rise == 0.0) {
      ++trace.equalRoots;
      s = cost(z) < cost(k) ? -kInf : kInf;
    } else {
      s = (cost(z) - cost(k)) / (2.0 * rise) + 0.5 * (root(z) + root(k));
    }
    int crossing;
    if (!(s > -3.0)) {  // also catches NaN from inf - inf
      crossing = -2;
    } else if (s >= n + 2.0) {
      crossing = n + 2;
    } else {
      int f = static_cast<int>(s);
      if (f > s) --f;
      crossing = std::max(-2, f + 1);
    }
    if (zFirst > kLast + 1) {
      kind = Break::kGap;
      return zFirst;
    }
    if (crossing > kLast + 1) {
      kind = Break::kExpiry;
      return kLast + 1;
    }
    if (zFirst > crossing) {
      kind = Break::kClipped;
      return zFirst;
    }
    kind = Break::kContinuous;
    return crossing;
  };

  for (int z = 1; z <= n; ++z) {
    if (!(cost(z) < kInf)) continue;
    const int zFirst = firstValid(upper, z, n);
    const int zLast = lastValid(lower, z, n);
    if (zFirst > zLast) continue;

    int start = zFirst;
    Break kind = Break::kContinuous;
    bool compared = false;
    while (!zs.empty()) {
      const int t = takeover(z, zs.back(), lasts.back(), zFirst, kind);
      compared = true;
      if (t <= starts.back()) {
        zs.pop_back();
        starts.pop_back();
        firsts.pop_back();
        lasts.pop_back();
        ++trace.pops;
        start = zFirst;
        compared = false;
        continue;
      }
      start = t;
      break;
    }
    if (start > zLast) {
      ++trace.neverOptimal;
      continue;
    }
    if (compared) {
      switch (kind) {
        case Break::kContinuous: ++trace.continuousBreaks; break;
        case Break::kClipped: ++trace.clippedBreaks; break;
        case Break::kExpiry: ++trace.expiryBreaks; break;
        case Break::kGap: ++trace.gaps; break;
      }
    }
    zs.push_back(z);
    starts.push_back(start);
    firsts.push_back(zFirst);
    lasts.push_back(zLast);
    ++trace.pushes;
  }

  if (trace.envelopeOps() - opsBefore > 2 * static_cast<std::int64_t>(n)) ++trace.boundViolations;

  // Fill. At each x the owning segment and both neighbours are evaluated,
  // which settles jumps at discontinuous breakpoints and any rounding of the
  // real-valued intersection without case analysis.
  const int segments = static_cast<int>(zs.size());
  int j = 0;
  for (int x = 1; x <= n; ++x) {
    while (j + 1 < segments && starts[static_cast<std::size_t>(j + 1)] <= x) ++j;
    double best = kInf;
    int bestZ = kNoArgmin;
    for (int c : {j - 1, j, j + 1}) {
      if (c < 0 || c >= segments) continue;
      const auto ci = static_cast<std::size_t>(c);
      if (x < firsts[ci] || x > lasts[ci]) continue;
      const int z = zs[ci];
      const double d = static_cast<double>(x) - root(z);
      const double value = weight * d * d + cost(z);
      if (value < best) {
        best = value;
        bestZ = z;
      }
    }
    gamma[static_cast<std::size_t>(x - 1)] = best;
    argmin[static_cast<std::size_t>(x - 1)] = bestZ;
  }
}

inline void validate(const DtProblem1D& problem) {
  const int n = problem.size();
  if (n < 1) throw InvalidArgument("DtProblem1D: n must be >= 1");
  if (!(problem.weight >= 0.0) || !std::isfinite(problem.weight)) {
    throw InvalidArgument("DtProblem1D: weight must be finite and >= 0");
  }
  if (problem.lower.slope < 0 || problem.upper.slope < 0) {
    throw InvalidArgument("DtProblem1D: constraint bounds must be non-decreasing");
  }
  if (!std::isfinite(problem.shift)) throw InvalidArgument("DtProblem1D: shift must be finite");
  for (int z = 0; z < n; ++z) {
    const double v = problem.g[static_cast<std::size_t>(z)];
    if (std::isnan(v) || v == -kInf) {
      throw InvalidArgument("DtProblem1D: g(" + std::to_string(z + 1) +
                            ") must be finite or +infinity");
    }
  }
  if (!problem.roots.empty()) {
    if (static_cast<int>(problem.roots.size()) != n) {
      throw InvalidArgument("DtProblem1D: roots must have one entry per position");
    }
    for (int z = 0; z < n; ++z) {
      if (!std::isfinite(problem.roots[static_cast<std::size_t>(z)]) ||
          (z > 0 && problem.roots[static_cast<std::size_t>(z)] <
                        problem.roots[static_cast<std::size_t>(z - 1)])) {
        throw InvalidArgument("DtProblem1D: roots must be finite and non-decreasing");
      }
    }
  }
}

// O(n) exact solver.
inline DtResult1D cgdt1d(const DtProblem1D& problem, DtTrace* trace = nullptr) {
  validate(problem);
  const std::size_t n = problem.g.size();
  DtResult1D result{std::vector<double>(n), std::vector<int>(n)};
  DtWorkspace ws;
  DtTrace local;
  if (problem.roots.empty()) {
    solveInto(std::span<const double>(problem.g), detail::ShiftRoot{problem.shift},
              problem.weight, problem.lower, problem.upper, result.gamma, result.argmin, ws,
              local);
  } else {
    solveInto(std::span<const double>(problem.g), detail::TableRoot{problem.roots},
              problem.weight, problem.lower, problem.upper, result.gamma, result.argmin, ws,
              local);
  }
  if (trace != nullptr) *trace += local;
  return result;
}

// O(n^2) exhaustive scan; ties resolve to the smallest z.
inline DtResult1D cgdtBruteForce1d(const DtProblem1D& problem) {
  validate(problem);
  const int n = problem.size();
  DtResult1D result{std::vector<double>(static_cast<std::size_t>(n), kInf),
                    std::vector<int>(static_cast<std::size_t>(n), kNoArgmin)};
  for (int x = 1; x <= n; ++x) {
    const std::int64_t lo = std::max<std::int64_t>(1, problem.lower(x));
    const std::int64_t hi = std::min<std::int64_t>(n, problem.upper(x));
    for (std::int64_t z = lo; z <= hi; ++z) {
      const double gz = problem.g[static_cast<std::size_t>(z - 1)];
      if (!(gz < kInf)) continue;
      const double h = problem.roots.empty()
                           ? static_cast<double>(z) + problem.shift
                           : problem.roots[static_cast<std::size_t>(z - 1)];
      const double d = static_cast<double>(x) - h;
      const double value = problem.weight * d * d + gz;
      if (value < result.gamma[static_cast<std::size_t>(x - 1)]) {
        result.gamma[static_cast<std::size_t>(x - 1)] = value;
        result.argmin[static_cast<std::size_t>(x - 1)] = static_cast<int>(z);
      }
    }
  }
  return result;
}

inline constexpr std::int32_t kNoPosition = -1;

struct PairwiseResult {
  Grid<double> energy;
  // Linear grid index of the minimizing first-child position, or kNoPosition.
  Grid<std::int32_t> argFirst;
  DtTrace trace;
};

// Exact minimization over first-child positions S1 of
//   4 wx (x - x1 - dx/2)^2 + 4 wy (y - y1 - dy/2)^2 + first(S1)
// subject to the second child 2S - S1 lying in the grid. Rows first, then
// columns, each a constrained transform with l(x) = 2x - W, u(x) = 2x - 1.
inline PairwiseResult pairwiseMin2d(const Grid<double>& first, double wx, double wy, double dx,
                                    double dy) {
  if (!(wx >= 0.0) || !std::isfinite(wx)) {
    throw InvalidArgument("pairwiseMin2d: deformation weight wx must be finite and >= 0");
  }
  if (!(wy >= 0.0) || !std::isfinite(wy)) {
    throw InvalidArgument("pairwiseMin2d: deformation weight wy must be finite and >= 0");
  }
  if (!std::isfinite(dx) || !std::isfinite(dy)) {
    throw InvalidArgument("pairwiseMin2d: offsets must be finite");
  }
  const int width = first.width();
  const int height = first.height();
  PairwiseResult out{Grid<double>(width, height, kInf),
                     Grid<std::int32_t>(width, height, kNoPosition), {}};
  if (first.empty()) return out;

  DtWorkspace ws;
  Grid<double> rowEnergy(width, height);
  Grid<int> rowArg(width, height);
  const AffineBound rowLower{2, -static_cast<std::int64_t>(width)};
  const AffineBound rowUpper{2, -1};
  for (int y = 0; y < height; ++y) {
    solveInto(first.row(y), detail::ShiftRoot{dx / 2.0}, 4.0 * wx, rowLower, rowUpper,
              rowEnergy.row(y), rowArg.row(y), ws, out.trace);
  }

  const AffineBound colLower{2, -static_cast<std::int64_t>(height)};
  const AffineBound colUpper{2, -1};
  std::vector<double> column(static_cast<std::size_t>(height));
  std::vector<double> colEnergy(static_cast<std::size_t>(height));
  std::vector<int> colArg(static_cast<std::size_t>(height));
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) column[static_cast<std::size_t>(y)] = rowEnergy(x, y);
    solveInto(std::span<const double>(column), detail::ShiftRoot{dy / 2.0}, 4.0 * wy, colLower,
              colUpper, std::span<double>(colEnergy), std::span<int>(colArg), ws, out.trace);
    for (int y = 0; y < height; ++y) {
      const int y1 = colArg[static_cast<std::size_t>(y)];
      if (y1 == kNoArgmin) continue;
      const int x1 = rowArg(x, y1 - 1);
      out.energy(x, y) = colEnergy[static_cast<std::size_t>(y)];
      out.argFirst(x, y) = static_cast<std::int32_t>(first.index(x1 - 1, y1 - 1));
    }
  }
  return out;
}

}  // namespace compshape::gridmath
