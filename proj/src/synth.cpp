#include "scrwkv/synth.hpp"

#include <array>

#include "scrwkv/kernels.hpp"

namespace scrwkv {
namespace {

struct Point {
  double x, y;
};

// Marks a w x w square of pixels around every point of a quadratic Bezier.
// Consecutive samples are < 0.5 px apart, so the stroke is 8-connected.
void draw_stroke(Tensor<float>& mask, Point p0, Point p1, Point p2, Index width) {
  const Index size = mask.dim(0);
  const double hull = std::hypot(p1.x - p0.x, p1.y - p0.y) + std::hypot(p2.x - p1.x, p2.y - p1.y);
  const Index samples = std::max<Index>(2, static_cast<Index>(std::ceil(hull * 4)));
  const Index lo = -(width - 1) / 2, hi = width / 2;
  for (Index i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(samples), u = 1 - t;
    const double x = u * u * p0.x + 2 * u * t * p1.x + t * t * p2.x;
    const double y = u * u * p0.y + 2 * u * t * p1.y + t * t * p2.y;
    const Index cx = static_cast<Index>(std::floor(x)), cy = static_cast<Index>(std::floor(y));
    for (Index dy = lo; dy <= hi; ++dy)
      for (Index dx = lo; dx <= hi; ++dx) {
        const Index px = cx + dx, py = cy + dy;
        if (px >= 0 && px < size && py >= 0 && py < size) mask[py * size + px] = 1.0f;
      }
  }
}

CrackSample make_sample(Index size, Rng& rng, const SynthOptions& opt) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto in_range = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  // Background: base grey, smooth low-frequency shading, fine grain.
  const double base = in_range(0.45, 0.75);
  Tensor<double> coarse = uniform<double>({1, 1, 5, 5}, rng, -0.08, 0.08);
  const Tensor<double> shading = bilinear_resize(coarse, size, size);
  const Tensor<double> grain = normal<double>({size, size}, rng, 0.02);
  std::array<double, 3> tint{};
  for (auto& t : tint) t = in_range(0.95, 1.05);

  CrackSample s;
  s.mask = Tensor<float>({size, size});
  const double margin = 2.0, span = static_cast<double>(size) - 2 * margin - 1;
  // Control points stay inside the image, so each stroke is never clipped.
  auto point = [&] { return Point{margin + span * unit(rng), margin + span * unit(rng)}; };
  do {
    s.mask = Tensor<float>({size, size});
    s.strokes = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(opt.max_strokes));
    for (Index k = 0; k < s.strokes; ++k) {
      Point p0 = point(), p2 = point();
      while (std::hypot(p2.x - p0.x, p2.y - p0.y) < size / 3.0) p2 = point();
      const Point p1 = point();
      const Index width =
          opt.min_width + static_cast<Index>(rng() % static_cast<std::uint64_t>(
                                                       opt.max_width - opt.min_width + 1));
      draw_stroke(s.mask, p0, p1, p2, width);
    }
  } while (s.mask.array().mean() >= 0.2f);

  const double depth = in_range(0.45, 0.7);
  s.image = Tensor<float>({3, size, size});
  for (Index i = 0; i < size * size; ++i) {
    double v = base + shading[i] + grain[i];
    if (s.mask[i] > 0) v *= 1 - depth;
    for (Index c = 0; c < 3; ++c)
      s.image[c * size * size + i] = static_cast<float>(std::clamp(v * tint[c], 0.0, 1.0));
  }
  return s;
}

}  // namespace

std::vector<CrackSample> synth_cracks(Index count, Index size, std::uint64_t seed,
                                      const SynthOptions& options) {
  if (size < 32) throw ShapeError("synth_cracks: size must be >= 32, got " + std::to_string(size));
  if (count < 0) throw ShapeError("synth_cracks: negative count");
  if (options.min_width < 1 || options.max_width < options.min_width || options.max_strokes < 1)
    throw ShapeError("synth_cracks: invalid stroke options");
  Rng rng(seed);
  std::vector<CrackSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) out.push_back(make_sample(size, rng, options));
  return out;
}

}  // namespace scrwkv
