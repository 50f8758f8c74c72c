#include "corefd/image.hpp"

#include <algorithm>
#include <cmath>

#include "corefd/errors.hpp"

namespace corefd {

bool Image::valid() const {
  if (pixels.size() != height * width * 3) return false;
  return std::all_of(pixels.begin(), pixels.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double frac;
};

Tap make_tap(double pos, std::size_t n) {
  const double hi = static_cast<double>(n - 1);
  pos = std::clamp(pos, 0.0, hi);
  const auto i0 = static_cast<std::size_t>(std::floor(pos));
  const std::size_t i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, pos - static_cast<double>(i0)};
}

}  // namespace

double sample_bilinear(const Image& img, double y, double x, std::size_t ch) {
  const Tap ty = make_tap(y, img.height);
  const Tap tx = make_tap(x, img.width);
  const double a = img.at(ty.i0, tx.i0, ch);
  const double b = img.at(ty.i0, tx.i1, ch);
  const double c = img.at(ty.i1, tx.i0, ch);
  const double d = img.at(ty.i1, tx.i1, ch);
  const double top = a + (b - a) * tx.frac;
  const double bottom = c + (d - c) * tx.frac;
  return top + (bottom - top) * ty.frac;
}

Image resample_window(const Image& img, const Window& window, std::size_t out_h, std::size_t out_w) {
  if (img.height == 0 || img.width == 0) throw ShapeError("resample_window: empty image");
  Image out(out_h, out_w);
  const double sy = window.height / static_cast<double>(out_h);
  const double sx = window.width / static_cast<double>(out_w);
  std::vector<Tap> xs(out_w);
  for (std::size_t c = 0; c < out_w; ++c) {
    xs[c] = make_tap(window.left + (static_cast<double>(c) + 0.5) * sx - 0.5, img.width);
  }
  for (std::size_t r = 0; r < out_h; ++r) {
    const Tap ty = make_tap(window.top + (static_cast<double>(r) + 0.5) * sy - 0.5, img.height);
    for (std::size_t c = 0; c < out_w; ++c) {
      const Tap& tx = xs[c];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double a = img.at(ty.i0, tx.i0, ch);
        const double b = img.at(ty.i0, tx.i1, ch);
        const double cc = img.at(ty.i1, tx.i0, ch);
        const double d = img.at(ty.i1, tx.i1, ch);
        const double top = a + (b - a) * tx.frac;
        const double bottom = cc + (d - cc) * tx.frac;
        out.at(r, c, ch) = std::clamp(top + (bottom - top) * ty.frac, 0.0, 1.0);
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  return resample_window(img, {0.0, 0.0, static_cast<double>(img.height), static_cast<double>(img.width)},
                         out_h, out_w);
}

std::vector<double> resize_map(const std::vector<double>& map, std::size_t h, std::size_t w, std::size_t out_h,
                               std::size_t out_w) {
  if (map.size() != h * w || h == 0 || w == 0) throw ShapeError("resize_map: map size mismatch");
  std::vector<double> out(out_h * out_w);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    const Tap ty = make_tap((static_cast<double>(r) + 0.5) * sy - 0.5, h);
    for (std::size_t c = 0; c < out_w; ++c) {
      const Tap tx = make_tap((static_cast<double>(c) + 0.5) * sx - 0.5, w);
      const double a = map[ty.i0 * w + tx.i0];
      const double b = map[ty.i0 * w + tx.i1];
      const double cc = map[ty.i1 * w + tx.i0];
      const double d = map[ty.i1 * w + tx.i1];
      const double top = a + (b - a) * tx.frac;
      const double bottom = cc + (d - cc) * tx.frac;
      out[r * out_w + c] = top + (bottom - top) * ty.frac;
    }
  }
  return out;
}

ndgrad::Tensor to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("to_batch: no images");
  const std::size_t H = images.front()->height, W = images.front()->width;
  ndgrad::Tensor out({images.size(), 3, H, W});
  std::span<double> d = out.data();
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& img = *images[b];
    if (img.height != H || img.width != W) throw ShapeError("to_batch: images differ in size");
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double* plane = d.data() + (b * 3 + ch) * H * W;
      for (std::size_t p = 0; p < H * W; ++p) plane[p] = img.pixels[p * 3 + ch];
    }
  }
  return out;
}

double mean_brightness(const Image& img) {
  double acc = 0.0;
  for (const double v : img.pixels) acc += v;
  return img.pixels.empty() ? 0.0 : acc / static_cast<double>(img.pixels.size());
}

}  // namespace corefd
