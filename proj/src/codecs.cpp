#include "prepguard/codecs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace prepguard {

namespace {

// Standard JPEG luminance table, applied to every channel.
constexpr std::array<int, 64> kJpegBase = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

// Orthonormal DCT-II basis matrix: C[u][x] = a(u) cos((2x+1) u pi / 2N).
template <int N>
struct DctBasis {
  double c[N][N];
  DctBasis() {
    const double pi = 3.14159265358979323846;
    for (int u = 0; u < N; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / N) : std::sqrt(2.0 / N);
      for (int x = 0; x < N; ++x)
        c[u][x] = a * std::cos((2 * x + 1) * u * pi / (2.0 * N));
    }
  }
};

template <int N>
void dct2(const DctBasis<N>& b, const double in[N][N], double out[N][N]) {
  double tmp[N][N];
  for (int y = 0; y < N; ++y)
    for (int v = 0; v < N; ++v) {
      double acc = 0.0;
      for (int x = 0; x < N; ++x) acc += in[y][x] * b.c[v][x];
      tmp[y][v] = acc;
    }
  for (int u = 0; u < N; ++u)
    for (int v = 0; v < N; ++v) {
      double acc = 0.0;
      for (int y = 0; y < N; ++y) acc += b.c[u][y] * tmp[y][v];
      out[u][v] = acc;
    }
}

template <int N>
void idct2(const DctBasis<N>& b, const double in[N][N], double out[N][N]) {
  double tmp[N][N];
  for (int u = 0; u < N; ++u)
    for (int x = 0; x < N; ++x) {
      double acc = 0.0;
      for (int v = 0; v < N; ++v) acc += in[u][v] * b.c[v][x];
      tmp[u][x] = acc;
    }
  for (int y = 0; y < N; ++y)
    for (int x = 0; x < N; ++x) {
      double acc = 0.0;
      for (int u = 0; u < N; ++u) acc += b.c[u][y] * tmp[u][x];
      out[y][x] = acc;
    }
}

// Block round-trip in the 0..255 domain: level shift, DCT, quantize with
// round-half-away-from-zero, dequantize, inverse DCT, unshift. Edge blocks
// read replicate-padded samples and write only in-range pixels.
template <int N>
void block_roundtrip_channel(const ImageTensor& img, int ch, const QuantTable& q,
                             ImageTensor& out) {
  static const DctBasis<N> basis;
  const int h = img.height, w = img.width;
  double block[N][N], coef[N][N], rec[N][N];
  for (int by = 0; by < h; by += N) {
    for (int bx = 0; bx < w; bx += N) {
      for (int y = 0; y < N; ++y) {
        const int sy = std::min(by + y, h - 1);
        for (int x = 0; x < N; ++x) {
          const int sx = std::min(bx + x, w - 1);
          block[y][x] = img.at(sy, sx, ch) * 255.0 - 128.0;
        }
      }
      dct2<N>(basis, block, coef);
      for (int u = 0; u < N; ++u)
        for (int v = 0; v < N; ++v) {
          const double step = static_cast<double>(q.steps[static_cast<std::size_t>(u * N + v)]);
          coef[u][v] = std::round(coef[u][v] / step) * step;
        }
      idct2<N>(basis, coef, rec);
      for (int y = 0; y < N && by + y < h; ++y)
        for (int x = 0; x < N && bx + x < w; ++x)
          out.at(by + y, bx + x, ch) =
              std::min(255.0, std::max(0.0, rec[y][x] + 128.0)) / 255.0;
    }
  }
}

int filter_threshold(int qf) { return 2 + (100 - qf) / 10; }

}  // namespace

QuantTable jpeg_quant_table(int qf) {
  QualityFactor q(qf);
  const int scale = q.value < 50 ? 5000 / std::max(1, q.value) : 200 - 2 * q.value;
  QuantTable t;
  t.block = 8;
  t.steps.resize(64);
  for (int i = 0; i < 64; ++i) {
    const int s = (kJpegBase[static_cast<std::size_t>(i)] * scale + 50) / 100;
    t.steps[static_cast<std::size_t>(i)] = std::clamp(s, 1, 255);
  }
  return t;
}

QuantTable webp_quant_table(int qf) {
  QualityFactor q(qf);
  const int ac = std::max<long>(1, std::lround(1.0 + (100 - q.value) * 0.63));
  const int dc = std::max(1, (ac + 1) / 2);
  QuantTable t;
  t.block = 4;
  t.steps.assign(16, std::clamp(ac, 1, 255));
  t.steps[0] = std::clamp(dc, 1, 255);
  return t;
}

ImageTensor jpeg_like_roundtrip(const ImageTensor& img, int qf) {
  const QuantTable q = jpeg_quant_table(qf);
  ImageTensor out(img.height, img.width, img.channels);
  for (int ch = 0; ch < img.channels; ++ch) block_roundtrip_channel<8>(img, ch, q, out);
  return out;
}

ImageTensor webp_like_roundtrip(const ImageTensor& img, int qf) {
  const QuantTable q = webp_quant_table(qf);
  ImageTensor out(img.height, img.width, img.channels);
  for (int ch = 0; ch < img.channels; ++ch) block_roundtrip_channel<4>(img, ch, q, out);
  return deblock_edges(out, qf);
}

ImageTensor deblock_edges(const ImageTensor& img, int qf) {
  QualityFactor check(qf);
  const double t = static_cast<double>(filter_threshold(qf));
  ImageTensor out = img;
  const int h = out.height, w = out.width, nc = out.channels;
  // 255-domain working copy per channel; the pixel line p1 p0 | q0 q1
  // straddles the boundary. Lines missing a tap are left alone.
  auto filter_line = [&](double& p1, double& p0, double& q0, double& q1) {
    if (std::fabs(p0 - q0) > t) return;
    const double a = 3.0 * (q0 - p0) + (p1 - q1);
    double d = std::round(a / 8.0);
    d = std::min(t, std::max(-t, d));
    p0 = std::min(255.0, std::max(0.0, p0 + d));
    q0 = std::min(255.0, std::max(0.0, q0 - d));
  };
  for (int ch = 0; ch < nc; ++ch) {
    std::vector<double> plane(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        plane[static_cast<std::size_t>(y) * w + x] = out.at(y, x, ch) * 255.0;
    for (int x = 4; x < w; x += 4) {
      if (x + 1 >= w) break;
      for (int y = 0; y < h; ++y) {
        double* row = &plane[static_cast<std::size_t>(y) * w];
        filter_line(row[x - 2], row[x - 1], row[x], row[x + 1]);
      }
    }
    for (int y = 4; y < h; y += 4) {
      if (y + 1 >= h) break;
      for (int x = 0; x < w; ++x) {
        filter_line(plane[static_cast<std::size_t>(y - 2) * w + x],
                    plane[static_cast<std::size_t>(y - 1) * w + x],
                    plane[static_cast<std::size_t>(y) * w + x],
                    plane[static_cast<std::size_t>(y + 1) * w + x]);
      }
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(y, x, ch) = clamp01(plane[static_cast<std::size_t>(y) * w + x] / 255.0);
  }
  return out;
}

ImageTensor flip_lr(const ImageTensor& img) {
  ImageTensor out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

ImageTensor flip_tb(const ImageTensor& img) {
  ImageTensor out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(img.height - 1 - y, x, c) = img.at(y, x, c);
  return out;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double boundary_discontinuity(const ImageTensor& img, int spacing) {
  if (spacing < 2) throw RejectedInput("boundary spacing must be >= 2");
  double acc = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < img.channels; ++ch) {
    for (int x = spacing; x < img.width; x += spacing)
      for (int y = 0; y < img.height; ++y) {
        acc += std::fabs(img.at(y, x - 1, ch) - img.at(y, x, ch));
        ++count;
      }
    for (int y = spacing; y < img.height; y += spacing)
      for (int x = 0; x < img.width; ++x) {
        acc += std::fabs(img.at(y - 1, x, ch) - img.at(y, x, ch));
        ++count;
      }
  }
  return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

double blocking_excess(const ImageTensor& original, const ImageTensor& processed,
                       int spacing) {
  require_same_shape(original, processed, "blocking_excess");
  if (spacing < 2) throw RejectedInput("boundary spacing must be >= 2");
  double acc = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < original.channels; ++ch) {
    for (int x = spacing; x < original.width; x += spacing)
      for (int y = 0; y < original.height; ++y) {
        const double jo = original.at(y, x - 1, ch) - original.at(y, x, ch);
        const double jp = processed.at(y, x - 1, ch) - processed.at(y, x, ch);
        acc += std::fabs(jp - jo);
        ++count;
      }
    for (int y = spacing; y < original.height; y += spacing)
      for (int x = 0; x < original.width; ++x) {
        const double jo = original.at(y - 1, x, ch) - original.at(y, x, ch);
        const double jp = processed.at(y - 1, x, ch) - processed.at(y, x, ch);
        acc += std::fabs(jp - jo);
        ++count;
      }
  }
  return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

}  // namespace prepguard
