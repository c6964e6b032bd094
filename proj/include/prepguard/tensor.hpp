#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "prepguard/errors.hpp"

namespace prepguard {

// H x W x C grid of real intensities in [0,1], row-major with interleaved
// channels: data[(y * width + x) * channels + c].
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3))
      throw RejectedInput("image shape must be positive with 1 or 3 channels");
  }

  int size() const { return height * width * channels; }

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  std::string shape_str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" +
           std::to_string(channels);
  }
};

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b,
                               const char* what) {
  if (!a.same_shape(b))
    throw RejectedInput(std::string(what) + ": shape mismatch " + a.shape_str() +
                        " vs " + b.shape_str());
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline ImageTensor clamped01(ImageTensor img) {
  for (double& v : img.data) v = clamp01(v);
  return img;
}

// Validating constructor for externally supplied pixel data.
inline ImageTensor make_image(int h, int w, int c, std::vector<double> values) {
  ImageTensor img(h, w, c);
  if (values.size() != img.data.size())
    throw RejectedInput("pixel data length does not match " + img.shape_str());
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw RejectedInput("pixel value outside [0,1]");
  img.data = std::move(values);
  return img;
}

// Round every pixel to the nearest 1/255 step, as an 8-bit save/load would.
inline ImageTensor quantize8(const ImageTensor& img) {
  ImageTensor out = img;
  for (double& v : out.data) v = std::round(clamp01(v) * 255.0) / 255.0;
  return out;
}

inline double l2_distance(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "l2_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline double linf_distance(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "linf_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

struct LabeledExample {
  ImageTensor image;
  int label = 0;
};

// Pre-softmax class scores.
using Logits = std::vector<double>;

// dJ/dpixel, same layout as the image it was computed from.
struct InputGradient {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  InputGradient() = default;
  explicit InputGradient(const ImageTensor& like)
      : height(like.height), width(like.width), channels(like.channels),
        data(like.data.size(), 0.0) {}
};

}  // namespace prepguard
