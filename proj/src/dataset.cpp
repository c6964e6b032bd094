#include "prepguard/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prepguard/errors.hpp"
#include "prepguard/png_io.hpp"
#include "prepguard/rng.hpp"

namespace prepguard {

namespace {

// Class tints deliberately overlap (stripes share red, checker/band share
// blue, blob/ramp share green) so color alone cannot separate the classes.
constexpr double kTints[10][3] = {
    {1.0, 0.4, 0.4},  // 0 horizontal stripes
    {1.0, 0.4, 0.4},  // 1 vertical stripes
    {0.4, 0.4, 1.0},  // 2 checkerboard
    {0.4, 1.0, 0.4},  // 3 top-left blob
    {0.4, 0.4, 1.0},  // 4 right band
    {0.4, 1.0, 0.4},  // 5 left-to-right ramp
    {1.0, 0.8, 0.4},  // 6 diagonal bar
    {1.0, 0.4, 1.0},  // 7 center disk
    {0.8, 0.8, 0.4},  // 8 bright top half
    {0.4, 1.0, 1.0},  // 9 left square
};

constexpr bool kAsymmetric[10] = {false, false, false, true, true,
                                  true,  true,  false, false, true};

// Pattern mask in [0,1]; geometry jittered per image.
double pattern_mask(int cls, int y, int x, int h, int w, double j1, double j2,
                    double j3) {
  switch (cls) {
    case 0: {  // horizontal stripes, period 4
      const int ph = static_cast<int>(j1 * 4.0);
      return ((y + ph) % 4) < 2 ? 1.0 : 0.0;
    }
    case 1: {  // vertical stripes, period 2
      const int ph = static_cast<int>(j1 * 2.0);
      return ((x + ph) % 2) == 0 ? 1.0 : 0.0;
    }
    case 2: {  // checkerboard of 4x4 cells
      const int phx = static_cast<int>(j1 * 4.0), phy = static_cast<int>(j2 * 4.0);
      return (((x + phx) / 4 + (y + phy) / 4) % 2) == 0 ? 1.0 : 0.0;
    }
    case 3: {  // soft blob in the top-left quadrant
      const double cx = w * (0.18 + 0.20 * j1), cy = h * (0.18 + 0.20 * j2);
      const double s = w / 7.0;
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      return std::exp(-d2 / (2.0 * s * s));
    }
    case 4: {  // band along the right edge
      const int band = static_cast<int>(w * (0.20 + 0.15 * j1));
      return x >= w - band ? 1.0 : 0.0;
    }
    case 5:  // left-to-right luminance ramp
      return static_cast<double>(x) / (w - 1);
    case 6: {  // main-diagonal bar
      const int off = static_cast<int>((j1 - 0.5) * w / 4.0);
      const double t = w / 14.0;
      return std::fabs(static_cast<double>(y - x - off)) <= t ? 1.0 : 0.0;
    }
    case 7: {  // centered disk
      const double r = w * (0.20 + 0.06 * j1);
      const double cx = w / 2.0 + (j2 - 0.5) * 4.0, cy = h / 2.0 + (j3 - 0.5) * 4.0;
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      return d2 <= r * r ? 1.0 : 0.0;
    }
    case 8: {  // bright top half
      const int split = h / 2 + static_cast<int>((j1 - 0.5) * 4.0);
      return y < split ? 1.0 : 0.0;
    }
    case 9: {  // small square near the left-middle edge
      const int s = std::max(3, w / 5);
      const int x0 = 1 + static_cast<int>(j1 * w / 8.0);
      const int y0 = static_cast<int>(h * (0.33 + 0.2 * j2));
      return (x >= x0 && x < x0 + s && y >= y0 && y < y0 + s) ? 1.0 : 0.0;
    }
    default:
      return 0.0;
  }
}

LabeledExample synth_example(int index, int K, int h, int w, std::uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  const int cls = index % K;
  const double base = rng.uniform(0.35, 0.55);
  const double contrast = rng.uniform(0.13, 0.28);
  const double j1 = rng.uniform(), j2 = rng.uniform(), j3 = rng.uniform();

  ImageTensor img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double m = pattern_mask(cls, y, x, h, w, j1, j2, j3) - 0.5;
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) =
            clamp01(base + contrast * m * kTints[cls][c] + rng.gaussian(0.0, 0.05));
    }
  return {quantize8(img), cls};
}

}  // namespace

Dataset synth_dataset(int n, int K, int height, int width, std::uint64_t seed) {
  if (K < 2 || K > 10) throw RejectedInput("synthetic class count must lie in [2,10]");
  if (n < K) throw RejectedInput("need at least one example per class");
  if (height < 8 || width < 8) throw RejectedInput("synthetic images must be at least 8x8");
  Dataset ds;
  ds.desc = {"synth", K, height, width, 3, n, seed};
  ds.examples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    ds.examples.push_back(synth_example(i, K, height, width, seed));
  return ds;
}

bool synth_class_is_asymmetric(int class_index) {
  return class_index >= 0 && class_index < 10 && kAsymmetric[class_index];
}

Dataset load_dataset(const std::string& dir, const std::string& manifest_name,
                     int expected_class_count) {
  const std::filesystem::path root(dir);
  std::ifstream manifest(root / manifest_name);
  if (!manifest) throw IngestionError("cannot open manifest " + manifest_name, 0);

  Dataset ds;
  ds.desc.source = dir;
  std::string line;
  int row = 0;
  int max_label = -1;
  while (std::getline(manifest, line)) {
    ++row;
    if (line.empty() || (row == 1 && line == "path,label")) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw IngestionError("manifest line has no ',' separator", row);
    const std::string rel = line.substr(0, comma);
    int label = 0;
    try {
      label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw IngestionError("bad label in manifest", row);
    }
    if (label < 0) throw IngestionError("negative label", row);
    if (expected_class_count > 0 && label >= expected_class_count)
      throw IngestionError("label " + std::to_string(label) + " outside [0," +
                               std::to_string(expected_class_count) + ")",
                           row);

    const std::filesystem::path img_path = root / rel;
    if (!std::filesystem::exists(img_path))
      throw IngestionError("missing image file " + rel, row);
    ImageTensor img = read_png(img_path.string());
    if (!ds.examples.empty() && !img.same_shape(ds.examples.front().image))
      throw IngestionError("image shape " + img.shape_str() + " differs from dataset", row);
    max_label = std::max(max_label, label);
    ds.examples.push_back({std::move(img), label});
  }
  if (ds.examples.empty()) throw IngestionError("manifest lists no images", 0);

  ds.desc.class_count = expected_class_count > 0 ? expected_class_count : max_label + 1;
  std::vector<bool> present(static_cast<std::size_t>(ds.desc.class_count), false);
  for (const auto& ex : ds.examples) present[static_cast<std::size_t>(ex.label)] = true;
  for (int k = 0; k < ds.desc.class_count; ++k)
    if (!present[static_cast<std::size_t>(k)])
      throw IngestionError("labels are not dense: class " + std::to_string(k) + " missing",
                           0);
  ds.desc.height = ds.examples.front().image.height;
  ds.desc.width = ds.examples.front().image.width;
  ds.desc.channels = ds.examples.front().image.channels;
  ds.desc.size = static_cast<int>(ds.examples.size());
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  std::ofstream manifest(root / "manifest.csv", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
  manifest << "path,label\n";
  char name[32];
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    write_png((root / name).string(), ds.examples[i].image);
    manifest << name << "," << ds.examples[i].label << "\n";
  }
}

std::vector<ImageTensor> codec_test_corpus(int n, int height, int width, int channels,
                                           std::uint64_t seed) {
  if (channels != 1 && channels != 3) throw RejectedInput("corpus needs 1 or 3 channels");
  if (height < 8 || width < 8) throw RejectedInput("corpus images must be at least 8x8");
  std::vector<ImageTensor> corpus;
  corpus.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, 0x0de0c0de00000000ull + static_cast<std::uint64_t>(i)));
    ImageTensor img(height, width, channels);
    std::vector<std::vector<double>> planes(
        static_cast<std::size_t>(channels),
        std::vector<double>(static_cast<std::size_t>(height) * width));
    for (int ch = 0; ch < channels; ++ch) {
      const double base = rng.uniform(0.35, 0.65);
      struct Wave {
        double u, v, amp, phase;
      };
      Wave waves[2];
      for (Wave& wv : waves) {
        const double cycles = rng.uniform(0.5, 2.0);
        const double theta = rng.uniform(0.0, 6.2831853);
        wv = {cycles * std::cos(theta) / width, cycles * std::sin(theta) / height,
              rng.uniform(0.02, 0.06), rng.uniform(0.0, 6.2831853)};
      }
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          double v = base;
          for (const Wave& wv : waves)
            v += wv.amp * std::cos(6.2831853 * (wv.u * x + wv.v * y) + wv.phase);
          planes[static_cast<std::size_t>(ch)][static_cast<std::size_t>(y) * width + x] = v;
        }
    }
    // Sharp rectangles with every edge on the 4-grid: mid-block for the 8x8
    // transform half the time, never mid-block for the 4x4 one, and always
    // skipped by the deblocking gate.
    const int gx = width / 4, gy = height / 4;
    for (int r = 0; r < 4; ++r) {
      const int x0 = 4 * rng.uniform_int(0, gx - 1);
      const int x1 = 4 * rng.uniform_int(x0 / 4 + 1, gx);
      const int y0 = 4 * rng.uniform_int(0, gy - 1);
      const int y1 = 4 * rng.uniform_int(y0 / 4 + 1, gy);
      for (int ch = 0; ch < channels; ++ch) {
        const double delta = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.10, 0.30);
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x)
            planes[static_cast<std::size_t>(ch)][static_cast<std::size_t>(y) * width + x] +=
                delta;
      }
    }
    for (int ch = 0; ch < channels; ++ch)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double v =
              planes[static_cast<std::size_t>(ch)][static_cast<std::size_t>(y) * width + x];
          // soft limiter: keeps values inside [0.1, 0.9] so codec ringing
          // cannot saturate the reconstruction
          img.at(y, x, ch) = 0.5 + 0.4 * std::tanh((v - 0.5) / 0.4);
        }
    corpus.push_back(std::move(img));
  }
  return corpus;
}

}  // namespace prepguard
