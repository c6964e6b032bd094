#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prepguard/tensor.hpp"

namespace prepguard {

struct DatasetDescriptor {
  std::string source;  // "synth" or a directory path
  int class_count = 0;
  int height = 0, width = 0, channels = 0;
  int size = 0;
  std::uint64_t seed = 0;  // synthetic only
};

struct Dataset {
  DatasetDescriptor desc;
  std::vector<LabeledExample> examples;
};

// Procedural K-class corpus (K <= 10): oriented bars, corner blobs,
// asymmetric gradients, with per-pixel Gaussian noise. Balanced labels,
// deterministic per seed; each image depends only on (seed, index). Pixels
// are 8-bit aligned so PNG round-trips are exact.
Dataset synth_dataset(int n, int K, int height, int width, std::uint64_t seed);

// Which generator classes are left-right asymmetric (at least half are).
bool synth_class_is_asymmetric(int class_index);

// Manifest rows are "path,label" with paths relative to dir. When
// expected_class_count is zero the class count is derived from the labels.
Dataset load_dataset(const std::string& dir, const std::string& manifest_name,
                     int expected_class_count = 0);
void save_dataset(const Dataset& ds, const std::string& dir);

// Band-limited random fields plus sharp 4-aligned rectangles: the corpus the
// codec quality metrics are measured on.
std::vector<ImageTensor> codec_test_corpus(int n, int height, int width, int channels,
                                           std::uint64_t seed);

}  // namespace prepguard
