#pragma once

#include <vector>

#include "prepguard/dataset.hpp"
#include "prepguard/model.hpp"
#include "prepguard/rng.hpp"
#include "prepguard/tensor.hpp"

namespace test_support {

// A small model trained once per test binary: 4 classes at 16x16 keeps the
// whole suite in seconds.
struct Fixture {
  prepguard::ModelParams model;
  std::vector<prepguard::LabeledExample> train_set;
  std::vector<prepguard::LabeledExample> eval_set;
  int class_count = 4;
};

inline const Fixture& fixture() {
  static const Fixture fx = [] {
    Fixture f;
    const auto ds = prepguard::synth_dataset(840, f.class_count, 16, 16, 99);
    f.train_set.assign(ds.examples.begin(), ds.examples.begin() + 640);
    f.eval_set.assign(ds.examples.begin() + 640, ds.examples.end());
    prepguard::TrainConfig cfg;
    cfg.epochs = 8;
    cfg.learning_rate = 0.01;
    cfg.seed = 99;
    f.model = prepguard::train(f.train_set, f.class_count, cfg);
    return f;
  }();
  return fx;
}

// Single linear layer: logits = W x + b. The closed-form oracle model.
inline prepguard::ModelParams affine_model(int h, int w, int c, int k,
                                           std::uint64_t seed) {
  prepguard::ModelParams m = prepguard::parse_architecture(
      "input " + std::to_string(h) + "x" + std::to_string(w) + "x" +
      std::to_string(c) + ";dense " + std::to_string(k));
  prepguard::init_weights(m, seed);
  return m;
}

inline prepguard::ImageTensor random_image(int h, int w, int c, std::uint64_t seed) {
  prepguard::Rng rng(seed);
  prepguard::ImageTensor img(h, w, c);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

}  // namespace test_support
