#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "prepguard/model.hpp"
#include "prepguard/rng.hpp"
#include "test_support.hpp"

using namespace prepguard;

TEST_CASE("architecture text round-trips") {
  const ModelParams m = default_architecture({32, 32, 3}, 10);
  const std::string text = format_architecture(m);
  CHECK(text == "input 32x32x3;conv 3x8,relu;pool 2;conv 3x16,relu;pool 2;dense 10");
  const ModelParams parsed = parse_architecture(text);
  CHECK(format_architecture(parsed) == text);
  CHECK(parsed.class_count == 10);

  const auto shapes = layer_output_shapes(parsed);
  CHECK(shapes[0] == Shape3{32, 32, 8});
  CHECK(shapes[1] == Shape3{16, 16, 8});
  CHECK(shapes[2] == Shape3{16, 16, 16});
  CHECK(shapes[3] == Shape3{8, 8, 16});
  CHECK(shapes[4] == Shape3{1, 1, 10});
}

TEST_CASE("architecture parser rejects malformed text") {
  CHECK_THROWS_AS(parse_architecture("conv 3x8"), RejectedInput);
  CHECK_THROWS_AS(parse_architecture("input 8x8x3"), RejectedInput);
  CHECK_THROWS_AS(parse_architecture("input 8x8x3;dense 4,relu"), RejectedInput);
  CHECK_THROWS_AS(parse_architecture("input 8x8x3;warp 2;dense 4"), RejectedInput);
}

TEST_CASE("zero-initialized model maps everything to zero logits") {
  const ModelParams m = default_architecture({8, 8, 3}, 5);  // weights stay zero
  const ImageTensor x = test_support::random_image(8, 8, 3, 1);
  for (const double z : forward(m, x)) CHECK(z == 0.0);
}

TEST_CASE("forward is deterministic and rejects shape mismatch") {
  ModelParams m = default_architecture({8, 8, 3}, 5);
  init_weights(m, 3);
  const ImageTensor x = test_support::random_image(8, 8, 3, 2);
  CHECK(forward(m, x) == forward(m, x));
  const ImageTensor wrong = test_support::random_image(8, 9, 3, 2);
  CHECK_THROWS_AS(forward(m, wrong), RejectedInput);
}

TEST_CASE("single dense layer picks out a weight column for one-hot input") {
  ModelParams m = test_support::affine_model(2, 2, 1, 3, 7);
  ImageTensor x(2, 2, 1, 0.0);
  x.at(1, 0, 0) = 1.0;  // flat index 2 of 4
  const Logits z = forward(m, x);
  for (int o = 0; o < 3; ++o)
    CHECK(z[static_cast<std::size_t>(o)] ==
          doctest::Approx(m.weights[0][static_cast<std::size_t>(o) * 4 + 2] +
                          m.biases[0][static_cast<std::size_t>(o)])
              .epsilon(1e-12));
}

TEST_CASE("predict takes the argmax with lowest-index tie break") {
  ModelParams m = test_support::affine_model(1, 1, 1, 3, 1);
  m.weights[0] = {0.0, 0.0, 0.0};
  m.biases[0] = {0.1, 3.0, -1.0};
  const ImageTensor x(1, 1, 1, 0.5);
  CHECK(predict(m, x) == 1);
  m.biases[0] = {2.0, 2.0, 0.0};
  CHECK(predict(m, x) == 0);
}

TEST_CASE("cross entropy matches hand values and stays non-negative") {
  CHECK(cross_entropy({0.0, 0.0}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy({10.0, -10.0}, 0) == doctest::Approx(2.061e-9).epsilon(1e-3));
  CHECK_THROWS_AS(cross_entropy({0.0, 0.0}, 2), RejectedInput);
  CHECK_THROWS_AS(cross_entropy({0.0, 0.0}, -1), RejectedInput);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Logits z(4);
    for (double& v : z) v = rng.uniform(-30.0, 30.0);
    const int label = static_cast<int>(rng.below(4));
    CHECK(cross_entropy(z, label) >= 0.0);
    double sum = 0.0;
    for (const double p : softmax(z)) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  // all-equal logits cost exactly ln K
  CHECK(cross_entropy({1.7, 1.7, 1.7}, 1) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("input gradient of an affine-softmax model matches the closed form") {
  ModelParams m = test_support::affine_model(2, 2, 1, 3, 11);
  const ImageTensor x = test_support::random_image(2, 2, 1, 12);
  const LabeledExample ex{x, 1};
  const InputGradient g = grad_input(m, ex);

  const std::vector<double> p = softmax(forward(m, x));
  for (int i = 0; i < 4; ++i) {
    double expected = 0.0;
    for (int o = 0; o < 3; ++o)
      expected += m.weights[0][static_cast<std::size_t>(o) * 4 + static_cast<std::size_t>(i)] *
                  (p[static_cast<std::size_t>(o)] - (o == 1 ? 1.0 : 0.0));
    CHECK(g.data[static_cast<std::size_t>(i)] ==
          doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("zero-weight model has an exactly zero input gradient") {
  const ModelParams m = default_architecture({8, 8, 3}, 4);
  const LabeledExample ex{test_support::random_image(8, 8, 3, 3), 2};
  for (const double v : grad_input(m, ex).data) CHECK(v == 0.0);
  CHECK(gradient_check(m, ex, 1e-5) == 0.0);
}

TEST_CASE("backprop agrees with central finite differences on a conv net") {
  ModelParams m = default_architecture({10, 10, 3}, 4);
  init_weights(m, 21);
  const LabeledExample ex{test_support::random_image(10, 10, 3, 22), 1};
  CHECK(gradient_check(m, ex, 1e-5) < 1e-4);
}

TEST_CASE("gradient_check validates its step size") {
  const ModelParams m = default_architecture({8, 8, 3}, 4);
  const LabeledExample ex{test_support::random_image(8, 8, 3, 3), 0};
  CHECK_THROWS_AS(gradient_check(m, ex, 0.0), RejectedInput);
  CHECK_THROWS_AS(gradient_check(m, ex, 0.5), RejectedInput);
}

TEST_CASE("grad_logit_combo differentiates logit differences") {
  ModelParams m = test_support::affine_model(2, 2, 1, 3, 31);
  const ImageTensor x = test_support::random_image(2, 2, 1, 32);
  const InputGradient g = grad_logit_combo(m, x, {1.0, -1.0, 0.0});
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(g.data[i] ==
          doctest::Approx(m.weights[0][i] - m.weights[0][4 + i]).epsilon(1e-12));
}

TEST_CASE("training rejects bad inputs") {
  CHECK_THROWS_AS(train({}, 2, TrainConfig{}), RejectedInput);
  const auto ds = synth_dataset(10, 2, 16, 16, 4);
  TrainConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train(ds.examples, 2, bad), RejectedInput);
  bad = TrainConfig{};
  bad.momentum = 1.0;
  CHECK_THROWS_AS(train(ds.examples, 2, bad), RejectedInput);
}

TEST_CASE("training is deterministic per seed") {
  const auto ds = synth_dataset(60, 3, 16, 16, 17);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 5;
  const auto a = serialize_model(train(ds.examples, 3, cfg));
  const auto b = serialize_model(train(ds.examples, 3, cfg));
  CHECK(a == b);
}

namespace {
// Perceptron oracle: converges to zero errors only on separable data.
bool perceptron_separable(const std::vector<LabeledExample>& data, int epochs) {
  const std::size_t n = data.front().image.data.size();
  std::vector<double> w(n + 1, 0.0);
  for (int e = 0; e < epochs; ++e) {
    int errors = 0;
    for (const auto& ex : data) {
      double act = w[n];
      for (std::size_t i = 0; i < n; ++i) act += w[i] * ex.image.data[i];
      const int y = ex.label == 1 ? 1 : -1;
      if (y * act <= 0.0) {
        ++errors;
        for (std::size_t i = 0; i < n; ++i) w[i] += y * ex.image.data[i];
        w[n] += y;
      }
    }
    if (errors == 0) return true;
  }
  return false;
}
}  // namespace

TEST_CASE("a separable two-class set trains to perfect accuracy") {
  const auto ds = synth_dataset(100, 2, 32, 32, 8);
  REQUIRE(perceptron_separable(ds.examples, 500));  // oracle: the set is separable
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 8;
  const ModelParams m = train(ds.examples, 2, cfg);
  int correct = 0;
  for (const auto& ex : ds.examples) correct += predict(m, ex.image) == ex.label;
  CHECK(correct == 100);
}

TEST_CASE("model files round-trip byte-identically") {
  const auto& fx = test_support::fixture();
  const auto bytes = serialize_model(fx.model);
  const ModelParams loaded = deserialize_model(bytes);
  CHECK(serialize_model(loaded) == bytes);

  const std::string path =
      (std::filesystem::temp_directory_path() / "pg_test_model.pgrd").string();
  save_model(fx.model, path);
  const ModelParams from_file = load_model(path);
  CHECK(serialize_model(from_file) == bytes);
  CHECK(model_fingerprint(from_file) == model_fingerprint(fx.model));
  std::filesystem::remove(path);
}

TEST_CASE("model deserialization rejects corrupt bytes") {
  auto bytes = serialize_model(test_support::fixture().model);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_model(bad_magic), RejectedInput);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 5);
  CHECK_THROWS_AS(deserialize_model(truncated), RejectedInput);
  auto padded = bytes;
  padded.push_back(0);
  CHECK_THROWS_AS(deserialize_model(padded), RejectedInput);
}

TEST_CASE("fnv1a64 matches the reference vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("the shared fixture model generalizes to held-out data") {
  const auto& fx = test_support::fixture();
  int correct = 0;
  for (const auto& ex : fx.eval_set) correct += predict(fx.model, ex.image) == ex.label;
  CHECK(static_cast<double>(correct) / fx.eval_set.size() >= 0.9);
}
