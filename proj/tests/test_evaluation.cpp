#include <filesystem>

#include "doctest.h"
#include "prepguard/evaluation.hpp"
#include "prepguard/rng.hpp"
#include "test_support.hpp"

using namespace prepguard;
namespace fs = std::filesystem;

namespace {
const std::vector<LabeledExample>& benign_pool() {
  static const auto pool = select_benign(test_support::fixture().model,
                                         test_support::fixture().eval_set, 50, 11, 2);
  return pool;
}

const SaeSet& ifgsm_sae() {
  static const SaeSet sae = build_sae_set(test_support::fixture().model, benign_pool(),
                                          parse_attack_tag("ifgsm:eps=8/255,iters=10"), 2);
  return sae;
}
}  // namespace

TEST_CASE("benign selection returns correctly classified images, seeded") {
  const auto& fx = test_support::fixture();
  const auto a = select_benign(fx.model, fx.eval_set, 30, 5);
  const auto b = select_benign(fx.model, fx.eval_set, 30, 5);
  REQUIRE(a.size() == 30);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(predict(fx.model, a[i].image) == a[i].label);
    CHECK(a[i].image.data == b[i].image.data);
  }
  const auto c = select_benign(fx.model, fx.eval_set, 30, 6);
  bool same_order = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    same_order = same_order && a[i].image.data == c[i].image.data;
  CHECK_FALSE(same_order);

  CHECK(top1_accuracy(fx.model, parse_defense_spec("none"), a) == 1.0);
}

TEST_CASE("benign selection fails loudly when the pool is too small") {
  const auto& fx = test_support::fixture();
  try {
    select_benign(fx.model, fx.eval_set, 100000, 5);
    CHECK(false);
  } catch (const SelectionError& e) {
    CHECK(e.available > 0);
    CHECK(e.available < 100000);
  }
  CHECK_THROWS_AS(select_benign(fx.model, fx.eval_set, 0, 5), RejectedInput);
}

TEST_CASE("selecting every correct image returns the whole subset") {
  const auto& fx = test_support::fixture();
  int correct = 0;
  for (const auto& ex : fx.eval_set) correct += predict(fx.model, ex.image) == ex.label;
  const auto all = select_benign(fx.model, fx.eval_set, correct, 3);
  CHECK(static_cast<int>(all.size()) == correct);
}

TEST_CASE("SAE sets contain only verified-fooling examples") {
  const auto& fx = test_support::fixture();
  const SaeSet& sae = ifgsm_sae();
  REQUIRE(!sae.entries.empty());
  CHECK(sae.model_fingerprint == model_fingerprint(fx.model));

  std::vector<LabeledExample> advs;
  for (const auto& e : sae.entries) advs.push_back({e.adversarial, e.original.label});
  CHECK(top1_accuracy(fx.model, parse_defense_spec("none"), advs) == 0.0);
  CHECK(verify_sae_set(fx.model, sae));
}

TEST_CASE("a vanishing attack yields an empty SAE set without error") {
  const auto& fx = test_support::fixture();
  const SaeSet sae = build_sae_set(fx.model, benign_pool(),
                                   parse_attack_tag("fgsm:eps=1/100000000000"));
  CHECK(sae.entries.empty());
}

TEST_CASE("attack failures propagate with the image index") {
  const ModelParams zero = default_architecture({16, 16, 3}, 4);  // flat logits
  std::vector<LabeledExample> pool;
  pool.push_back({ImageTensor(16, 16, 3, 0.5), 0});  // predicted 0 = label
  try {
    build_sae_set(zero, pool, parse_attack_tag("deepfool"));
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("image 0") != std::string::npos);
  }
}

TEST_CASE("SAE sets survive the PNG round trip and reject other models") {
  const auto& fx = test_support::fixture();
  const fs::path dir = fs::temp_directory_path() / "pg_sae_test";
  fs::remove_all(dir);
  save_sae_set(ifgsm_sae(), dir.string());
  const SaeSet back = load_sae_set(dir.string());
  fs::remove_all(dir);

  REQUIRE(back.entries.size() == ifgsm_sae().entries.size());
  CHECK(back.attack_tag == ifgsm_sae().attack_tag);
  CHECK(back.model_fingerprint == ifgsm_sae().model_fingerprint);
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    CHECK(back.entries[i].adversarial.data == ifgsm_sae().entries[i].adversarial.data);
    CHECK(back.entries[i].original.image.data ==
          ifgsm_sae().entries[i].original.image.data);
    CHECK(back.entries[i].original.label == ifgsm_sae().entries[i].original.label);
  }
  CHECK(verify_sae_set(fx.model, back));

  ModelParams other = fx.model;
  other.weights.back()[0] += 0.5;
  CHECK_THROWS_AS(verify_sae_set(other, back), RejectedInput);

  SaeSet tampered = back;
  tampered.entries[0].adversarial = tampered.entries[0].original.image;
  CHECK_FALSE(verify_sae_set(fx.model, tampered));
}

TEST_CASE("a flip-augmented model barely minds flipped benign input") {
  const auto& fx = test_support::fixture();
  CHECK(top1_accuracy(fx.model, parse_defense_spec("fliplr"), benign_pool()) >= 0.92);
}

TEST_CASE("top1_accuracy rejects an empty example list") {
  const auto& fx = test_support::fixture();
  CHECK_THROWS_AS(top1_accuracy(fx.model, parse_defense_spec("none"), {}), RejectedInput);
}

TEST_CASE("accuracy is independent of the worker count") {
  const auto& fx = test_support::fixture();
  const DefenseSpec spec = parse_defense_spec("webp:60,fliplr");
  const double a = top1_accuracy(fx.model, spec, benign_pool(), nullptr, 1);
  const double b = top1_accuracy(fx.model, spec, benign_pool(), nullptr, 4);
  CHECK(a == b);
}

TEST_CASE("the evaluation matrix has consistent, bounded cells") {
  const auto& fx = test_support::fixture();
  const auto attacks = parse_attack_list("fgsm:eps=8/255,ifgsm:eps=8/255,iters=5");
  const auto defenses = parse_defense_list("none;webp:70;webp:70,fliplr");
  const EvalReport r =
      run_matrix(fx.model, fx.eval_set, attacks, defenses, 40, 17, nullptr, 2);

  CHECK(r.report_version == 1);
  CHECK(r.defenses.size() == 3);
  REQUIRE(r.attacks.size() == 2);
  REQUIRE(r.cells.size() == 3 + 2 * 3);

  // benign rows first: no-defense accuracy is exactly one
  CHECK(r.cells[0].attack == "benign");
  CHECK(r.cells[0].defense == "none");
  CHECK(r.cells[0].top1 == 1.0);
  CHECK(std::isinf(r.cells[0].mean_psnr));

  for (const auto& c : r.cells) {
    CHECK(c.top1 >= 0.0);
    CHECK(c.top1 <= 1.0);
  }
  // every cell of one attack uses the same example count
  for (const auto& a : r.attacks) {
    int n = -1;
    for (const auto& c : r.cells)
      if (c.attack == a.tag) {
        if (n < 0) n = c.n;
        CHECK(c.n == n);
      }
    CHECK(n == a.n_sae);
  }
  // the no-defense SAE cells are exactly zero
  for (const auto& c : r.cells)
    if (c.attack != "benign" && c.defense == "none") CHECK(c.top1 == 0.0);

  // report echoes the defense spec strings verbatim
  CHECK(r.defenses[2] == "webp:70,fliplr");
}

TEST_CASE("reports serialize deterministically") {
  const auto& fx = test_support::fixture();
  const auto attacks = parse_attack_list("fgsm:eps=8/255");
  const auto defenses = parse_defense_list("none;fliplr");
  const EvalReport a = run_matrix(fx.model, fx.eval_set, attacks, defenses, 30, 21);
  const EvalReport b = run_matrix(fx.model, fx.eval_set, attacks, defenses, 30, 21, nullptr, 3);
  CHECK(report_to_json(a) == report_to_json(b));
  CHECK(report_to_csv(a) == report_to_csv(b));
  CHECK(report_to_json(a).find("\"report_version\": 1") != std::string::npos);
}

TEST_CASE("qf sweeps bucket accuracies by quality range") {
  const auto& fx = test_support::fixture();
  const std::vector<SaeSet> sets{ifgsm_sae()};
  const auto sweeps =
      qf_sweep(fx.model, sets, TransformKind::WebpLike, {20, 40, 60, 80}, 2);
  REQUIRE(sweeps.size() == 1);
  REQUIRE(sweeps[0].rows.size() == 4);
  CHECK(sweeps[0].codec == "webp");
  CHECK(sweeps[0].low_bucket_mean ==
        doctest::Approx((sweeps[0].rows[0].accuracy + sweeps[0].rows[1].accuracy) / 2));
  CHECK(sweeps[0].high_bucket_mean ==
        doctest::Approx((sweeps[0].rows[2].accuracy + sweeps[0].rows[3].accuracy) / 2));

  // barely-compressing sweep stays within two points of the no-defense zero
  const auto lossless = qf_sweep(fx.model, sets, TransformKind::JpegLike, {100});
  CHECK(lossless[0].rows[0].accuracy <= 0.02);

  SaeSet empty;
  empty.attack_tag = "empty";
  CHECK_THROWS_AS(qf_sweep(fx.model, {empty}, TransformKind::JpegLike, {50}),
                  RejectedInput);
  CHECK_THROWS_AS(qf_sweep(fx.model, sets, TransformKind::JpegLike, {}), RejectedInput);
  CHECK_THROWS_AS(qf_sweep(fx.model, sets, TransformKind::FlipLR, {50}), RejectedInput);
}

TEST_CASE("psnr reports cover the requested quality factors") {
  const auto corpus = codec_test_corpus(10, 32, 32, 3, 31);
  const auto rows = psnr_report(corpus, TransformKind::WebpLike, {100, 20}, 2);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].qf == 100);
  CHECK(rows[0].mean >= 42.0);
  CHECK(rows[0].min <= rows[0].mean);
  CHECK(rows[0].max >= rows[0].mean);
  CHECK(rows[1].mean < rows[0].mean);

  const auto jrows = psnr_report(corpus, TransformKind::JpegLike, {20});
  CHECK(rows[1].mean >= jrows[0].mean);  // loop-filtered codec wins at low qf

  CHECK_THROWS_AS(psnr_report({}, TransformKind::JpegLike, {50}), RejectedInput);
}
