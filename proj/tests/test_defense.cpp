#include <filesystem>

#include "doctest.h"
#include "prepguard/codecs.hpp"
#include "prepguard/defense.hpp"
#include "prepguard/errors.hpp"
#include "prepguard/evaluation.hpp"
#include "test_support.hpp"

using namespace prepguard;

TEST_CASE("defense specs parse and format canonically") {
  const DefenseSpec s = parse_defense_spec("webp:70,fliplr");
  REQUIRE(s.transforms.size() == 2);
  CHECK(s.transforms[0].kind == TransformKind::WebpLike);
  CHECK(s.transforms[0].qf == 70);
  CHECK(s.transforms[1].kind == TransformKind::FlipLR);
  CHECK(s.name == "webp:70,fliplr");

  CHECK(parse_defense_spec("none").transforms.empty());
  CHECK(parse_defense_spec("none").name == "none");
  CHECK(parse_defense_spec(" jpeg: 50 ,  fliptb ").name == "jpeg:50,fliptb");
  CHECK(parse_defense_spec("extern:mycodec").transforms[0].tag == "mycodec");

  // round trip: parse(format(spec)) reproduces the spec
  const DefenseSpec again = parse_defense_spec(format_defense_spec(s));
  CHECK(again.name == s.name);
  CHECK(again.transforms.size() == s.transforms.size());
}

TEST_CASE("defense parse errors carry byte offsets") {
  CHECK_THROWS_AS(parse_defense_spec("webp:101"), ParseError);
  CHECK_THROWS_AS(parse_defense_spec("blur:3"), ParseError);
  CHECK_THROWS_AS(parse_defense_spec("jpeg"), ParseError);
  CHECK_THROWS_AS(parse_defense_spec("fliplr,,fliptb"), ParseError);
  CHECK_THROWS_AS(parse_defense_spec("fliplr,"), ParseError);
  try {
    parse_defense_spec("fliplr,webp:999");
  } catch (const ParseError& e) {
    CHECK(e.offset == 7);
  }
}

TEST_CASE("defense lists split on semicolons") {
  const auto list = parse_defense_list("none;jpeg:50;webp:70,fliplr");
  REQUIRE(list.size() == 3);
  CHECK(list[0].name == "none");
  CHECK(list[2].name == "webp:70,fliplr");
  CHECK_THROWS_AS(parse_defense_list(" ; "), ParseError);
}

TEST_CASE("the empty defense is a bit-exact identity") {
  const ImageTensor img = test_support::random_image(16, 16, 3, 7);
  CHECK(apply_defense(parse_defense_spec("none"), img).data == img.data);
}

TEST_CASE("composition applies transforms left to right") {
  const ImageTensor img = test_support::random_image(16, 16, 3, 8);
  const ImageTensor chained = apply_defense(parse_defense_spec("webp:70,fliplr"), img);
  const ImageTensor manual = flip_lr(webp_like_roundtrip(img, 70));
  CHECK(chained.data == manual.data);

  const ImageTensor other = apply_defense(parse_defense_spec("fliplr,webp:70"), img);
  CHECK(other.data == webp_like_roundtrip(flip_lr(img), 70).data);
}

TEST_CASE("defended output keeps shape and range") {
  const ImageTensor img = test_support::random_image(15, 17, 3, 9);  // odd sizes
  for (const char* spec : {"jpeg:10", "webp:10", "fliplr,fliptb", "webp:40,fliptb"}) {
    const ImageTensor out = apply_defense(parse_defense_spec(spec), img);
    CHECK(out.same_shape(img));
    for (const double v : out.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("a codec-plus-flip defense keeps a constant image constant") {
  const ImageTensor flat(16, 16, 3, 0.6);
  const ImageTensor out = apply_defense(parse_defense_spec("webp:70,fliplr"), flat);
  for (const double v : out.data) CHECK(v == doctest::Approx(0.6).epsilon(2e-3));
  const double first = out.data[0];
  for (const double v : out.data) CHECK(v == first);
}

TEST_CASE("extern transforms require a registered command") {
  const ImageTensor img = test_support::random_image(8, 8, 3, 10);
  const DefenseSpec spec = parse_defense_spec("extern:missing");
  CHECK_THROWS_AS(apply_defense(spec, img), DefenseExecutionError);
  ExternRegistry reg;  // registered commands, but not this tag
  reg["other"] = "cp {in} {out}";
  CHECK_THROWS_AS(apply_defense(spec, img, &reg), DefenseExecutionError);
  try {
    apply_defense(spec, img, &reg);
  } catch (const DefenseExecutionError& e) {
    CHECK(e.transform_index == 0);
  }
}

TEST_CASE("an extern copy command round-trips pixels through PNG") {
  const ImageTensor img = quantize8(test_support::random_image(12, 12, 3, 11));
  ExternRegistry reg;
  reg["copy"] = "cp {in} {out}";
  const ImageTensor out = apply_defense(parse_defense_spec("extern:copy"), img, &reg);
  CHECK(out.data == img.data);  // 8-bit aligned input survives exactly
}

TEST_CASE("a failing extern command reports the transform index") {
  const ImageTensor img = test_support::random_image(8, 8, 1, 12);
  ExternRegistry reg;
  reg["boom"] = "false";
  const DefenseSpec spec = parse_defense_spec("fliplr,extern:boom");
  try {
    apply_defense(spec, img, &reg);
    CHECK(false);
  } catch (const DefenseExecutionError& e) {
    CHECK(e.transform_index == 1);
  }
}

TEST_CASE("codec and flip order barely changes predictions") {
  const auto& fx = test_support::fixture();
  const DefenseSpec ab = parse_defense_spec("webp:70,fliplr");
  const DefenseSpec ba = parse_defense_spec("fliplr,webp:70");
  int agree = 0, total = 0;
  for (const auto& ex : fx.eval_set) {
    const int pa = predict(fx.model, apply_defense(ab, ex.image));
    const int pb = predict(fx.model, apply_defense(ba, ex.image));
    agree += pa == pb;
    ++total;
  }
  CHECK(static_cast<double>(agree) / total >= 0.95);
}
