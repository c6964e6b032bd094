#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prepguard/model.hpp"
#include "prepguard/tensor.hpp"

namespace prepguard {

enum class AttackKind { Fgsm, Ifgsm, Deepfool, CwL2 };

// A number remembered together with the text it was parsed from, so reports
// can echo budgets exactly as given ("8/255" stays "8/255").
struct Ratio {
  double value = 0.0;
  std::string text;
};
Ratio parse_ratio(const std::string& text);

struct AttackConfig {
  AttackKind kind = AttackKind::Fgsm;
  Ratio epsilon{8.0 / 255.0, "8/255"};  // L-inf budget, fraction of dynamic range
  Ratio step_size{0.0, "auto"};         // ifgsm step; auto -> min(eps, 2*eps/iterations)
  int iterations = 10;                  // ifgsm steps / deepfool iteration cap
  double overshoot = 0.02;              // deepfool push past the boundary
  double kappa = 0.0;                   // cw confidence margin
  double lambda = 1.0;                  // cw trade-off weight
  double cw_learning_rate = 0.1;
  int cw_max_steps = 250;
  bool cw_binary_search = false;        // 9-step search over lambda instead of one retry
  std::uint64_t seed = 0;
  std::string tag;                      // preset string this config came from
};

struct Perturbation {
  int height = 0, width = 0, channels = 0;
  std::vector<double> delta;  // adversarial - original, elementwise
  double l2 = 0.0, linf = 0.0;
};

struct AttackResult {
  ImageTensor adversarial;
  Perturbation perturbation;
  bool success = false;  // predicted class differs from the true label
  int iterations_used = 0;
  int original_label = 0;
  int adversarial_label = 0;
};

// Project candidate into the L-inf ball around origin, then into [0,1].
ImageTensor clip_ball(const ImageTensor& origin, const ImageTensor& candidate,
                      double epsilon);

AttackResult fgsm(const ModelParams& params, const LabeledExample& example,
                  const AttackConfig& cfg);
AttackResult ifgsm(const ModelParams& params, const LabeledExample& example,
                   const AttackConfig& cfg);
AttackResult deepfool(const ModelParams& params, const LabeledExample& example,
                      const AttackConfig& cfg);
AttackResult cw_l2(const ModelParams& params, const LabeledExample& example,
                   const AttackConfig& cfg);

AttackResult run_attack(const ModelParams& params, const LabeledExample& example,
                        const AttackConfig& cfg);

// Preset tags: "fgsm:eps=8/255", "ifgsm:eps=5/255,iters=10", "deepfool", "cw".
AttackConfig parse_attack_tag(const std::string& tag);

// Comma-separated tags; commas inside a tag's parameters bind to the tag on
// their left ("ifgsm:eps=8/255,iters=10,deepfool" is two attacks).
std::vector<AttackConfig> parse_attack_list(const std::string& text);

}  // namespace prepguard
