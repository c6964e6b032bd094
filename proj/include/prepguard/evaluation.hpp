#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prepguard/attacks.hpp"
#include "prepguard/dataset.hpp"
#include "prepguard/defense.hpp"
#include "prepguard/model.hpp"
#include "prepguard/tensor.hpp"

namespace prepguard {

struct SaeEntry {
  LabeledExample original;  // correctly classified source image + true label
  ImageTensor adversarial;  // 8-bit aligned, misclassified by the model
  int adversarial_label = 0;
  double l2 = 0.0, linf = 0.0;
};

// Successful adversarial examples for one attack against one model.
struct SaeSet {
  std::string attack_tag;
  std::uint64_t seed = 0;
  std::uint64_t model_fingerprint = 0;
  std::vector<SaeEntry> entries;
};

// Seeded uniform sample (without replacement) of correctly classified images.
std::vector<LabeledExample> select_benign(const ModelParams& params,
                                          const std::vector<LabeledExample>& dataset,
                                          int n, std::uint64_t seed, int threads = 1);

// Run the attack on every benign image; keep only examples that remain
// misclassified after 8-bit quantization, so stored and in-memory SAEs agree.
SaeSet build_sae_set(const ModelParams& params,
                     const std::vector<LabeledExample>& benign,
                     const AttackConfig& cfg, int threads = 1);

// Re-check the defining SAE property against a model; throws on fingerprint
// mismatch, returns false if any entry fails re-verification.
bool verify_sae_set(const ModelParams& params, const SaeSet& sae, int threads = 1);

void save_sae_set(const SaeSet& sae, const std::string& dir);
SaeSet load_sae_set(const std::string& dir);

double top1_accuracy(const ModelParams& params, const DefenseSpec& spec,
                     const std::vector<LabeledExample>& examples,
                     const ExternRegistry* extern_commands = nullptr, int threads = 1);

struct EvalCell {
  std::string attack;   // attack tag, or "benign"
  std::string defense;  // canonical defense spec text
  int n = 0;
  double top1 = 0.0;
  double mean_l2 = 0.0;    // of the attack perturbations (0 for benign)
  double mean_psnr = 0.0;  // defended image vs clean original; +inf if identical
};

struct AttackSummary {
  std::string tag;
  int n_benign = 0;
  int n_sae = 0;
  double success_rate = 0.0;
  double mean_l2 = 0.0;
  double mean_linf = 0.0;
};

struct EvalReport {
  int report_version = 0;
  std::string tool_version;
  std::string model_fingerprint;  // 0x-prefixed hex
  DatasetDescriptor dataset;
  std::uint64_t seed = 0;
  int n = 0;
  std::vector<std::string> defenses;
  std::vector<AttackSummary> attacks;
  std::vector<EvalCell> cells;  // benign rows first, then one row per (attack, defense)
};

// Benign selection once, one SAE set per attack from the same pool, then
// every defense against the benign set and every SAE set.
EvalReport run_matrix(const ModelParams& params,
                      const std::vector<LabeledExample>& dataset,
                      const std::vector<AttackConfig>& attacks,
                      const std::vector<DefenseSpec>& defenses, int n,
                      std::uint64_t seed,
                      const ExternRegistry* extern_commands = nullptr,
                      int threads = 1);

std::string report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);

struct QfSweepRow {
  int qf = 0;
  double accuracy = 0.0;
};

struct QfSweep {
  std::string attack_tag;
  std::string codec;  // "jpeg" or "webp"
  std::vector<QfSweepRow> rows;
  double low_bucket_mean = 0.0;   // qf < 50
  double high_bucket_mean = 0.0;  // qf >= 50
};

// Single-codec defense accuracy per quality factor over each SAE set.
std::vector<QfSweep> qf_sweep(const ModelParams& params,
                              const std::vector<SaeSet>& sae_sets,
                              TransformKind codec, const std::vector<int>& qfs,
                              int threads = 1);

struct PsnrRow {
  int qf = 0;
  double mean = 0.0, min = 0.0, max = 0.0;
};

std::vector<PsnrRow> psnr_report(const std::vector<ImageTensor>& images,
                                 TransformKind codec, const std::vector<int>& qfs,
                                 int threads = 1);

}  // namespace prepguard
