#include "prepguard/evaluation.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "prepguard/codecs.hpp"
#include "prepguard/errors.hpp"
#include "prepguard/png_io.hpp"
#include "prepguard/rng.hpp"
#include "prepguard/threadpool.hpp"
#include "prepguard/version.hpp"

namespace prepguard {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
  return buf;
}

// JSON cannot hold infinities; the identity-defense PSNR sentinel becomes a string.
ordered_json json_psnr(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

std::string csv_double(double v) {
  if (std::isinf(v)) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double ordered_mean(const std::vector<double>& values) {
  double acc = 0.0;
  for (const double v : values) acc += v;
  return values.empty() ? 0.0 : acc / static_cast<double>(values.size());
}

EvalCell evaluate_cell(const ModelParams& params, const DefenseSpec& spec,
                       const std::vector<LabeledExample>& inputs,
                       const std::vector<const ImageTensor*>& originals,
                       const ExternRegistry* extern_commands, int threads) {
  EvalCell cell;
  cell.defense = spec.name.empty() ? format_defense_spec(spec) : spec.name;
  cell.n = static_cast<int>(inputs.size());
  std::vector<double> correct(inputs.size(), 0.0), psnrs(inputs.size(), 0.0);
  parallel_for(static_cast<int>(inputs.size()), threads, [&](int i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const ImageTensor defended = apply_defense(spec, inputs[si].image, extern_commands);
    correct[si] = predict(params, defended) == inputs[si].label ? 1.0 : 0.0;
    psnrs[si] = psnr(defended, *originals[si]);
  });
  cell.top1 = ordered_mean(correct);
  double psum = 0.0;
  for (const double p : psnrs) psum += p;
  cell.mean_psnr = inputs.empty() ? 0.0 : psum / static_cast<double>(inputs.size());
  return cell;
}

}  // namespace

std::vector<LabeledExample> select_benign(const ModelParams& params,
                                          const std::vector<LabeledExample>& dataset,
                                          int n, std::uint64_t seed, int threads) {
  if (n <= 0) throw RejectedInput("benign selection size must be positive");
  std::vector<char> ok(dataset.size(), 0);
  parallel_for(static_cast<int>(dataset.size()), threads, [&](int i) {
    const std::size_t si = static_cast<std::size_t>(i);
    ok[si] = predict(params, dataset[si].image) == dataset[si].label ? 1 : 0;
  });
  std::vector<int> correct;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (ok[i]) correct.push_back(static_cast<int>(i));
  if (static_cast<int>(correct.size()) < n)
    throw SelectionError("not enough correctly classified images for n=" +
                             std::to_string(n),
                         static_cast<int>(correct.size()));
  Rng rng(seed);
  rng.shuffle(correct);
  std::vector<LabeledExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(dataset[static_cast<std::size_t>(correct[static_cast<std::size_t>(i)])]);
  return out;
}

SaeSet build_sae_set(const ModelParams& params,
                     const std::vector<LabeledExample>& benign,
                     const AttackConfig& cfg, int threads) {
  SaeSet sae;
  sae.attack_tag = cfg.tag.empty() ? "(unnamed)" : cfg.tag;
  sae.seed = cfg.seed;
  sae.model_fingerprint = model_fingerprint(params);

  struct Slot {
    bool keep = false;
    SaeEntry entry;
  };
  std::vector<Slot> slots(benign.size());
  std::vector<std::string> failures(benign.size());
  parallel_for(static_cast<int>(benign.size()), threads, [&](int i) {
    const std::size_t si = static_cast<std::size_t>(i);
    try {
      const AttackResult r = run_attack(params, benign[si], cfg);
      const ImageTensor adv = quantize8(r.adversarial);
      const int adv_label = predict(params, adv);
      if (adv_label != benign[si].label) {
        Slot& s = slots[si];
        s.keep = true;
        s.entry.original = benign[si];
        s.entry.adversarial = adv;
        s.entry.adversarial_label = adv_label;
        s.entry.l2 = l2_distance(adv, benign[si].image);
        s.entry.linf = linf_distance(adv, benign[si].image);
      }
    } catch (const std::exception& e) {
      failures[si] = e.what();
    }
  });
  for (std::size_t i = 0; i < failures.size(); ++i)
    if (!failures[i].empty())
      throw std::runtime_error("attack '" + sae.attack_tag + "' failed on image " +
                               std::to_string(i) + ": " + failures[i]);
  for (auto& s : slots)
    if (s.keep) sae.entries.push_back(std::move(s.entry));
  return sae;
}

bool verify_sae_set(const ModelParams& params, const SaeSet& sae, int threads) {
  if (model_fingerprint(params) != sae.model_fingerprint)
    throw RejectedInput("SAE set was built against a different model (fingerprint " +
                        hex64(sae.model_fingerprint) + ")");
  std::vector<char> good(sae.entries.size(), 0);
  parallel_for(static_cast<int>(sae.entries.size()), threads, [&](int i) {
    const SaeEntry& e = sae.entries[static_cast<std::size_t>(i)];
    good[static_cast<std::size_t>(i)] =
        predict(params, e.original.image) == e.original.label &&
        predict(params, e.adversarial) != e.original.label;
  });
  return std::all_of(good.begin(), good.end(), [](char c) { return c != 0; });
}

void save_sae_set(const SaeSet& sae, const std::string& dir) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  std::ofstream manifest(root / "manifest.csv", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write SAE manifest in " + dir);
  manifest << "index,label,adv_label,l2,linf\n";
  char name[32];
  for (std::size_t i = 0; i < sae.entries.size(); ++i) {
    const SaeEntry& e = sae.entries[i];
    std::snprintf(name, sizeof name, "orig_%05zu.png", i);
    write_png((root / name).string(), e.original.image);
    std::snprintf(name, sizeof name, "adv_%05zu.png", i);
    write_png((root / name).string(), e.adversarial);
    manifest << i << "," << e.original.label << "," << e.adversarial_label << ","
             << csv_double(e.l2) << "," << csv_double(e.linf) << "\n";
  }
  ordered_json meta;
  meta["attack"] = sae.attack_tag;
  meta["seed"] = sae.seed;
  meta["model_fingerprint"] = hex64(sae.model_fingerprint);
  meta["n"] = sae.entries.size();
  std::ofstream mf(root / "meta.json", std::ios::trunc);
  mf << meta.dump(2) << "\n";
}

SaeSet load_sae_set(const std::string& dir) {
  const std::filesystem::path root(dir);
  std::ifstream mf(root / "meta.json");
  if (!mf) throw std::runtime_error("cannot open " + dir + "/meta.json");
  ordered_json meta = ordered_json::parse(mf);
  SaeSet sae;
  sae.attack_tag = meta.at("attack").get<std::string>();
  sae.seed = meta.at("seed").get<std::uint64_t>();
  sae.model_fingerprint =
      std::stoull(meta.at("model_fingerprint").get<std::string>(), nullptr, 16);

  std::ifstream manifest(root / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot open " + dir + "/manifest.csv");
  std::string line;
  std::getline(manifest, line);  // header
  char name[32];
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string field;
    SaeEntry e;
    std::getline(is, field, ',');
    const std::size_t idx = std::stoul(field);
    std::getline(is, field, ',');
    e.original.label = std::stoi(field);
    std::getline(is, field, ',');
    e.adversarial_label = std::stoi(field);
    std::getline(is, field, ',');
    e.l2 = std::stod(field);
    std::getline(is, field, ',');
    e.linf = std::stod(field);
    std::snprintf(name, sizeof name, "orig_%05zu.png", idx);
    e.original.image = read_png((root / name).string());
    std::snprintf(name, sizeof name, "adv_%05zu.png", idx);
    e.adversarial = read_png((root / name).string());
    sae.entries.push_back(std::move(e));
  }
  return sae;
}

double top1_accuracy(const ModelParams& params, const DefenseSpec& spec,
                     const std::vector<LabeledExample>& examples,
                     const ExternRegistry* extern_commands, int threads) {
  if (examples.empty()) throw RejectedInput("top1_accuracy needs a non-empty example list");
  std::vector<double> correct(examples.size(), 0.0);
  parallel_for(static_cast<int>(examples.size()), threads, [&](int i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const ImageTensor defended = apply_defense(spec, examples[si].image, extern_commands);
    correct[si] = predict(params, defended) == examples[si].label ? 1.0 : 0.0;
  });
  return ordered_mean(correct);
}

EvalReport run_matrix(const ModelParams& params,
                      const std::vector<LabeledExample>& dataset,
                      const std::vector<AttackConfig>& attacks,
                      const std::vector<DefenseSpec>& defenses, int n,
                      std::uint64_t seed, const ExternRegistry* extern_commands,
                      int threads) {
  if (defenses.empty()) throw RejectedInput("defense list is empty");
  EvalReport report;
  report.report_version = kReportVersion;
  report.tool_version = kToolVersion;
  report.model_fingerprint = hex64(model_fingerprint(params));
  report.seed = seed;
  report.n = n;
  for (const DefenseSpec& d : defenses) report.defenses.push_back(d.name);

  const std::vector<LabeledExample> benign =
      select_benign(params, dataset, n, derive_seed(seed, 0), threads);

  std::vector<SaeSet> sae_sets;
  sae_sets.reserve(attacks.size());
  for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
    AttackConfig cfg = attacks[ai];
    cfg.seed = derive_seed(seed, 1 + ai);
    sae_sets.push_back(build_sae_set(params, benign, cfg, threads));
    const SaeSet& sae = sae_sets.back();
    AttackSummary s;
    s.tag = sae.attack_tag;
    s.n_benign = static_cast<int>(benign.size());
    s.n_sae = static_cast<int>(sae.entries.size());
    s.success_rate = benign.empty() ? 0.0
                                    : static_cast<double>(s.n_sae) /
                                          static_cast<double>(s.n_benign);
    double l2 = 0.0, linf = 0.0;
    for (const SaeEntry& e : sae.entries) {
      l2 += e.l2;
      linf += e.linf;
    }
    if (s.n_sae > 0) {
      s.mean_l2 = l2 / s.n_sae;
      s.mean_linf = linf / s.n_sae;
    }
    report.attacks.push_back(s);
  }

  // benign rows: defended accuracy and quality on clean inputs
  std::vector<const ImageTensor*> benign_origs;
  for (const auto& ex : benign) benign_origs.push_back(&ex.image);
  for (const DefenseSpec& d : defenses) {
    EvalCell cell = evaluate_cell(params, d, benign, benign_origs, extern_commands, threads);
    cell.attack = "benign";
    cell.mean_l2 = 0.0;
    report.cells.push_back(std::move(cell));
  }

  // one row per (attack, defense); every cell of one attack sees the same SAE list
  for (std::size_t ai = 0; ai < sae_sets.size(); ++ai) {
    const SaeSet& sae = sae_sets[ai];
    std::vector<LabeledExample> inputs;
    std::vector<const ImageTensor*> origs;
    inputs.reserve(sae.entries.size());
    for (const SaeEntry& e : sae.entries) {
      inputs.push_back({e.adversarial, e.original.label});
      origs.push_back(&e.original.image);
    }
    for (const DefenseSpec& d : defenses) {
      if (inputs.empty()) {
        EvalCell cell;
        cell.attack = sae.attack_tag;
        cell.defense = d.name;
        report.cells.push_back(std::move(cell));
        continue;
      }
      EvalCell cell = evaluate_cell(params, d, inputs, origs, extern_commands, threads);
      cell.attack = sae.attack_tag;
      cell.mean_l2 = report.attacks[ai].mean_l2;
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  j["report_version"] = report.report_version;
  j["tool_version"] = report.tool_version;
  j["model_fingerprint"] = report.model_fingerprint;
  j["dataset"] = {{"source", report.dataset.source},
                  {"class_count", report.dataset.class_count},
                  {"height", report.dataset.height},
                  {"width", report.dataset.width},
                  {"channels", report.dataset.channels},
                  {"size", report.dataset.size},
                  {"seed", report.dataset.seed}};
  j["seed"] = report.seed;
  j["n"] = report.n;
  j["defenses"] = report.defenses;
  j["attacks"] = ordered_json::array();
  for (const AttackSummary& a : report.attacks)
    j["attacks"].push_back({{"tag", a.tag},
                            {"n_benign", a.n_benign},
                            {"n_sae", a.n_sae},
                            {"success_rate", a.success_rate},
                            {"mean_l2", a.mean_l2},
                            {"mean_linf", a.mean_linf}});
  j["cells"] = ordered_json::array();
  for (const EvalCell& c : report.cells)
    j["cells"].push_back({{"attack", c.attack},
                          {"defense", c.defense},
                          {"n", c.n},
                          {"top1", c.top1},
                          {"mean_l2", c.mean_l2},
                          {"mean_psnr", json_psnr(c.mean_psnr)}});
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "attack,defense,n,accuracy,mean_l2,mean_psnr\n";
  for (const EvalCell& c : report.cells)
    os << "\"" << c.attack << "\",\"" << c.defense << "\"," << c.n << ","
       << csv_double(c.top1) << "," << csv_double(c.mean_l2) << ","
       << csv_double(c.mean_psnr) << "\n";
  return os.str();
}

std::vector<QfSweep> qf_sweep(const ModelParams& params,
                              const std::vector<SaeSet>& sae_sets,
                              TransformKind codec, const std::vector<int>& qfs,
                              int threads) {
  if (qfs.empty()) throw RejectedInput("qf list is empty");
  if (codec != TransformKind::JpegLike && codec != TransformKind::WebpLike)
    throw RejectedInput("qf_sweep needs a codec transform");
  std::vector<QfSweep> out;
  for (const SaeSet& sae : sae_sets) {
    if (sae.entries.empty())
      throw RejectedInput("SAE set '" + sae.attack_tag + "' is empty");
    std::vector<LabeledExample> inputs;
    inputs.reserve(sae.entries.size());
    for (const SaeEntry& e : sae.entries)
      inputs.push_back({e.adversarial, e.original.label});
    QfSweep sweep;
    sweep.attack_tag = sae.attack_tag;
    sweep.codec = codec == TransformKind::JpegLike ? "jpeg" : "webp";
    double lo_sum = 0.0, hi_sum = 0.0;
    int lo_n = 0, hi_n = 0;
    for (const int qf : qfs) {
      DefenseSpec spec;
      spec.transforms.push_back({codec, qf, ""});
      spec.name = format_defense_spec(spec);
      const double acc = top1_accuracy(params, spec, inputs, nullptr, threads);
      sweep.rows.push_back({qf, acc});
      if (qf < 50) {
        lo_sum += acc;
        ++lo_n;
      } else {
        hi_sum += acc;
        ++hi_n;
      }
    }
    sweep.low_bucket_mean = lo_n > 0 ? lo_sum / lo_n : 0.0;
    sweep.high_bucket_mean = hi_n > 0 ? hi_sum / hi_n : 0.0;
    out.push_back(std::move(sweep));
  }
  return out;
}

std::vector<PsnrRow> psnr_report(const std::vector<ImageTensor>& images,
                                 TransformKind codec, const std::vector<int>& qfs,
                                 int threads) {
  if (images.empty()) throw RejectedInput("psnr_report needs images");
  if (codec != TransformKind::JpegLike && codec != TransformKind::WebpLike)
    throw RejectedInput("psnr_report needs a codec transform");
  std::vector<PsnrRow> rows;
  for (const int qf : qfs) {
    std::vector<double> values(images.size(), 0.0);
    parallel_for(static_cast<int>(images.size()), threads, [&](int i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const ImageTensor rt = codec == TransformKind::JpegLike
                                 ? jpeg_like_roundtrip(images[si], qf)
                                 : webp_like_roundtrip(images[si], qf);
      values[si] = psnr(images[si], rt);
    });
    PsnrRow row;
    row.qf = qf;
    row.mean = ordered_mean(values);
    row.min = *std::min_element(values.begin(), values.end());
    row.max = *std::max_element(values.begin(), values.end());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace prepguard
