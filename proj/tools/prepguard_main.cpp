// prepguard command line: train models, generate adversarial examples, apply
// preprocessing defenses, and run the evaluation matrix.
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "prepguard/attacks.hpp"
#include "prepguard/codecs.hpp"
#include "prepguard/dataset.hpp"
#include "prepguard/defense.hpp"
#include "prepguard/errors.hpp"
#include "prepguard/evaluation.hpp"
#include "prepguard/model.hpp"
#include "prepguard/png_io.hpp"
#include "prepguard/rng.hpp"
#include "prepguard/threadpool.hpp"
#include "prepguard/version.hpp"

namespace pg = prepguard;

namespace {

struct DataOptions {
  std::string spec = "synth";
  int k = 10, height = 32, width = 32;
  int n_train = 2000, n_eval = 500;
};

DataOptions parse_data_spec(const std::string& text) {
  DataOptions opt;
  opt.spec = text;
  if (text.rfind("synth", 0) != 0) return opt;  // directory source
  const auto colon = text.find(':');
  if (colon == std::string::npos) return opt;
  std::stringstream ss(text.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw pg::ParseError("expected key=value in data spec", 0);
    const std::string key = item.substr(0, eq);
    const int val = std::stoi(item.substr(eq + 1));
    if (key == "k") opt.k = val;
    else if (key == "h") opt.height = val;
    else if (key == "w") opt.width = val;
    else if (key == "train") opt.n_train = val;
    else if (key == "eval") opt.n_eval = val;
    else throw pg::ParseError("unknown data parameter '" + key + "'", 0);
  }
  return opt;
}

bool is_synth(const std::string& spec) { return spec.rfind("synth", 0) == 0; }

// The synthetic corpus is one seeded stream: the first n_train images train
// the model, the rest are held out, so a shared --seed never leaks training
// images into evaluation.
pg::Dataset synth_split(const DataOptions& opt, std::uint64_t seed, bool eval_split) {
  const std::uint64_t data_seed = pg::derive_seed(seed, 0xda7a);
  pg::Dataset all = pg::synth_dataset(opt.n_train + opt.n_eval, opt.k, opt.height,
                                      opt.width, data_seed);
  pg::Dataset out;
  out.desc = all.desc;
  const std::size_t lo = eval_split ? static_cast<std::size_t>(opt.n_train) : 0;
  const std::size_t hi = eval_split ? all.examples.size()
                                    : static_cast<std::size_t>(opt.n_train);
  out.examples.assign(all.examples.begin() + static_cast<std::ptrdiff_t>(lo),
                      all.examples.begin() + static_cast<std::ptrdiff_t>(hi));
  out.desc.size = static_cast<int>(out.examples.size());
  out.desc.source = eval_split ? opt.spec + "#eval" : opt.spec + "#train";
  return out;
}

pg::Dataset resolve_dataset(const std::string& data, std::uint64_t seed, bool eval_split) {
  if (is_synth(data)) return synth_split(parse_data_spec(data), seed, eval_split);
  return pg::load_dataset(data, "manifest.csv");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << content;
}

std::vector<int> parse_qf_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const int qf = std::stoi(item);
    if (qf < 0 || qf > 100) throw pg::ParseError("quality factor outside [0,100]", 0);
    out.push_back(qf);
  }
  if (out.empty()) throw pg::ParseError("empty qf list", 0);
  return out;
}

pg::ExternRegistry parse_extern_flags(const std::vector<std::string>& flags) {
  pg::ExternRegistry reg;
  for (const std::string& f : flags) {
    const auto eq = f.find('=');
    if (eq == std::string::npos || eq == 0)
      throw pg::ParseError("--extern expects TAG=COMMAND", 0);
    reg[f.substr(0, eq)] = f.substr(eq + 1);
  }
  return reg;
}

int cmd_train(const std::string& data, const std::string& out, pg::TrainConfig cfg,
              std::uint64_t seed, int /*threads*/) {
  cfg.seed = seed;
  const pg::Dataset train_ds = resolve_dataset(data, seed, /*eval_split=*/false);
  const pg::ModelParams params =
      pg::train(train_ds.examples, train_ds.desc.class_count, cfg);
  pg::save_model(params, out);

  double train_acc = 0.0;
  for (const auto& ex : train_ds.examples)
    train_acc += pg::predict(params, ex.image) == ex.label ? 1.0 : 0.0;
  train_acc /= static_cast<double>(train_ds.examples.size());
  std::printf("trained on %d images, train top-1 %.4f\n", train_ds.desc.size, train_acc);

  if (is_synth(data)) {
    const pg::Dataset eval_ds = resolve_dataset(data, seed, /*eval_split=*/true);
    double acc = 0.0;
    for (const auto& ex : eval_ds.examples)
      acc += pg::predict(params, ex.image) == ex.label ? 1.0 : 0.0;
    acc /= static_cast<double>(eval_ds.examples.size());
    std::printf("held-out top-1 %.4f on %d images\n", acc, eval_ds.desc.size);
  }
  std::printf("model written to %s (fingerprint 0x%016" PRIx64 ")\n", out.c_str(),
              pg::model_fingerprint(params));
  return 0;
}

int cmd_attack(const std::string& model_path, const std::string& data,
               const std::string& attacks, int n, std::uint64_t seed,
               const std::string& out_dir, int threads) {
  const auto configs = pg::parse_attack_list(attacks);
  const pg::ModelParams params = pg::load_model(model_path);
  const pg::Dataset ds = resolve_dataset(data, seed, /*eval_split=*/true);
  const auto benign =
      pg::select_benign(params, ds.examples, n, pg::derive_seed(seed, 0), threads);
  std::filesystem::create_directories(out_dir);
  for (std::size_t ai = 0; ai < configs.size(); ++ai) {
    pg::AttackConfig cfg = configs[ai];
    cfg.seed = pg::derive_seed(seed, 1 + ai);
    const pg::SaeSet sae = pg::build_sae_set(params, benign, cfg, threads);
    std::string sub = cfg.tag;
    for (char& c : sub)
      if (c == ':' || c == '/' || c == ',' || c == '=') c = '_';
    const std::string dir = out_dir + "/" + sub;
    pg::save_sae_set(sae, dir);
    std::printf("%s: %zu/%zu successful, saved to %s\n", cfg.tag.c_str(),
                sae.entries.size(), benign.size(), dir.c_str());
  }
  return 0;
}

int cmd_defend(const std::string& in_dir, const std::string& spec_text,
               const std::string& out_dir,
               const std::vector<std::string>& extern_flags, int threads) {
  const pg::DefenseSpec spec = pg::parse_defense_spec(spec_text);
  const pg::ExternRegistry reg = parse_extern_flags(extern_flags);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  pg::parallel_for(static_cast<int>(files.size()), threads, [&](int i) {
    const auto& p = files[static_cast<std::size_t>(i)];
    const pg::ImageTensor img = pg::read_png(p.string());
    const pg::ImageTensor defended = pg::apply_defense(spec, img, &reg);
    pg::write_png((std::filesystem::path(out_dir) / p.filename()).string(), defended);
  });
  std::printf("defended %zu images with \"%s\" into %s\n", files.size(),
              spec.name.c_str(), out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data,
             const std::string& attacks, const std::string& defenses, int n,
             std::uint64_t seed, const std::string& out,
             const std::vector<std::string>& extern_flags, int threads) {
  const auto attack_cfgs = pg::parse_attack_list(attacks);
  const auto defense_specs = pg::parse_defense_list(defenses);
  const pg::ExternRegistry reg = parse_extern_flags(extern_flags);
  const pg::ModelParams params = pg::load_model(model_path);
  const pg::Dataset ds = resolve_dataset(data, seed, /*eval_split=*/true);

  pg::EvalReport report = pg::run_matrix(params, ds.examples, attack_cfgs,
                                         defense_specs, n, seed, &reg, threads);
  report.dataset = ds.desc;

  write_file(out, pg::report_to_json(report));
  std::string csv_path = out;
  const auto dot = csv_path.rfind('.');
  if (dot != std::string::npos) csv_path.erase(dot);
  csv_path += ".csv";
  write_file(csv_path, pg::report_to_csv(report));

  for (const auto& c : report.cells)
    std::printf("%-24s %-24s n=%-4d top1=%.4f\n", c.attack.c_str(), c.defense.c_str(),
                c.n, c.top1);
  std::printf("report written to %s and %s\n", out.c_str(), csv_path.c_str());
  return 0;
}

int cmd_psnr(const std::string& codecs, const std::string& qf_text,
             const std::string& data, std::uint64_t seed, const std::string& out,
             int threads) {
  const std::vector<int> qfs = parse_qf_list(qf_text);
  std::vector<pg::ImageTensor> images;
  if (is_synth(data)) {
    const DataOptions opt = parse_data_spec(data);
    const pg::Dataset ds = synth_split(opt, seed, /*eval_split=*/true);
    for (const auto& ex : ds.examples) images.push_back(ex.image);
  } else if (data == "corpus") {
    images = pg::codec_test_corpus(50, 32, 32, 3, pg::derive_seed(seed, 0xc0de));
  } else {
    const pg::Dataset ds = pg::load_dataset(data, "manifest.csv");
    for (const auto& ex : ds.examples) images.push_back(ex.image);
  }

  std::ostringstream csv;
  csv << "codec,qf,mean_psnr,min_psnr,max_psnr\n";
  std::stringstream ss(codecs);
  std::string codec;
  while (std::getline(ss, codec, ',')) {
    pg::TransformKind kind;
    if (codec == "jpeg") kind = pg::TransformKind::JpegLike;
    else if (codec == "webp") kind = pg::TransformKind::WebpLike;
    else throw pg::ParseError("unknown codec '" + codec + "'", 0);
    for (const pg::PsnrRow& row : pg::psnr_report(images, kind, qfs, threads)) {
      char line[160];
      std::snprintf(line, sizeof line, "%s,%d,%.4f,%.4f,%.4f\n", codec.c_str(), row.qf,
                    row.mean, row.min, row.max);
      csv << line;
      std::printf("%s qf=%3d mean %.2f dB (min %.2f, max %.2f)\n", codec.c_str(),
                  row.qf, row.mean, row.min, row.max);
    }
  }
  write_file(out, csv.str());
  std::printf("table written to %s\n", out.c_str());
  return 0;
}

int cmd_synth(int n, int k, int height, int width, std::uint64_t seed,
              const std::string& out_dir) {
  const pg::Dataset ds = pg::synth_dataset(n, k, height, width, seed);
  pg::save_dataset(ds, out_dir);
  std::printf("wrote %d images (%d classes, %dx%d) to %s\n", n, k, height, width,
              out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prepguard: preprocessing defenses against adversarial examples"};
  app.set_version_flag("--version", pg::kToolVersion);
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  int threads = 0;
  app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();
  app.add_option("--threads", threads,
                 "worker threads (0 = PREPGUARD_THREADS or logical cores)");

  auto* train = app.add_subcommand("train", "train the small classifier");
  std::string train_data = "synth", train_out = "model.pgrd";
  pg::TrainConfig tc;
  bool no_flip_aug = false;
  train->add_option("--data", train_data, "synth[:k=10,h=32,w=32,train=2000,eval=500] or a dataset dir");
  train->add_option("--out", train_out, "output model path")->capture_default_str();
  train->add_option("--epochs", tc.epochs)->capture_default_str();
  train->add_option("--batch", tc.batch_size)->capture_default_str();
  train->add_option("--lr", tc.learning_rate)->capture_default_str();
  train->add_option("--momentum", tc.momentum)->capture_default_str();
  train->add_flag("--no-flip-aug", no_flip_aug, "disable left-right flip augmentation");

  auto* attack = app.add_subcommand("attack", "build successful-adversarial-example sets");
  std::string atk_model, atk_data = "synth", atk_list = "ifgsm:eps=8/255,deepfool,cw";
  std::string atk_out = "sae";
  int atk_n = 200;
  attack->add_option("--model", atk_model)->required();
  attack->add_option("--data", atk_data);
  attack->add_option("--attacks", atk_list)->capture_default_str();
  attack->add_option("--n", atk_n, "benign pool size")->capture_default_str();
  attack->add_option("--out", atk_out, "output directory")->capture_default_str();

  auto* defend = app.add_subcommand("defend", "apply a defense to a directory of PNGs");
  std::string def_in, def_spec = "webp:70,fliplr", def_out;
  std::vector<std::string> def_extern;
  defend->add_option("--in", def_in)->required();
  defend->add_option("--spec", def_spec)->capture_default_str();
  defend->add_option("--out", def_out)->required();
  defend->add_option("--extern", def_extern, "TAG=COMMAND with {in}/{out} placeholders");

  auto* eval = app.add_subcommand("eval", "accuracy matrix over attacks x defenses");
  std::string ev_model, ev_data = "synth";
  std::string ev_attacks = "ifgsm:eps=8/255,deepfool,cw";
  std::string ev_defenses = "none;jpeg:50;webp:70;fliplr;webp:70,fliplr;fliplr,webp:70";
  std::string ev_out = "report.json";
  std::vector<std::string> ev_extern;
  int ev_n = 200;
  eval->add_option("--model", ev_model)->required();
  eval->add_option("--data", ev_data);
  eval->add_option("--attacks", ev_attacks)->capture_default_str();
  eval->add_option("--defenses", ev_defenses)->capture_default_str();
  eval->add_option("--n", ev_n)->capture_default_str();
  eval->add_option("--out", ev_out)->capture_default_str();
  eval->add_option("--extern", ev_extern, "TAG=COMMAND with {in}/{out} placeholders");

  auto* psnr_cmd = app.add_subcommand("psnr", "codec quality sweep");
  std::string ps_codecs = "jpeg,webp", ps_qf = "10,20,30,40,60,80,100";
  std::string ps_data = "corpus", ps_out = "psnr.csv";
  psnr_cmd->add_option("--codecs", ps_codecs)->capture_default_str();
  psnr_cmd->add_option("--qf", ps_qf)->capture_default_str();
  psnr_cmd->add_option("--data", ps_data, "corpus, synth[:...], or a dataset dir")
      ->capture_default_str();
  psnr_cmd->add_option("--out", ps_out)->capture_default_str();

  auto* synth = app.add_subcommand("synth", "export a synthetic dataset as PNGs");
  int sy_n = 500, sy_k = 10, sy_h = 32, sy_w = 32;
  std::string sy_out = "dataset";
  synth->add_option("--n", sy_n)->capture_default_str();
  synth->add_option("--k", sy_k)->capture_default_str();
  synth->add_option("--height", sy_h)->capture_default_str();
  synth->add_option("--width", sy_w)->capture_default_str();
  synth->add_option("--out", sy_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    threads = pg::resolve_threads(threads);
    tc.flip_augmentation = !no_flip_aug;
    if (train->parsed()) return cmd_train(train_data, train_out, tc, seed, threads);
    if (attack->parsed())
      return cmd_attack(atk_model, atk_data, atk_list, atk_n, seed, atk_out, threads);
    if (defend->parsed()) return cmd_defend(def_in, def_spec, def_out, def_extern, threads);
    if (eval->parsed())
      return cmd_eval(ev_model, ev_data, ev_attacks, ev_defenses, ev_n, seed, ev_out,
                      ev_extern, threads);
    if (psnr_cmd->parsed()) return cmd_psnr(ps_codecs, ps_qf, ps_data, seed, ps_out, threads);
    if (synth->parsed()) return cmd_synth(sy_n, sy_k, sy_h, sy_w, seed, sy_out);
  } catch (const pg::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const pg::RejectedInput& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
