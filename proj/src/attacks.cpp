#include "prepguard/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prepguard/errors.hpp"

namespace prepguard {

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

AttackResult finish(const ModelParams& params, const LabeledExample& example,
                    ImageTensor adversarial, int iterations_used) {
  AttackResult r;
  r.adversarial = std::move(adversarial);
  r.original_label = example.label;
  r.adversarial_label = predict(params, r.adversarial);
  r.success = r.adversarial_label != r.original_label;
  r.iterations_used = iterations_used;
  Perturbation& p = r.perturbation;
  p.height = r.adversarial.height;
  p.width = r.adversarial.width;
  p.channels = r.adversarial.channels;
  p.delta.resize(r.adversarial.data.size());
  double sq = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < p.delta.size(); ++i) {
    const double d = r.adversarial.data[i] - example.image.data[i];
    p.delta[i] = d;
    sq += d * d;
    mx = std::max(mx, std::fabs(d));
  }
  p.l2 = std::sqrt(sq);
  p.linf = mx;
  return r;
}

void require_positive_eps(const AttackConfig& cfg) {
  if (!(cfg.epsilon.value > 0.0 && cfg.epsilon.value <= 1.0))
    throw RejectedInput("epsilon must lie in (0,1]");
}

// One gradient-descent run of the C&W objective at a fixed lambda. Returns
// the best successful iterate found (by L2), if any. Iterates whose 8-bit
// rounding still fools the model are preferred: they survive PNG storage.
struct CwRun {
  bool success = false;
  bool robust = false;
  double best_l2 = std::numeric_limits<double>::infinity();
  ImageTensor best;
  ImageTensor final_iterate;
  int steps = 0;
};

CwRun cw_descend(const ModelParams& params, const LabeledExample& example,
                 const AttackConfig& cfg, double lambda) {
  const ImageTensor& x0 = example.image;
  const int y = example.label;
  const int n = x0.size();

  // tanh change of variables keeps iterates inside (0,1) without projection
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double c = std::min(1.0 - 1e-8, std::max(1e-8, x0.data[static_cast<std::size_t>(i)]));
    w[static_cast<std::size_t>(i)] = std::atanh(2.0 * c - 1.0);
  }

  CwRun run;
  ImageTensor cur = x0;
  for (int step = 0; step < cfg.cw_max_steps; ++step) {
    std::vector<double> th(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      th[static_cast<std::size_t>(i)] = std::tanh(w[static_cast<std::size_t>(i)]);
      cur.data[static_cast<std::size_t>(i)] = (th[static_cast<std::size_t>(i)] + 1.0) / 2.0;
    }

    Logits logits;
    int runner_up = -1;
    bool margin_active = false;
    double margin = 0.0;
    auto seeds_fn = [&](const Logits& z) {
      double other = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < static_cast<int>(z.size()); ++k) {
        if (k == y) continue;
        if (z[static_cast<std::size_t>(k)] > other) {
          other = z[static_cast<std::size_t>(k)];
          runner_up = k;
        }
      }
      margin = z[static_cast<std::size_t>(y)] - other;
      margin_active = margin > -cfg.kappa;
      std::vector<std::vector<double>> seeds;
      if (margin_active) {
        std::vector<double> seed(z.size(), 0.0);
        seed[static_cast<std::size_t>(y)] = 1.0;
        seed[static_cast<std::size_t>(runner_up)] = -1.0;
        seeds.push_back(std::move(seed));
      }
      return seeds;
    };
    const auto margin_grads = grad_logit_combos(params, cur, seeds_fn, &logits);

    double dist_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = cur.data[static_cast<std::size_t>(i)] - x0.data[static_cast<std::size_t>(i)];
      dist_sq += d * d;
    }
    const double loss = dist_sq + lambda * std::max(-cfg.kappa, margin);
    if (!std::isfinite(loss) || !std::isfinite(margin))
      throw OptimizationDiverged("C&W objective became non-finite", step);

    int pred = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[static_cast<std::size_t>(pred)]) pred = static_cast<int>(k);
    if (pred != y) {
      const double l2 = std::sqrt(dist_sq);
      const bool quant_fools = predict(params, quantize8(cur)) != y;
      // a rounding-robust iterate always beats a fragile one
      if ((quant_fools && !run.robust) ||
          (l2 < run.best_l2 && quant_fools == run.robust)) {
        run.best_l2 = l2;
        run.best = cur;
        run.success = true;
        run.robust = quant_fools;
      }
    }

    for (int i = 0; i < n; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      double dx = 2.0 * (cur.data[si] - x0.data[si]);
      if (margin_active) dx += lambda * margin_grads[0].data[si];
      const double dw = dx * (1.0 - th[si] * th[si]) / 2.0;
      w[si] -= cfg.cw_learning_rate * dw;
    }
    run.steps = step + 1;
  }

  for (int i = 0; i < n; ++i)
    cur.data[static_cast<std::size_t>(i)] =
        (std::tanh(w[static_cast<std::size_t>(i)]) + 1.0) / 2.0;
  run.final_iterate = std::move(cur);
  return run;
}

}  // namespace

ImageTensor clip_ball(const ImageTensor& origin, const ImageTensor& candidate,
                      double epsilon) {
  require_same_shape(origin, candidate, "clip_ball");
  if (!(epsilon > 0.0)) throw RejectedInput("epsilon must be positive");
  ImageTensor out = candidate;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double lo = origin.data[i] - epsilon, hi = origin.data[i] + epsilon;
    out.data[i] = clamp01(std::min(hi, std::max(lo, out.data[i])));
  }
  return out;
}

AttackResult fgsm(const ModelParams& params, const LabeledExample& example,
                  const AttackConfig& cfg) {
  require_positive_eps(cfg);
  const InputGradient g = grad_input(params, example);
  ImageTensor adv = example.image;
  for (std::size_t i = 0; i < adv.data.size(); ++i)
    adv.data[i] = clamp01(adv.data[i] + cfg.epsilon.value * sign0(g.data[i]));
  return finish(params, example, std::move(adv), 1);
}

AttackResult ifgsm(const ModelParams& params, const LabeledExample& example,
                   const AttackConfig& cfg) {
  require_positive_eps(cfg);
  if (cfg.iterations <= 0) throw RejectedInput("iterations must be positive");
  const double eps = cfg.epsilon.value;
  const double step = cfg.step_size.value > 0.0
                          ? cfg.step_size.value
                          : std::min(eps, 2.0 * eps / cfg.iterations);
  if (step > eps + 1e-15) throw RejectedInput("step size must not exceed epsilon");

  ImageTensor cur = example.image;
  for (int it = 0; it < cfg.iterations; ++it) {
    const InputGradient g = grad_input(params, {cur, example.label});
    ImageTensor cand = cur;
    for (std::size_t i = 0; i < cand.data.size(); ++i)
      cand.data[i] += step * sign0(g.data[i]);
    cur = clip_ball(example.image, cand, eps);
  }
  return finish(params, example, std::move(cur), cfg.iterations);
}

AttackResult deepfool(const ModelParams& params, const LabeledExample& example,
                      const AttackConfig& cfg) {
  if (cfg.iterations <= 0) throw RejectedInput("iterations must be positive");
  if (cfg.overshoot < 0.0) throw RejectedInput("overshoot must be non-negative");
  if (params.class_count < 2) throw RejectedInput("DeepFool needs at least two classes");

  const ImageTensor& x0 = example.image;
  const int ref = example.label;
  if (predict(params, x0) != ref)
    return finish(params, example, x0, 0);  // nothing to do, already past a boundary

  const int n = x0.size();
  const int K = params.class_count;
  // The loop walks the unscaled iterate x0 + r_tot to the nearest boundary;
  // the overshoot factor is applied once, to the final output only.
  std::vector<double> r_tot(static_cast<std::size_t>(n), 0.0);
  auto iterate_image = [&](double scale) {
    ImageTensor img = x0;
    for (int i = 0; i < n; ++i)
      img.data[static_cast<std::size_t>(i)] =
          clamp01(x0.data[static_cast<std::size_t>(i)] +
                  scale * r_tot[static_cast<std::size_t>(i)]);
    return img;
  };

  int iterations_used = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const ImageTensor cur = iterate_image(1.0);
    Logits logits;
    // gradients of every logit difference f_k = Z_k - Z_ref
    auto seeds_fn = [&](const Logits& z) {
      std::vector<std::vector<double>> seeds;
      for (int k = 0; k < K; ++k) {
        if (k == ref) continue;
        std::vector<double> seed(z.size(), 0.0);
        seed[static_cast<std::size_t>(k)] = 1.0;
        seed[static_cast<std::size_t>(ref)] = -1.0;
        seeds.push_back(std::move(seed));
      }
      return seeds;
    };
    const auto grads = grad_logit_combos(params, cur, seeds_fn, &logits);

    int pred = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[static_cast<std::size_t>(pred)]) pred = static_cast<int>(k);
    if (pred != ref) break;

    // nearest linearized boundary: minimize |f_k| / ||grad f_k||
    int best = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_f = 0.0, best_norm_sq = 0.0;
    int gi = 0;
    for (int k = 0; k < K; ++k) {
      if (k == ref) continue;
      double norm_sq = 0.0;
      for (const double v : grads[static_cast<std::size_t>(gi)].data) norm_sq += v * v;
      const double f = logits[static_cast<std::size_t>(k)] - logits[static_cast<std::size_t>(ref)];
      if (norm_sq > 1e-24) {
        const double ratio = std::fabs(f) / std::sqrt(norm_sq);
        if (ratio < best_ratio) {
          best_ratio = ratio;
          best = gi;
          best_f = f;
          best_norm_sq = norm_sq;
        }
      }
      ++gi;
    }
    if (best < 0)
      throw DegenerateInput("DeepFool: every logit difference has zero gradient");

    const double scale = std::fabs(best_f) / best_norm_sq;
    for (int i = 0; i < n; ++i)
      r_tot[static_cast<std::size_t>(i)] +=
          scale * grads[static_cast<std::size_t>(best)].data[static_cast<std::size_t>(i)];
    iterations_used = it + 1;
  }
  return finish(params, example, iterate_image(1.0 + cfg.overshoot), iterations_used);
}

AttackResult cw_l2(const ModelParams& params, const LabeledExample& example,
                   const AttackConfig& cfg) {
  if (cfg.lambda <= 0.0) throw RejectedInput("lambda must be positive");
  if (cfg.kappa < 0.0) throw RejectedInput("kappa must be non-negative");
  if (cfg.cw_learning_rate <= 0.0 || cfg.cw_max_steps <= 0)
    throw RejectedInput("invalid C&W optimizer configuration");

  CwRun best_run;
  ImageTensor last_final;
  int total_steps = 0;

  if (!cfg.cw_binary_search) {
    // fixed lambda, one x10 retry if the first run never crossed
    CwRun run = cw_descend(params, example, cfg, cfg.lambda);
    total_steps += run.steps;
    last_final = run.final_iterate;
    if (run.success) {
      best_run = std::move(run);
    } else {
      CwRun retry = cw_descend(params, example, cfg, cfg.lambda * 10.0);
      total_steps += retry.steps;
      last_final = retry.final_iterate;
      if (retry.success) best_run = std::move(retry);
    }
  } else {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double lambda = cfg.lambda;
    for (int round = 0; round < 9; ++round) {
      CwRun run = cw_descend(params, example, cfg, lambda);
      total_steps += run.steps;
      last_final = run.final_iterate;
      if (run.success) {
        const bool better = (run.robust && !best_run.robust) ||
                            (run.robust == best_run.robust && run.best_l2 < best_run.best_l2);
        if (better) best_run = std::move(run);
        hi = lambda;
        lambda = (lo + hi) / 2.0;
      } else {
        lo = lambda;
        lambda = std::isinf(hi) ? lambda * 10.0 : (lo + hi) / 2.0;
      }
    }
  }

  if (best_run.success)
    return finish(params, example, std::move(best_run.best), total_steps);
  return finish(params, example, std::move(last_final), total_steps);
}

AttackResult run_attack(const ModelParams& params, const LabeledExample& example,
                        const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::Fgsm: return fgsm(params, example, cfg);
    case AttackKind::Ifgsm: return ifgsm(params, example, cfg);
    case AttackKind::Deepfool: return deepfool(params, example, cfg);
    case AttackKind::CwL2: return cw_l2(params, example, cfg);
  }
  throw RejectedInput("unknown attack kind");
}

Ratio parse_ratio(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash != std::string::npos) {
      const double num = std::stod(text.substr(0, slash));
      const double den = std::stod(text.substr(slash + 1));
      if (den == 0.0) throw ParseError("zero denominator in '" + text + "'", 0);
      return {num / den, text};
    }
    return {std::stod(text), text};
  } catch (const std::invalid_argument&) {
    throw ParseError("cannot parse number '" + text + "'", 0);
  }
}

AttackConfig parse_attack_tag(const std::string& tag) {
  AttackConfig cfg;
  cfg.tag = tag;
  const auto colon = tag.find(':');
  const std::string name = tag.substr(0, colon);
  if (name == "fgsm") {
    cfg.kind = AttackKind::Fgsm;
    cfg.iterations = 1;
  } else if (name == "ifgsm") {
    cfg.kind = AttackKind::Ifgsm;
    cfg.iterations = 10;
  } else if (name == "deepfool") {
    cfg.kind = AttackKind::Deepfool;
    cfg.iterations = 50;
  } else if (name == "cw" || name == "cw_l2") {
    cfg.kind = AttackKind::CwL2;
  } else {
    throw ParseError("unknown attack '" + name + "'", 0);
  }
  if (colon == std::string::npos) return cfg;

  std::size_t pos = colon + 1;
  while (pos < tag.size()) {
    std::size_t end = tag.find(',', pos);
    if (end == std::string::npos) end = tag.size();
    const std::string item = tag.substr(pos, end - pos);
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected key=value in attack tag", pos);
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    if (key == "eps") cfg.epsilon = parse_ratio(val);
    else if (key == "step") cfg.step_size = parse_ratio(val);
    else if (key == "iters") cfg.iterations = std::stoi(val);
    else if (key == "overshoot") cfg.overshoot = std::stod(val);
    else if (key == "kappa") cfg.kappa = std::stod(val);
    else if (key == "lambda") cfg.lambda = std::stod(val);
    else if (key == "lr") cfg.cw_learning_rate = std::stod(val);
    else if (key == "steps") cfg.cw_max_steps = std::stoi(val);
    else if (key == "bsearch") cfg.cw_binary_search = val == "1" || val == "true";
    else if (key == "seed") cfg.seed = std::stoull(val);
    else throw ParseError("unknown attack parameter '" + key + "'", pos);
    pos = end + 1;
  }
  return cfg;
}

std::vector<AttackConfig> parse_attack_list(const std::string& text) {
  std::vector<std::string> tags;
  std::size_t pos = 0;
  auto is_attack_name = [](const std::string& tok) {
    const std::string name = tok.substr(0, tok.find(':'));
    return name == "fgsm" || name == "ifgsm" || name == "deepfool" || name == "cw" ||
           name == "cw_l2";
  };
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    std::string tok = text.substr(pos, end - pos);
    // trim
    while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    while (!tok.empty() && tok.back() == ' ') tok.pop_back();
    if (!tok.empty()) {
      if (is_attack_name(tok)) tags.push_back(tok);
      else if (!tags.empty()) tags.back() += "," + tok;
      else throw ParseError("attack list must start with an attack name", pos);
    }
    pos = end + 1;
  }
  if (tags.empty()) throw ParseError("empty attack list", 0);
  std::vector<AttackConfig> out;
  out.reserve(tags.size());
  for (const auto& t : tags) out.push_back(parse_attack_tag(t));
  return out;
}

}  // namespace prepguard
