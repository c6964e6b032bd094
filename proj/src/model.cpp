#include "prepguard/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "prepguard/codecs.hpp"
#include "prepguard/rng.hpp"

namespace prepguard {

namespace {

constexpr char kMagic[4] = {'P', 'G', 'R', 'D'};
constexpr std::uint8_t kFormatVersion = 1;

std::size_t weight_count(const LayerSpec& l, const Shape3& in) {
  switch (l.kind) {
    case LayerKind::Conv:
      return static_cast<std::size_t>(l.out_units) * l.kernel * l.kernel * in.c;
    case LayerKind::Dense:
      return static_cast<std::size_t>(l.out_units) * in.size();
    case LayerKind::Pool:
      return 0;
  }
  return 0;
}

std::size_t bias_count(const LayerSpec& l) {
  return l.kind == LayerKind::Pool ? 0 : static_cast<std::size_t>(l.out_units);
}

Shape3 output_shape(const LayerSpec& l, const Shape3& in) {
  switch (l.kind) {
    case LayerKind::Conv:
      if (l.kernel <= 0 || l.kernel % 2 == 0)
        throw RejectedInput("conv kernel must be a positive odd size");
      if (l.out_units <= 0) throw RejectedInput("conv needs positive channels");
      return {in.h, in.w, l.out_units};
    case LayerKind::Pool: {
      if (l.pool <= 1) throw RejectedInput("pool window must be > 1");
      const int h = in.h / l.pool, w = in.w / l.pool;
      if (h < 1 || w < 1) throw RejectedInput("pool output collapses to zero");
      return {h, w, in.c};
    }
    case LayerKind::Dense:
      if (l.out_units <= 0) throw RejectedInput("dense needs positive units");
      if (in.size() <= 0) throw RejectedInput("dense input is empty");
      return {1, 1, l.out_units};
  }
  throw RejectedInput("unknown layer kind");
}

// Per-layer activations of one forward pass, kept for backprop.
struct Trace {
  std::vector<std::vector<double>> act;      // act[0] = input pixels
  std::vector<std::vector<int>> pool_src;    // argmax input index per pool output
  std::vector<Shape3> shapes;                // shape after each layer
};

void conv_forward(const std::vector<double>& in, const Shape3& is,
                  const LayerSpec& l, const std::vector<double>& w,
                  const std::vector<double>& b, std::vector<double>& out) {
  const int pad = l.kernel / 2, k = l.kernel, oc = l.out_units, ic = is.c;
  out.assign(static_cast<std::size_t>(is.h) * is.w * oc, 0.0);
  for (int y = 0; y < is.h; ++y) {
    for (int x = 0; x < is.w; ++x) {
      double* o = &out[(static_cast<std::size_t>(y) * is.w + x) * oc];
      for (int co = 0; co < oc; ++co) {
        double acc = b[co];
        const double* wc = &w[static_cast<std::size_t>(co) * k * k * ic];
        for (int ky = 0; ky < k; ++ky) {
          const int yy = y + ky - pad;
          if (yy < 0 || yy >= is.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int xx = x + kx - pad;
            if (xx < 0 || xx >= is.w) continue;
            const double* a = &in[(static_cast<std::size_t>(yy) * is.w + xx) * ic];
            const double* wk = &wc[(static_cast<std::size_t>(ky) * k + kx) * ic];
            for (int ci = 0; ci < ic; ++ci) acc += a[ci] * wk[ci];
          }
        }
        o[co] = l.relu ? std::max(0.0, acc) : acc;
      }
    }
  }
}

void pool_forward(const std::vector<double>& in, const Shape3& is, int p,
                  std::vector<double>& out, std::vector<int>& src) {
  const int oh = is.h / p, ow = is.w / p, c = is.c;
  out.assign(static_cast<std::size_t>(oh) * ow * c, 0.0);
  src.assign(out.size(), 0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int ch = 0; ch < c; ++ch) {
        double best = -1e300;
        int best_idx = 0;
        for (int dy = 0; dy < p; ++dy) {
          for (int dx = 0; dx < p; ++dx) {
            const int idx =
                ((oy * p + dy) * is.w + (ox * p + dx)) * c + ch;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        const int oidx = (oy * ow + ox) * c + ch;
        out[oidx] = best;
        src[oidx] = best_idx;
      }
    }
  }
}

void dense_forward(const std::vector<double>& in, const LayerSpec& l,
                   const std::vector<double>& w, const std::vector<double>& b,
                   std::vector<double>& out) {
  const std::size_t n_in = in.size();
  out.assign(static_cast<std::size_t>(l.out_units), 0.0);
  for (int o = 0; o < l.out_units; ++o) {
    double acc = b[static_cast<std::size_t>(o)];
    const double* row = &w[static_cast<std::size_t>(o) * n_in];
    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
    out[static_cast<std::size_t>(o)] = l.relu ? std::max(0.0, acc) : acc;
  }
}

Trace run_forward(const ModelParams& params, const ImageTensor& x) {
  if (x.height != params.input_shape.h || x.width != params.input_shape.w ||
      x.channels != params.input_shape.c)
    throw RejectedInput("input shape " + x.shape_str() + " does not match model input " +
                        std::to_string(params.input_shape.h) + "x" +
                        std::to_string(params.input_shape.w) + "x" +
                        std::to_string(params.input_shape.c));
  Trace t;
  t.shapes = layer_output_shapes(params);
  t.act.resize(params.layers.size() + 1);
  t.pool_src.resize(params.layers.size());
  t.act[0] = x.data;
  Shape3 cur = params.input_shape;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const LayerSpec& l = params.layers[li];
    switch (l.kind) {
      case LayerKind::Conv:
        conv_forward(t.act[li], cur, l, params.weights[li], params.biases[li], t.act[li + 1]);
        break;
      case LayerKind::Pool:
        pool_forward(t.act[li], cur, l.pool, t.act[li + 1], t.pool_src[li]);
        break;
      case LayerKind::Dense:
        dense_forward(t.act[li], l, params.weights[li], params.biases[li], t.act[li + 1]);
        break;
    }
    cur = t.shapes[li];
  }
  return t;
}

// Backprop an arbitrary dJ/dlogits seed through the trace.
Gradients run_backward(const ModelParams& params, const Trace& t,
                       std::vector<double> dlogits, bool want_param_grads,
                       bool want_input_grad) {
  Gradients g;
  const std::size_t L = params.layers.size();
  if (want_param_grads) {
    g.weights.resize(L);
    g.biases.resize(L);
    for (std::size_t li = 0; li < L; ++li) {
      g.weights[li].assign(params.weights[li].size(), 0.0);
      g.biases[li].assign(params.biases[li].size(), 0.0);
    }
  }
  std::vector<double> dout = std::move(dlogits);
  for (std::size_t li = L; li-- > 0;) {
    const LayerSpec& l = params.layers[li];
    const Shape3 in_shape = li == 0 ? params.input_shape : t.shapes[li - 1];
    const std::vector<double>& in = t.act[li];
    const std::vector<double>& out = t.act[li + 1];
    const bool need_din = want_input_grad || li > 0;
    std::vector<double> din;
    if (need_din) din.assign(in.size(), 0.0);

    switch (l.kind) {
      case LayerKind::Conv: {
        const int pad = l.kernel / 2, k = l.kernel, oc = l.out_units, ic = in_shape.c;
        for (int y = 0; y < in_shape.h; ++y) {
          for (int x = 0; x < in_shape.w; ++x) {
            const std::size_t obase = (static_cast<std::size_t>(y) * in_shape.w + x) * oc;
            for (int co = 0; co < oc; ++co) {
              double d = dout[obase + co];
              if (l.relu && out[obase + co] <= 0.0) continue;
              if (d == 0.0) continue;
              if (want_param_grads) g.biases[li][static_cast<std::size_t>(co)] += d;
              const std::size_t wbase = static_cast<std::size_t>(co) * k * k * ic;
              for (int ky = 0; ky < k; ++ky) {
                const int yy = y + ky - pad;
                if (yy < 0 || yy >= in_shape.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int xx = x + kx - pad;
                  if (xx < 0 || xx >= in_shape.w) continue;
                  const std::size_t abase =
                      (static_cast<std::size_t>(yy) * in_shape.w + xx) * ic;
                  const std::size_t wk = wbase + (static_cast<std::size_t>(ky) * k + kx) * ic;
                  for (int ci = 0; ci < ic; ++ci) {
                    if (want_param_grads)
                      g.weights[li][wk + ci] += d * in[abase + ci];
                    if (need_din) din[abase + ci] += d * params.weights[li][wk + ci];
                  }
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::Pool: {
        for (std::size_t oi = 0; oi < out.size(); ++oi)
          if (need_din) din[static_cast<std::size_t>(t.pool_src[li][oi])] += dout[oi];
        break;
      }
      case LayerKind::Dense: {
        const std::size_t n_in = in.size();
        for (int o = 0; o < l.out_units; ++o) {
          double d = dout[static_cast<std::size_t>(o)];
          if (l.relu && out[static_cast<std::size_t>(o)] <= 0.0) continue;
          if (d == 0.0) continue;
          if (want_param_grads) g.biases[li][static_cast<std::size_t>(o)] += d;
          const double* row = &params.weights[li][static_cast<std::size_t>(o) * n_in];
          for (std::size_t i = 0; i < n_in; ++i) {
            if (want_param_grads) g.weights[li][static_cast<std::size_t>(o) * n_in + i] += d * in[i];
            if (need_din) din[i] += d * row[i];
          }
        }
        break;
      }
    }
    dout = std::move(din);
  }
  if (want_input_grad) {
    g.input.height = params.input_shape.h;
    g.input.width = params.input_shape.w;
    g.input.channels = params.input_shape.c;
    g.input.data = std::move(dout);
  }
  return g;
}

void accumulate(std::vector<std::vector<double>>& into,
                const std::vector<std::vector<double>>& from) {
  for (std::size_t i = 0; i < into.size(); ++i)
    for (std::size_t j = 0; j < into[i].size(); ++j) into[i][j] += from[i][j];
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_f64(std::vector<std::uint8_t>& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

}  // namespace

std::string format_architecture(const ModelParams& params) {
  std::ostringstream os;
  os << "input " << params.input_shape.h << "x" << params.input_shape.w << "x"
     << params.input_shape.c;
  for (const LayerSpec& l : params.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        os << ";conv " << l.kernel << "x" << l.out_units << (l.relu ? ",relu" : "");
        break;
      case LayerKind::Pool:
        os << ";pool " << l.pool;
        break;
      case LayerKind::Dense:
        os << ";dense " << l.out_units << (l.relu ? ",relu" : "");
        break;
    }
  }
  return os.str();
}

ModelParams parse_architecture(const std::string& text) {
  ModelParams params;
  std::stringstream ss(text);
  std::string item;
  bool have_input = false;
  while (std::getline(ss, item, ';')) {
    std::istringstream is(item);
    std::string kw;
    is >> kw;
    if (kw == "input") {
      char x1 = 0, x2 = 0;
      if (!(is >> params.input_shape.h >> x1 >> params.input_shape.w >> x2 >>
            params.input_shape.c) ||
          x1 != 'x' || x2 != 'x')
        throw RejectedInput("bad architecture input clause: " + item);
      have_input = true;
    } else if (kw == "conv") {
      LayerSpec l;
      l.kind = LayerKind::Conv;
      char x1 = 0;
      std::string rest;
      if (!(is >> l.kernel >> x1 >> l.out_units) || x1 != 'x')
        throw RejectedInput("bad conv clause: " + item);
      if (is >> rest) l.relu = (rest == ",relu");
      params.layers.push_back(l);
    } else if (kw == "pool") {
      LayerSpec l;
      l.kind = LayerKind::Pool;
      if (!(is >> l.pool)) throw RejectedInput("bad pool clause: " + item);
      params.layers.push_back(l);
    } else if (kw == "dense") {
      LayerSpec l;
      l.kind = LayerKind::Dense;
      if (!(is >> l.out_units)) throw RejectedInput("bad dense clause: " + item);
      std::string rest;
      if (is >> rest) l.relu = (rest == ",relu");
      params.layers.push_back(l);
    } else {
      throw RejectedInput("unknown architecture clause: " + item);
    }
  }
  if (!have_input || params.layers.empty())
    throw RejectedInput("architecture needs an input clause and at least one layer");
  const LayerSpec& last = params.layers.back();
  if (last.kind != LayerKind::Dense || last.relu)
    throw RejectedInput("architecture must end in a linear dense layer");
  params.class_count = last.out_units;
  const auto shapes = layer_output_shapes(params);
  params.weights.resize(params.layers.size());
  params.biases.resize(params.layers.size());
  Shape3 cur = params.input_shape;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    params.weights[li].assign(weight_count(params.layers[li], cur), 0.0);
    params.biases[li].assign(bias_count(params.layers[li]), 0.0);
    cur = shapes[li];
  }
  return params;
}

ModelParams default_architecture(Shape3 input, int class_count) {
  std::ostringstream os;
  os << "input " << input.h << "x" << input.w << "x" << input.c
     << ";conv 3x8,relu;pool 2;conv 3x16,relu;pool 2;dense " << class_count;
  return parse_architecture(os.str());
}

void init_weights(ModelParams& params, std::uint64_t seed) {
  Rng rng(seed);
  Shape3 cur = params.input_shape;
  const auto shapes = layer_output_shapes(params);
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const LayerSpec& l = params.layers[li];
    if (l.kind != LayerKind::Pool) {
      std::size_t fan_in = l.kind == LayerKind::Conv
                               ? static_cast<std::size_t>(l.kernel) * l.kernel * cur.c
                               : static_cast<std::size_t>(cur.size());
      const double scale = l.relu ? std::sqrt(2.0 / static_cast<double>(fan_in))
                                  : std::sqrt(1.0 / static_cast<double>(fan_in));
      for (double& w : params.weights[li]) w = rng.gaussian(0.0, scale);
      for (double& b : params.biases[li]) b = 0.0;
    }
    cur = shapes[li];
  }
}

std::vector<Shape3> layer_output_shapes(const ModelParams& params) {
  if (params.input_shape.h <= 0 || params.input_shape.w <= 0 || params.input_shape.c <= 0)
    throw RejectedInput("model input shape must be positive");
  std::vector<Shape3> shapes;
  Shape3 cur = params.input_shape;
  for (const LayerSpec& l : params.layers) {
    cur = output_shape(l, cur);
    shapes.push_back(cur);
  }
  if (!shapes.empty() && params.class_count > 0 && shapes.back().size() != params.class_count)
    throw RejectedInput("final layer width does not match class count");
  return shapes;
}

Logits forward(const ModelParams& params, const ImageTensor& x) {
  Trace t = run_forward(params, x);
  return t.act.back();
}

int predict(const ModelParams& params, const ImageTensor& x) {
  const Logits z = forward(params, x);
  int best = 0;
  for (std::size_t i = 1; i < z.size(); ++i)
    if (z[i] > z[best]) best = static_cast<int>(i);
  return best;
}

std::vector<double> softmax(const Logits& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(const Logits& logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw RejectedInput("label " + std::to_string(label) + " out of range for " +
                        std::to_string(logits.size()) + " classes");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double z : logits) sum += std::exp(z - m);
  const double loss = std::log(sum) - (logits[static_cast<std::size_t>(label)] - m);
  return std::max(0.0, loss);
}

Gradients backward(const ModelParams& params, const LabeledExample& example,
                   bool want_param_grads, bool want_input_grad) {
  Trace t = run_forward(params, example.image);
  const Logits& z = t.act.back();
  if (example.label < 0 || static_cast<std::size_t>(example.label) >= z.size())
    throw RejectedInput("label out of range");
  std::vector<double> dlogits = softmax(z);
  dlogits[static_cast<std::size_t>(example.label)] -= 1.0;
  Gradients g = run_backward(params, t, std::move(dlogits), want_param_grads, want_input_grad);
  g.loss = cross_entropy(z, example.label);
  g.logits = z;
  return g;
}

InputGradient grad_input(const ModelParams& params, const LabeledExample& example) {
  return backward(params, example, /*want_param_grads=*/false, /*want_input_grad=*/true).input;
}

InputGradient grad_logit_combo(const ModelParams& params, const ImageTensor& x,
                               const std::vector<double>& coeff) {
  Trace t = run_forward(params, x);
  if (coeff.size() != t.act.back().size())
    throw RejectedInput("logit coefficient length does not match class count");
  return run_backward(params, t, coeff, /*want_param_grads=*/false, /*want_input_grad=*/true)
      .input;
}

std::vector<InputGradient> grad_logit_combos(
    const ModelParams& params, const ImageTensor& x,
    const std::function<std::vector<std::vector<double>>(const Logits&)>& seeds_fn,
    Logits* logits_out) {
  Trace t = run_forward(params, x);
  const std::vector<std::vector<double>> seeds = seeds_fn(t.act.back());
  if (logits_out) *logits_out = t.act.back();
  std::vector<InputGradient> grads;
  grads.reserve(seeds.size());
  for (const auto& seed : seeds) {
    if (seed.size() != t.act.back().size())
      throw RejectedInput("logit seed length does not match class count");
    grads.push_back(
        run_backward(params, t, seed, /*want_param_grads=*/false, /*want_input_grad=*/true)
            .input);
  }
  return grads;
}

ModelParams train(const std::vector<LabeledExample>& dataset, int class_count,
                  const TrainConfig& cfg) {
  if (dataset.empty()) throw RejectedInput("training dataset is empty");
  if (class_count < 2) throw RejectedInput("need at least two classes");
  if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.learning_rate <= 0.0 ||
      cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw RejectedInput("invalid training configuration");
  const ImageTensor& first = dataset.front().image;
  for (const LabeledExample& ex : dataset) {
    if (!ex.image.same_shape(first)) throw RejectedInput("dataset images differ in shape");
    if (ex.label < 0 || ex.label >= class_count)
      throw RejectedInput("dataset label outside [0,K)");
  }

  ModelParams params =
      default_architecture({first.height, first.width, first.channels}, class_count);
  init_weights(params, derive_seed(cfg.seed, 0));

  std::vector<std::vector<double>> vel_w(params.weights.size()), vel_b(params.biases.size());
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    vel_w[i].assign(params.weights[i].size(), 0.0);
    vel_b[i].assign(params.biases[i].size(), 0.0);
  }

  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Gradients batch;
      batch.weights.resize(params.weights.size());
      batch.biases.resize(params.biases.size());
      for (std::size_t i = 0; i < params.weights.size(); ++i) {
        batch.weights[i].assign(params.weights[i].size(), 0.0);
        batch.biases[i].assign(params.biases[i].size(), 0.0);
      }
      for (std::size_t bi = start; bi < end; ++bi) {
        const LabeledExample& ex = dataset[static_cast<std::size_t>(order[bi])];
        const bool flip = cfg.flip_augmentation && rng.bernoulli(0.5);
        Gradients g;
        if (flip) {
          LabeledExample flipped{flip_lr(ex.image), ex.label};
          g = backward(params, flipped, true, false);
        } else {
          g = backward(params, ex, true, false);
        }
        accumulate(batch.weights, g.weights);
        accumulate(batch.biases, g.biases);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t li = 0; li < params.weights.size(); ++li) {
        for (std::size_t j = 0; j < params.weights[li].size(); ++j) {
          vel_w[li][j] = cfg.momentum * vel_w[li][j] -
                         cfg.learning_rate * batch.weights[li][j] * inv;
          params.weights[li][j] += vel_w[li][j];
        }
        for (std::size_t j = 0; j < params.biases[li].size(); ++j) {
          vel_b[li][j] = cfg.momentum * vel_b[li][j] -
                         cfg.learning_rate * batch.biases[li][j] * inv;
          params.biases[li][j] += vel_b[li][j];
        }
      }
    }
  }
  return params;
}

double gradient_check(const ModelParams& params, const LabeledExample& example,
                      double h) {
  if (!(h > 0.0 && h <= 1e-2)) throw RejectedInput("step h must lie in (0, 1e-2]");
  const InputGradient analytic = grad_input(params, example);
  const int n = example.image.size();
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(0x5eedc0ffee1234abull);
  rng.shuffle(idx);
  const int wanted = std::min(n, 128);

  ImageTensor probe = example.image;
  auto fd_at = [&](std::size_t i, double step) {
    const double saved = probe.data[i];
    probe.data[i] = saved + step;
    const double jp = cross_entropy(forward(params, probe), example.label);
    probe.data[i] = saved - step;
    const double jm = cross_entropy(forward(params, probe), example.label);
    probe.data[i] = saved;
    return (jp - jm) / (2.0 * step);
  };

  double worst = 0.0;
  int used = 0;
  for (int s = 0; s < n && used < wanted; ++s) {
    const std::size_t i = static_cast<std::size_t>(idx[static_cast<std::size_t>(s)]);
    const double fd = fd_at(i, h);
    // A probe whose half-step estimate disagrees straddles a ReLU or pool
    // kink; the difference quotient measures nothing about the gradient
    // there, so resample. Smooth probes agree to O(h^2).
    const double fd_half = fd_at(i, h / 2.0);
    if (std::fabs(fd - fd_half) > 1e-3 * (std::fabs(fd) + std::fabs(fd_half) + 1e-12))
      continue;
    const double a = analytic.data[i];
    // Near the rounding noise floor of the loss difference the quotient
    // compares noise with noise; hyper-confident examples have a numerically
    // flat loss surface and contribute nothing measurable.
    if (std::max(std::fabs(a), std::fabs(fd)) < 1e-6) continue;
    const double rel = std::fabs(a - fd) / (std::fabs(a) + std::fabs(fd) + 1e-12);
    worst = std::max(worst, rel);
    ++used;
  }
  return worst;
}

std::vector<std::uint8_t> serialize_model(const ModelParams& params) {
  layer_output_shapes(params);  // validate before writing
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kFormatVersion);
  const std::string desc = format_architecture(params);
  append_u32(out, static_cast<std::uint32_t>(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    for (double w : params.weights[li]) append_f64(out, w);
    for (double b : params.biases[li]) append_f64(out, b);
  }
  return out;
}

ModelParams deserialize_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw RejectedInput("not a model file (bad magic)");
  if (bytes[4] != kFormatVersion)
    throw RejectedInput("unsupported model format version " + std::to_string(bytes[4]));
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[5 + i]) << (8 * i);
  if (bytes.size() < 9 + static_cast<std::size_t>(len))
    throw RejectedInput("model file truncated in descriptor");
  const std::string desc(bytes.begin() + 9, bytes.begin() + 9 + len);
  ModelParams params = parse_architecture(desc);
  std::size_t pos = 9 + len;
  auto read_f64 = [&bytes, &pos]() {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(bits);
  };
  std::size_t need = 0;
  for (std::size_t li = 0; li < params.layers.size(); ++li)
    need += params.weights[li].size() + params.biases[li].size();
  if (bytes.size() != pos + need * 8)
    throw RejectedInput("model file length does not match architecture");
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    for (double& w : params.weights[li]) w = read_f64();
    for (double& b : params.biases[li]) b = read_f64();
  }
  return params;
}

void save_model(const ModelParams& params, const std::string& path) {
  const auto bytes = serialize_model(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write to " + path);
}

ModelParams load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t hash = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    hash ^= p[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t model_fingerprint(const ModelParams& params) {
  const auto bytes = serialize_model(params);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace prepguard
