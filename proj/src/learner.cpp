#include "eqi/learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include <json.hpp>

namespace eqi {

namespace {
constexpr double kLnEps = 1e-5;  // layer-norm variance epsilon
}

TransformKind transform_kind_from_string(std::string_view s) {
  if (s == "append") return TransformKind::append;
  if (s == "residual") return TransformKind::residual;
  throw UsageError("learner: unknown transform kind '" + std::string(s) + "'");
}

const char* transform_kind_name(TransformKind kind) {
  return kind == TransformKind::append ? "append" : "residual";
}

size_t TransformParams::param_count() const {
  size_t n = 0;
  for (const DenseLayer& layer : ff) {
    n += layer.w.size() + layer.b.size();
    n += layer.ln_gain.size() + layer.ln_shift.size();
  }
  return n;
}

static uint32_t rounded_ratio(uint32_t v, uint32_t div) {
  return (uint32_t)((double)v / (double)div + 0.5);
}

static std::vector<std::tuple<uint32_t, uint32_t, bool>> layer_plan(
    TransformKind kind, uint32_t input_dim) {
  if (kind == TransformKind::append) {
    uint32_t hidden = std::max<uint32_t>(8, rounded_ratio(input_dim, 12));
    uint32_t out = std::max<uint32_t>(4, rounded_ratio(input_dim, 24));
    return {{input_dim, hidden, true},
            {hidden, hidden, true},
            {hidden, hidden, true},
            {hidden, out, false}};
  }
  uint32_t hidden = std::max<uint32_t>(4, input_dim / 2);
  return {{input_dim, hidden, true}, {hidden, input_dim, false}};
}

static void round_params_to_f32(TransformParams& params) {
  auto round_vec = [](std::vector<double>& v) {
    for (double& x : v) x = (double)(float)x;
  };
  for (DenseLayer& layer : params.ff) {
    round_vec(layer.w);
    round_vec(layer.b);
    round_vec(layer.ln_gain);
    round_vec(layer.ln_shift);
  }
}

TransformParams init_transform(TransformKind kind, uint32_t input_dim,
                               uint64_t seed) {
  if (input_dim < 8) throw DimError("learner: input dim must be >= 8");
  TransformParams params;
  params.kind = kind;
  params.input_dim = input_dim;
  Rng rng(seed);
  auto plan = layer_plan(kind, input_dim);
  for (size_t li = 0; li < plan.size(); ++li) {
    auto [in, out, hidden] = plan[li];
    DenseLayer layer;
    layer.in_dim = in;
    layer.out_dim = out;
    layer.hidden = hidden;
    layer.w.resize((size_t)in * out, 0.0);
    layer.b.resize(out, 0.0);
    bool zero_init =
        kind == TransformKind::residual && li + 1 == plan.size();
    if (!zero_init) {
      double scale = 1.0 / std::sqrt((double)in);
      for (double& w : layer.w) w = (2.0 * rng.next_double() - 1.0) * scale;
    }
    if (hidden) {
      layer.ln_gain.assign(out, 1.0);
      layer.ln_shift.assign(out, 0.0);
    }
    params.ff.push_back(std::move(layer));
  }
  uint32_t ff_out = std::get<1>(plan.back());
  params.output_dim =
      kind == TransformKind::append ? input_dim + ff_out : input_dim;
  round_params_to_f32(params);
  return params;
}

// ---------------------------------------------------------------------------
// forward / backward

namespace {

struct LayerTrace {
  std::vector<double> in;
  std::vector<double> z;        // affine output
  std::vector<double> relu;     // hidden only
  std::vector<uint8_t> keep;    // dropout decisions, hidden + train only
  std::vector<double> dropped;  // post dropout
  std::vector<double> xhat;     // layer-norm normalized
  double inv_std = 0.0;
  std::vector<double> out;
};

struct Trace {
  std::vector<LayerTrace> layers;
};

std::vector<double> ff_forward(const TransformParams& params,
                               std::span<const float> x, ForwardMode mode,
                               Rng* rng, Trace* trace,
                               std::vector<uint8_t>* relu_signs = nullptr) {
  std::vector<double> a(x.begin(), x.end());
  for (const DenseLayer& layer : params.ff) {
    LayerTrace lt;
    if (trace) lt.in = a;
    std::vector<double> z(layer.out_dim, 0.0);
    for (uint32_t o = 0; o < layer.out_dim; ++o) {
      const double* w = layer.w.data() + (size_t)o * layer.in_dim;
      double acc = layer.b[o];
      for (uint32_t i = 0; i < layer.in_dim; ++i) acc += w[i] * a[i];
      z[o] = acc;
    }
    if (!layer.hidden) {
      if (trace) {
        lt.z = z;
        lt.out = z;
        trace->layers.push_back(std::move(lt));
      }
      a = std::move(z);
      continue;
    }
    std::vector<double> h(layer.out_dim);
    for (uint32_t o = 0; o < layer.out_dim; ++o) {
      h[o] = z[o] > 0.0 ? z[o] : 0.0;
      if (relu_signs) relu_signs->push_back(z[o] > 0.0 ? 1 : 0);
    }
    std::vector<uint8_t> keep;
    bool use_dropout = mode == ForwardMode::train && params.dropout_rate > 0.0;
    if (use_dropout) {
      keep.resize(layer.out_dim);
      double scale = 1.0 / (1.0 - params.dropout_rate);
      for (uint32_t o = 0; o < layer.out_dim; ++o) {
        keep[o] = rng->next_double() >= params.dropout_rate ? 1 : 0;
        h[o] = keep[o] ? h[o] * scale : 0.0;
      }
    }
    double mean = 0.0;
    for (double v : h) mean += v;
    mean /= layer.out_dim;
    double var = 0.0;
    for (double v : h) var += (v - mean) * (v - mean);
    var /= layer.out_dim;
    double inv_std = 1.0 / std::sqrt(var + kLnEps);
    std::vector<double> out(layer.out_dim);
    std::vector<double> xhat;
    if (trace) xhat.resize(layer.out_dim);
    for (uint32_t o = 0; o < layer.out_dim; ++o) {
      double xh = (h[o] - mean) * inv_std;
      if (trace) xhat[o] = xh;
      out[o] = layer.ln_gain[o] * xh + layer.ln_shift[o];
    }
    if (trace) {
      lt.z = std::move(z);
      lt.relu.resize(layer.out_dim);
      for (uint32_t o = 0; o < layer.out_dim; ++o)
        lt.relu[o] = lt.z[o] > 0.0 ? lt.z[o] : 0.0;
      lt.keep = std::move(keep);
      lt.dropped = h;
      lt.xhat = std::move(xhat);
      lt.inv_std = inv_std;
      lt.out = out;
      trace->layers.push_back(std::move(lt));
    }
    a = std::move(out);
  }
  return a;
}

std::vector<double> assemble_output(const TransformParams& params,
                                    std::span<const float> x,
                                    const std::vector<double>& ff_out) {
  if (params.kind == TransformKind::residual) {
    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = (double)x[i] + ff_out[i];
    return y;
  }
  std::vector<double> y;
  y.reserve(x.size() + ff_out.size());
  y.insert(y.end(), x.begin(), x.end());
  y.insert(y.end(), ff_out.begin(), ff_out.end());
  return y;
}

// Gradients in the same shape as the parameters.
struct GradBuf {
  std::vector<DenseLayer> layers;

  static GradBuf zeros_like(const TransformParams& params) {
    GradBuf g;
    g.layers.reserve(params.ff.size());
    for (const DenseLayer& layer : params.ff) {
      DenseLayer zl;
      zl.in_dim = layer.in_dim;
      zl.out_dim = layer.out_dim;
      zl.hidden = layer.hidden;
      zl.w.assign(layer.w.size(), 0.0);
      zl.b.assign(layer.b.size(), 0.0);
      zl.ln_gain.assign(layer.ln_gain.size(), 0.0);
      zl.ln_shift.assign(layer.ln_shift.size(), 0.0);
      g.layers.push_back(std::move(zl));
    }
    return g;
  }
};

// dL/d(ff output) -> parameter gradients, accumulated into grad.
void ff_backward(const TransformParams& params, const Trace& trace,
                 std::vector<double> dout, GradBuf& grad) {
  for (size_t li = params.ff.size(); li-- > 0;) {
    const DenseLayer& layer = params.ff[li];
    const LayerTrace& lt = trace.layers[li];
    DenseLayer& g = grad.layers[li];
    std::vector<double> dz(layer.out_dim, 0.0);
    if (layer.hidden) {
      const uint32_t n = layer.out_dim;
      std::vector<double> gx(n);
      double m1 = 0.0, m2 = 0.0;
      for (uint32_t o = 0; o < n; ++o) {
        g.ln_gain[o] += dout[o] * lt.xhat[o];
        g.ln_shift[o] += dout[o];
        gx[o] = dout[o] * layer.ln_gain[o];
        m1 += gx[o];
        m2 += gx[o] * lt.xhat[o];
      }
      m1 /= n;
      m2 /= n;
      double scale = 1.0 / (1.0 - params.dropout_rate);
      bool has_dropout = !lt.keep.empty();
      for (uint32_t o = 0; o < n; ++o) {
        double dd = lt.inv_std * (gx[o] - m1 - lt.xhat[o] * m2);
        double dh = has_dropout ? (lt.keep[o] ? dd * scale : 0.0) : dd;
        dz[o] = lt.z[o] > 0.0 ? dh : 0.0;
      }
    } else {
      dz = std::move(dout);
    }
    std::vector<double> din(layer.in_dim, 0.0);
    for (uint32_t o = 0; o < layer.out_dim; ++o) {
      double* gw = g.w.data() + (size_t)o * layer.in_dim;
      const double* w = layer.w.data() + (size_t)o * layer.in_dim;
      g.b[o] += dz[o];
      for (uint32_t i = 0; i < layer.in_dim; ++i) {
        gw[i] += dz[o] * lt.in[i];
        din[i] += w[i] * dz[o];
      }
    }
    dout = std::move(din);
  }
}

// Flat parameter enumeration: per layer w, b, ln_gain, ln_shift.
void copy_to_flat(const TransformParams& params, double* dst) {
  for (const DenseLayer& layer : params.ff) {
    dst = std::copy(layer.w.begin(), layer.w.end(), dst);
    dst = std::copy(layer.b.begin(), layer.b.end(), dst);
    dst = std::copy(layer.ln_gain.begin(), layer.ln_gain.end(), dst);
    dst = std::copy(layer.ln_shift.begin(), layer.ln_shift.end(), dst);
  }
}

void copy_from_flat(const double* src, TransformParams& params) {
  for (DenseLayer& layer : params.ff) {
    std::copy(src, src + layer.w.size(), layer.w.begin());
    src += layer.w.size();
    std::copy(src, src + layer.b.size(), layer.b.begin());
    src += layer.b.size();
    std::copy(src, src + layer.ln_gain.size(), layer.ln_gain.begin());
    src += layer.ln_gain.size();
    std::copy(src, src + layer.ln_shift.size(), layer.ln_shift.begin());
    src += layer.ln_shift.size();
  }
}

void grad_to_flat(const GradBuf& grad, double* dst) {
  for (const DenseLayer& layer : grad.layers) {
    dst = std::copy(layer.w.begin(), layer.w.end(), dst);
    dst = std::copy(layer.b.begin(), layer.b.end(), dst);
    dst = std::copy(layer.ln_gain.begin(), layer.ln_gain.end(), dst);
    dst = std::copy(layer.ln_shift.begin(), layer.ln_shift.end(), dst);
  }
}

double dot_double(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

std::vector<double> transform_forward(const TransformParams& params,
                                      std::span<const float> x,
                                      ForwardMode mode, Rng* rng) {
  if (x.size() != params.input_dim)
    throw DimError("learner: input dim " + std::to_string(x.size()) +
                   " != transform input dim " +
                   std::to_string(params.input_dim));
  if (mode == ForwardMode::train && params.dropout_rate > 0.0 && !rng)
    throw UsageError("learner: train-mode forward needs an rng");
  std::vector<double> ff_out = ff_forward(params, x, mode, rng, nullptr);
  return assemble_output(params, x, ff_out);
}

std::vector<float> transform_apply_f32(const TransformParams& params,
                                       std::span<const float> x) {
  std::vector<double> y = transform_forward(params, x, ForwardMode::eval,
                                            nullptr);
  std::vector<float> out(y.size());
  for (size_t i = 0; i < y.size(); ++i) out[i] = (float)y[i];
  return out;
}

double ranknet_loss(double delta) {
  // softplus(-delta) = max(-delta, 0) + log1p(exp(-|delta|))
  double m = delta < 0.0 ? -delta : 0.0;
  return m + std::log1p(std::exp(-std::abs(delta)));
}

double ranknet_dloss(double delta) {
  // -sigmoid(-delta), written to stay exact for large |delta|.
  if (delta >= 0.0) {
    double e = std::exp(-delta);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(delta));
}

double pair_score(const EqiModel& model, std::span<const float> doc_base,
                  std::span<const float> query_base) {
  std::vector<double> yd =
      transform_forward(model.hd, doc_base, ForwardMode::eval, nullptr);
  std::vector<double> yq =
      transform_forward(model.hq, query_base, ForwardMode::eval, nullptr);
  if (yd.size() != yq.size())
    throw DimError("learner: transformed dims differ");
  return dot_double(yd, yq);
}

// ---------------------------------------------------------------------------
// training

namespace {

struct InstanceGrads {
  double loss = 0.0;
  GradBuf hq;
  GradBuf hd;
};

// Forward all three vectors, compute the pairwise loss and accumulate
// parameter gradients for one instance.
double instance_pass(const TransformParams& hq, const TransformParams& hd,
                     std::span<const float> d_vec, std::span<const float> qp,
                     std::span<const float> qn, ForwardMode mode, Rng* rng,
                     GradBuf* ghq, GradBuf* ghd,
                     std::vector<uint8_t>* relu_signs = nullptr,
                     double temperature = 1.0) {
  Trace td, tp, tn;
  std::vector<double> ffd =
      ff_forward(hd, d_vec, mode, rng, ghd ? &td : nullptr, relu_signs);
  std::vector<double> ffp =
      ff_forward(hq, qp, mode, rng, ghq ? &tp : nullptr, relu_signs);
  std::vector<double> ffn =
      ff_forward(hq, qn, mode, rng, ghq ? &tn : nullptr, relu_signs);
  std::vector<double> yd = assemble_output(hd, d_vec, ffd);
  std::vector<double> yp = assemble_output(hq, qp, ffp);
  std::vector<double> yn = assemble_output(hq, qn, ffn);
  double delta = (dot_double(yd, yp) - dot_double(yd, yn)) / temperature;
  double loss = ranknet_loss(delta);
  if (!ghq) return loss;

  double dl = ranknet_dloss(delta) / temperature;
  size_t out_dim = yd.size();
  size_t in_dim = d_vec.size();
  auto ff_slice = [&](const std::vector<double>& dy) {
    // Gradient reaching the FF output under each assembly.
    if (hq.kind == TransformKind::residual) return dy;
    return std::vector<double>(dy.begin() + (ptrdiff_t)in_dim, dy.end());
  };
  std::vector<double> dyp(out_dim), dyn(out_dim), dyd(out_dim);
  for (size_t i = 0; i < out_dim; ++i) {
    dyp[i] = dl * yd[i];
    dyn[i] = -dl * yd[i];
    dyd[i] = dl * (yp[i] - yn[i]);
  }
  ff_backward(hq, tp, ff_slice(dyp), *ghq);
  ff_backward(hq, tn, ff_slice(dyn), *ghq);
  ff_backward(hd, td, ff_slice(dyd), *ghd);
  return loss;
}

void flat_scale(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

}  // namespace

std::pair<EqiModel, TrainReport> train_transform(const TrainSet& train_set,
                                                 const VecMap& doc_vecs,
                                                 const VecMap& query_vecs,
                                                 TransformKind kind,
                                                 const TrainConfig& config,
                                                 std::string base_fingerprint) {
  auto t0 = std::chrono::steady_clock::now();
  if (train_set.size() == 0)
    throw SizeError("learner: empty train set");
  uint32_t input_dim = 0;
  for (const TrainExample& ex : train_set.examples()) {
    auto it = doc_vecs.find(ex.doc_id);
    if (it == doc_vecs.end())
      throw DataError("learner: missing base vector for doc " +
                      std::to_string(ex.doc_id));
    input_dim = (uint32_t)it->second.size();
    for (const auto& [qid, rank] : ex.labels)
      if (!query_vecs.count(qid))
        throw DataError("learner: missing base vector for query " +
                        std::to_string(qid));
  }

  EqiModel model;
  model.base_fingerprint = std::move(base_fingerprint);
  model.hq = init_transform(kind, input_dim, derive_seed(config.seed, "hq"));
  model.hd = config.share_weights
                 ? model.hq
                 : init_transform(kind, input_dim,
                                  derive_seed(config.seed, "hd"));
  model.hq.dropout_rate = config.dropout;
  model.hd.dropout_rate = config.dropout;

  InstanceSampler sampler(train_set, SamplerConfig{config.alpha});
  Rng rng_sample(derive_seed(config.seed, "sampler"));
  Rng rng_dropout(derive_seed(config.seed, "dropout"));

  size_t nq = model.hq.param_count();
  size_t nd = model.hd.param_count();
  size_t total = config.share_weights ? nq : nq + nd;
  std::vector<double> m(total, 0.0), v(total, 0.0), flat(total, 0.0),
      gflat(total, 0.0);

  TrainReport report;
  report.iteration_mean_loss.reserve(config.iterations);
  uint64_t step = 0;
  for (uint32_t iter = 0; iter < config.iterations; ++iter) {
    double iter_loss = 0.0;
    for (uint32_t batch = 0; batch < config.batches_per_iteration; ++batch) {
      GradBuf ghq = GradBuf::zeros_like(model.hq);
      GradBuf ghd = GradBuf::zeros_like(model.hd);
      const TransformParams& hd_side =
          config.share_weights ? model.hq : model.hd;
      double batch_loss = 0.0;
      for (uint32_t s = 0; s < config.samples_per_batch; ++s) {
        TrainInstance inst = sampler.sample(rng_sample);
        const std::vector<float>& dv = doc_vecs.at(inst.doc_id);
        const std::vector<float>& qp = query_vecs.at(inst.q_pos);
        const std::vector<float>& qn = query_vecs.at(inst.q_neg);
        batch_loss += instance_pass(model.hq, hd_side, dv, qp, qn,
                                    ForwardMode::train, &rng_dropout, &ghq,
                                    config.share_weights ? &ghq : &ghd,
                                    nullptr, config.loss_temperature);
      }
      double inv_n = 1.0 / (double)config.samples_per_batch;
      batch_loss *= inv_n;
      if (!std::isfinite(batch_loss))
        throw DataError("learner: non-finite loss at iteration " +
                        std::to_string(iter) + ", batch " +
                        std::to_string(batch));
      grad_to_flat(ghq, gflat.data());
      if (!config.share_weights) grad_to_flat(ghd, gflat.data() + nq);
      flat_scale(gflat, inv_n);
      copy_to_flat(model.hq, flat.data());
      if (!config.share_weights) copy_to_flat(model.hd, flat.data() + nq);
      ++step;
      double bc1 = 1.0 - std::pow(config.beta1, (double)step);
      double bc2 = 1.0 - std::pow(config.beta2, (double)step);
      for (size_t i = 0; i < total; ++i) {
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gflat[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gflat[i] * gflat[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        flat[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
      }
      copy_from_flat(flat.data(), model.hq);
      if (!config.share_weights)
        copy_from_flat(flat.data() + nq, model.hd);
      iter_loss += batch_loss;
    }
    report.iteration_mean_loss.push_back(
        iter_loss / (double)config.batches_per_iteration);
  }
  if (config.share_weights) model.hd = model.hq;
  round_params_to_f32(model.hq);
  round_params_to_f32(model.hd);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {std::move(model), std::move(report)};
}

void TrainReport::save_csv(const std::filesystem::path& path) const {
  std::string out = "iteration,mean_loss\n";
  for (size_t i = 0; i < iteration_mean_loss.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += format_double(iteration_mean_loss[i]);
    out += '\n';
  }
  write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// gradient check

GradCheckReport gradient_check(const EqiModel& model,
                               const std::vector<GradProbe>& probes,
                               double h) {
  if (probes.empty()) throw SizeError("learner: gradient check needs probes");
  EqiModel work = model;
  double inv_n = 1.0 / (double)probes.size();

  // The finite-difference segment must not cross a ReLU kink; parameters
  // whose +-h evaluations flip any activation sign are excluded.
  auto batch_loss = [&](const EqiModel& mdl, std::vector<uint8_t>* signs) {
    double sum = 0.0;
    for (const GradProbe& p : probes)
      sum += instance_pass(mdl.hq, mdl.hd, p.doc, p.q_pos, p.q_neg,
                           ForwardMode::eval, nullptr, nullptr, nullptr,
                           signs);
    return sum * inv_n;
  };

  GradBuf ghq = GradBuf::zeros_like(work.hq);
  GradBuf ghd = GradBuf::zeros_like(work.hd);
  for (const GradProbe& p : probes)
    instance_pass(work.hq, work.hd, p.doc, p.q_pos, p.q_neg, ForwardMode::eval,
                  nullptr, &ghq, &ghd);

  size_t nq = work.hq.param_count();
  size_t nd = work.hd.param_count();
  std::vector<double> analytic(nq + nd, 0.0);
  grad_to_flat(ghq, analytic.data());
  grad_to_flat(ghd, analytic.data() + nq);
  flat_scale(analytic, inv_n);

  std::vector<double> flat(nq + nd, 0.0);
  copy_to_flat(work.hq, flat.data());
  copy_to_flat(work.hd, flat.data() + nq);

  std::vector<uint8_t> center_signs;
  batch_loss(work, &center_signs);

  GradCheckReport report;
  std::vector<uint8_t> signs;
  auto loss_at = [&](size_t i, double value, bool* sign_stable) {
    double saved = flat[i];
    flat[i] = value;
    copy_from_flat(flat.data(), work.hq);
    copy_from_flat(flat.data() + nq, work.hd);
    signs.clear();
    double loss = batch_loss(work, &signs);
    flat[i] = saved;
    if (signs != center_signs) *sign_stable = false;
    return loss;
  };
  for (size_t i = 0; i < flat.size(); ++i) {
    bool stable = true;
    double saved = flat[i];
    // Central differences at h and h/2; one Richardson step cancels the
    // O(h^2) truncation term, which the layer-norm stack otherwise pushes
    // past the tolerance even for an exact gradient.
    double d_h = (loss_at(i, saved + h, &stable) -
                  loss_at(i, saved - h, &stable)) /
                 (2.0 * h);
    double d_h2 = (loss_at(i, saved + h / 2.0, &stable) -
                   loss_at(i, saved - h / 2.0, &stable)) /
                  h;
    if (!stable) {
      ++report.params_skipped_at_kinks;
      continue;
    }
    ++report.params_checked;
    double numeric = (4.0 * d_h2 - d_h) / 3.0;
    double denom = std::max(std::abs(analytic[i]), std::abs(numeric));
    double err = std::abs(analytic[i] - numeric);
    // Guarded relative error: below the floor the absolute difference is
    // the meaningful quantity (the ratio of two near-zero gradients is
    // finite-difference noise).
    if (denom > 1e-3) err /= denom;
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  copy_from_flat(flat.data(), work.hq);
  copy_from_flat(flat.data() + nq, work.hd);
  return report;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

void append_tensor_meta(nlohmann::json& tensors, const std::string& prefix,
                        const TransformParams& params) {
  for (size_t li = 0; li < params.ff.size(); ++li) {
    const DenseLayer& layer = params.ff[li];
    std::string base = prefix + "." + std::to_string(li);
    tensors.push_back({{"name", base + ".w"},
                       {"rows", layer.out_dim},
                       {"cols", layer.in_dim}});
    tensors.push_back({{"name", base + ".b"}, {"rows", 1}, {"cols", layer.out_dim}});
    if (layer.hidden) {
      tensors.push_back(
          {{"name", base + ".ln_gain"}, {"rows", 1}, {"cols", layer.out_dim}});
      tensors.push_back(
          {{"name", base + ".ln_shift"}, {"rows", 1}, {"cols", layer.out_dim}});
    }
  }
}

void append_blob(std::string& blob, const std::vector<double>& v) {
  for (double d : v) {
    float f = (float)d;
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) blob.push_back((char)(uint8_t)(bits >> (8 * i)));
  }
}

void read_blob(const char*& p, const char* end, std::vector<double>& v) {
  if (p + v.size() * 4 > end)
    throw ParseError("learner: params.bin is truncated");
  for (double& d : v) {
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= (uint32_t)(uint8_t)p[i] << (8 * i);
    p += 4;
    float f;
    std::memcpy(&f, &bits, 4);
    d = (double)f;
  }
}

nlohmann::json layers_meta(const TransformParams& params) {
  nlohmann::json meta = nlohmann::json::array();
  for (const DenseLayer& layer : params.ff)
    meta.push_back({{"in", layer.in_dim},
                    {"out", layer.out_dim},
                    {"hidden", layer.hidden}});
  return meta;
}

TransformParams params_from_meta(const nlohmann::json& j, TransformKind kind,
                                 uint32_t input_dim, uint32_t output_dim,
                                 double dropout) {
  TransformParams params;
  params.kind = kind;
  params.input_dim = input_dim;
  params.output_dim = output_dim;
  params.dropout_rate = dropout;
  for (const auto& lj : j) {
    DenseLayer layer;
    layer.in_dim = lj.at("in").get<uint32_t>();
    layer.out_dim = lj.at("out").get<uint32_t>();
    layer.hidden = lj.at("hidden").get<bool>();
    layer.w.resize((size_t)layer.in_dim * layer.out_dim);
    layer.b.resize(layer.out_dim);
    if (layer.hidden) {
      layer.ln_gain.resize(layer.out_dim);
      layer.ln_shift.resize(layer.out_dim);
    }
    params.ff.push_back(std::move(layer));
  }
  return params;
}

}  // namespace

void EqiModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  append_tensor_meta(tensors, "hq", hq);
  append_tensor_meta(tensors, "hd", hd);
  nlohmann::json manifest = {{"format", "eqi-model"},
                             {"version", 1},
                             {"kind", transform_kind_name(hq.kind)},
                             {"input_dim", hq.input_dim},
                             {"output_dim", hq.output_dim},
                             {"dropout", hq.dropout_rate},
                             {"base_fingerprint", base_fingerprint},
                             {"hq_layers", layers_meta(hq)},
                             {"hd_layers", layers_meta(hd)},
                             {"tensors", tensors}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::string blob;
  for (const TransformParams* t : {&hq, &hd}) {
    for (const DenseLayer& layer : t->ff) {
      append_blob(blob, layer.w);
      append_blob(blob, layer.b);
      append_blob(blob, layer.ln_gain);
      append_blob(blob, layer.ln_shift);
    }
  }
  write_text_file(dir / "params.bin", blob);
}

EqiModel EqiModel::load(const std::filesystem::path& dir) {
  nlohmann::json manifest =
      nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  if (manifest.value("format", "") != "eqi-model")
    throw ParseError("learner: " + dir.string() + " is not a model dir");
  EqiModel model;
  TransformKind kind =
      transform_kind_from_string(manifest.at("kind").get<std::string>());
  uint32_t input_dim = manifest.at("input_dim").get<uint32_t>();
  uint32_t output_dim = manifest.at("output_dim").get<uint32_t>();
  double dropout = manifest.at("dropout").get<double>();
  model.base_fingerprint = manifest.value("base_fingerprint", "");
  model.hq = params_from_meta(manifest.at("hq_layers"), kind, input_dim,
                              output_dim, dropout);
  model.hd = params_from_meta(manifest.at("hd_layers"), kind, input_dim,
                              output_dim, dropout);
  std::string blob = read_text_file(dir / "params.bin");
  const char* p = blob.data();
  const char* end = blob.data() + blob.size();
  for (TransformParams* t : {&model.hq, &model.hd}) {
    for (DenseLayer& layer : t->ff) {
      read_blob(p, end, layer.w);
      read_blob(p, end, layer.b);
      read_blob(p, end, layer.ln_gain);
      read_blob(p, end, layer.ln_shift);
    }
  }
  if (p != end)
    throw ParseError("learner: params.bin has trailing bytes");
  return model;
}

}  // namespace eqi
