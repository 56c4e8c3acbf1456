#include <doctest.h>

#include <cmath>

#include "eqi/learner.hpp"
#include "eqi/synth_world.hpp"
#include "test_util.hpp"

using namespace eqi;

namespace {

std::vector<float> random_unit(Rng& rng, size_t dim) {
  std::vector<float> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = (float)(rng.next_double() * 2.0 - 1.0);
    norm += (double)x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x = (float)(x / norm);
  return v;
}

// Nudge exact zeros so finite differences stay away from ReLU kinks.
std::vector<float> nudged(std::vector<float> v) {
  for (float& x : v)
    if (x == 0.0f) x = 1e-3f;
  return v;
}

// Scatter small random values into every parameter (test-side, to exercise
// nonzero paths through the zero-initialized residual output layer).
void randomize_params(TransformParams& params, uint64_t seed) {
  Rng rng(seed);
  for (DenseLayer& layer : params.ff) {
    for (double& w : layer.w) w = (rng.next_double() - 0.5) * 0.2;
    for (double& b : layer.b) b = (rng.next_double() - 0.5) * 0.1;
    for (double& g : layer.ln_gain) g = 0.8 + rng.next_double() * 0.4;
    for (double& s : layer.ln_shift) s = (rng.next_double() - 0.5) * 0.1;
  }
}

// Probes whose finite-difference sweeps never graze a ReLU kink, so every
// parameter is compared. Kink locations depend only on hidden
// pre-activations, which output-layer randomization leaves untouched.
std::vector<GradProbe> skip_free_probes(const EqiModel& model, Rng& rng,
                                        size_t want, size_t dim) {
  std::vector<GradProbe> accepted;
  while (accepted.size() < want) {
    GradProbe cand{nudged(random_unit(rng, dim)), nudged(random_unit(rng, dim)),
                   nudged(random_unit(rng, dim))};
    if (gradient_check(model, {cand}).params_skipped_at_kinks == 0)
      accepted.push_back(std::move(cand));
  }
  return accepted;
}

// Randomize only the output layer, keeping hidden activations healthy; this
// is what makes the residual's earlier-layer gradients nonzero.
void randomize_final_layer(TransformParams& params, uint64_t seed) {
  Rng rng(seed);
  for (DenseLayer& layer : params.ff) {
    if (layer.hidden) continue;
    for (double& w : layer.w) w = (rng.next_double() - 0.5) * 0.4;
    for (double& b : layer.b) b = (rng.next_double() - 0.5) * 0.2;
  }
}

}  // namespace

TEST_CASE("residual transform is the identity at init") {
  TransformParams params = init_transform(TransformKind::residual, 16, 42);
  CHECK(params.output_dim == 16);
  Rng rng(1);
  std::vector<float> x = random_unit(rng, 16);
  std::vector<double> y = transform_forward(params, x, ForwardMode::eval,
                                            nullptr);
  REQUIRE(y.size() == 16);
  for (size_t i = 0; i < 16; ++i) CHECK(y[i] == (double)x[i]);
}

TEST_CASE("append dims follow the scaling rule") {
  TransformParams p768 = init_transform(TransformKind::append, 768, 1);
  CHECK(p768.output_dim == 800);
  REQUIRE(p768.ff.size() == 4);
  CHECK(p768.ff[0].out_dim == 64);
  CHECK(p768.ff[1].out_dim == 64);
  CHECK(p768.ff[2].out_dim == 64);
  CHECK(p768.ff[3].out_dim == 32);

  TransformParams p64 = init_transform(TransformKind::append, 64, 1);
  CHECK(p64.ff[0].out_dim == 8);   // max(8, 64/12)
  CHECK(p64.ff[3].out_dim == 4);   // max(4, 64/24)
  CHECK(p64.output_dim == 68);

  TransformParams r768 = init_transform(TransformKind::residual, 768, 1);
  REQUIRE(r768.ff.size() == 2);
  CHECK(r768.ff[0].out_dim == 384);
  CHECK(r768.ff[1].out_dim == 768);

  CHECK_THROWS_AS(init_transform(TransformKind::residual, 4, 1), DimError);
}

TEST_CASE("init is deterministic and eval forward is pure") {
  TransformParams a = init_transform(TransformKind::append, 24, 7);
  TransformParams b = init_transform(TransformKind::append, 24, 7);
  CHECK(a.ff[0].w == b.ff[0].w);
  CHECK(a.ff[3].b == b.ff[3].b);
  Rng rng(2);
  std::vector<float> x = random_unit(rng, 24);
  CHECK(transform_forward(a, x, ForwardMode::eval, nullptr) ==
        transform_forward(a, x, ForwardMode::eval, nullptr));
  std::vector<float> short_x(23);
  CHECK_THROWS_AS(transform_forward(a, short_x, ForwardMode::eval, nullptr),
                  DimError);
}

TEST_CASE("train-mode forward with a fixed rng stream is reproducible") {
  TransformParams params = init_transform(TransformKind::append, 16, 3);
  randomize_params(params, 5);
  params.dropout_rate = 0.3;
  Rng rx(9);
  std::vector<float> x = random_unit(rx, 16);
  Rng r1(77), r2(77);
  CHECK(transform_forward(params, x, ForwardMode::train, &r1) ==
        transform_forward(params, x, ForwardMode::train, &r2));
}

TEST_CASE("dropout rate 1 silences the FF path") {
  TransformParams params = init_transform(TransformKind::residual, 16, 11);
  params.dropout_rate = 1.0;
  Rng rng(4);
  std::vector<float> x = random_unit(rng, 16);
  Rng dropout_rng(8);
  std::vector<double> y =
      transform_forward(params, x, ForwardMode::train, &dropout_rng);
  for (size_t i = 0; i < 16; ++i) CHECK(y[i] == (double)x[i]);
}

TEST_CASE("ranknet loss values") {
  CHECK(ranknet_loss(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(ranknet_loss(40.0) < 1e-17);
  CHECK(ranknet_loss(40.0) >= 0.0);
  CHECK(ranknet_loss(-1.0) ==
        doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-12));
  CHECK(ranknet_loss(-50.0) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(ranknet_dloss(0.0) == -0.5);
}

TEST_CASE("pair_score equals the base dot product at residual init") {
  EqiModel model;
  model.hq = init_transform(TransformKind::residual, 32, 1);
  model.hd = init_transform(TransformKind::residual, 32, 2);
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<float> d = random_unit(rng, 32);
    std::vector<float> q = random_unit(rng, 32);
    double base = 0.0;
    for (size_t i = 0; i < 32; ++i) base += (double)d[i] * (double)q[i];
    CHECK(pair_score(model, d, q) == base);
  }
  std::vector<float> zero(32, 0.0f);
  std::vector<float> q = random_unit(rng, 32);
  CHECK(pair_score(model, zero, q) == 0.0);  // LN keeps zero input at zero
}

TEST_CASE("pair_score matches an independent recomputation") {
  EqiModel model;
  model.hq = init_transform(TransformKind::residual, 16, 21);
  model.hd = init_transform(TransformKind::residual, 16, 22);
  randomize_params(model.hq, 31);
  randomize_params(model.hd, 32);
  Rng rng(12);
  std::vector<float> d = random_unit(rng, 16);
  std::vector<float> q = random_unit(rng, 16);

  // Straight-line reimplementation of the residual forward.
  auto manual = [&](const TransformParams& t, const std::vector<float>& x) {
    std::vector<double> a(x.begin(), x.end());
    for (const DenseLayer& layer : t.ff) {
      std::vector<double> z(layer.out_dim, 0.0);
      for (uint32_t o = 0; o < layer.out_dim; ++o) {
        z[o] = layer.b[o];
        for (uint32_t i = 0; i < layer.in_dim; ++i)
          z[o] += layer.w[o * layer.in_dim + i] * a[i];
      }
      if (layer.hidden) {
        for (auto& v : z) v = v > 0 ? v : 0;
        double mean = 0;
        for (double v : z) mean += v;
        mean /= layer.out_dim;
        double var = 0;
        for (double v : z) var += (v - mean) * (v - mean);
        var /= layer.out_dim;
        double inv = 1.0 / std::sqrt(var + 1e-5);
        for (uint32_t o = 0; o < layer.out_dim; ++o)
          z[o] = layer.ln_gain[o] * ((z[o] - mean) * inv) + layer.ln_shift[o];
      }
      a = std::move(z);
    }
    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = (double)x[i] + a[i];
    return y;
  };
  std::vector<double> yd = manual(model.hd, d);
  std::vector<double> yq = manual(model.hq, q);
  double expected = 0.0;
  for (size_t i = 0; i < yd.size(); ++i) expected += yd[i] * yq[i];
  CHECK(pair_score(model, d, q) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("gradient check: residual at init and with a live output layer") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    EqiModel model;
    model.hq = init_transform(TransformKind::residual, 16,
                              derive_seed(seed, "hq"));
    model.hd = init_transform(TransformKind::residual, 16,
                              derive_seed(seed, "hd"));
    Rng rng(seed);
    std::vector<GradProbe> probes = skip_free_probes(model, rng, 6, 16);
    GradCheckReport at_init = gradient_check(model, probes);
    CHECK(at_init.max_rel_error < 1e-4);
    CHECK(at_init.params_checked ==
          model.hq.param_count() + model.hd.param_count());

    randomize_final_layer(model.hq, seed * 11 + 1);
    randomize_final_layer(model.hd, seed * 11 + 2);
    GradCheckReport randomized = gradient_check(model, probes);
    CHECK(randomized.max_rel_error < 1e-4);
    CHECK(randomized.params_checked ==
          model.hq.param_count() + model.hd.param_count());
  }
}

TEST_CASE("gradient check: append transform") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    EqiModel model;
    model.hq = init_transform(TransformKind::append, 16,
                              derive_seed(seed, "hq"));
    model.hd = init_transform(TransformKind::append, 16,
                              derive_seed(seed, "hd"));
    Rng rng(seed + 100);
    std::vector<GradProbe> probes = skip_free_probes(model, rng, 6, 16);
    GradCheckReport report = gradient_check(model, probes);
    size_t total = model.hq.param_count() + model.hd.param_count();
    CHECK(report.params_checked == total);
    CHECK(report.max_rel_error < 1e-4);
  }
}

namespace {

// A small world where rank order is learnable: doc vectors cluster around
// topic axes, exposing queries sit near them.
struct TrainFixture {
  TrainSet ts;
  VecMap doc_vecs;
  VecMap query_vecs;

  static TrainFixture make() {
    WorldConfig wc;
    wc.seed = 77;
    wc.n_docs = 300;
    wc.n_queries = 200;
    wc.vocab_size = 500;
    wc.n_topics = 10;
    SyntheticWorld world = generate_world(wc);
    SurrogateEncoder enc = SurrogateEncoder::build(world.docs, 32, 5);
    std::vector<std::vector<float>> dvecs;
    for (const Item& d : world.docs.items()) dvecs.push_back(enc.encode(d.text));
    DenseIndex index =
        DenseIndex::build(world.docs.all_ids(), dvecs, enc.fingerprint());
    DenseDocRetriever retriever(enc, index);
    TrainFixture f;
    f.ts = generate_train_set(world.queries, world.docs, retriever, enc, 8, 30,
                              100, 60, 13, 1);
    for (const TrainExample& ex : f.ts.examples()) {
      f.doc_vecs.emplace(ex.doc_id,
                         enc.encode(world.docs.by_id(ex.doc_id)->text));
      for (const auto& [qid, rank] : ex.labels)
        f.query_vecs.emplace(qid,
                             enc.encode(world.queries.by_id(qid)->text));
    }
    return f;
  }
};

}  // namespace

TEST_CASE("zero iterations return the initialized model unchanged") {
  TrainFixture f = TrainFixture::make();
  TrainConfig config;
  config.iterations = 0;
  config.seed = 3;
  config.dropout = 0.1;
  auto [model, report] = train_transform(f.ts, f.doc_vecs, f.query_vecs,
                                         TransformKind::residual, config,
                                         "fp");
  CHECK(report.iteration_mean_loss.empty());
  TransformParams fresh =
      init_transform(TransformKind::residual, 32, derive_seed(3, "hq"));
  CHECK(model.hq.ff[0].w == fresh.ff[0].w);
  CHECK(model.hq.ff[1].w == fresh.ff[1].w);
}

TEST_CASE("desk training lowers the loss") {
  TrainFixture f = TrainFixture::make();
  TrainConfig config;
  config.iterations = 20;
  config.batches_per_iteration = 10;
  config.samples_per_batch = 32;
  config.learning_rate = 5e-3;
  config.dropout = 0.1;
  config.alpha = 0.5;
  config.seed = 9;
  auto [model, report] = train_transform(f.ts, f.doc_vecs, f.query_vecs,
                                         TransformKind::residual, config,
                                         "fp");
  REQUIRE(report.iteration_mean_loss.size() == 20);
  // Mean over the last 10% below the first 10%.
  double head = report.iteration_mean_loss[0];
  double head2 = report.iteration_mean_loss[1];
  double tail = report.iteration_mean_loss[18];
  double tail2 = report.iteration_mean_loss[19];
  CHECK((tail + tail2) / 2.0 < (head + head2) / 2.0);
  CHECK(report.iteration_mean_loss.back() <
        report.iteration_mean_loss.front());
  for (double loss : report.iteration_mean_loss) CHECK(std::isfinite(loss));
}

TEST_CASE("training is deterministic and share_weights ties the sides") {
  TrainFixture f = TrainFixture::make();
  TrainConfig config;
  config.iterations = 3;
  config.batches_per_iteration = 4;
  config.samples_per_batch = 16;
  config.learning_rate = 1e-2;
  config.seed = 21;
  auto [m1, r1] = train_transform(f.ts, f.doc_vecs, f.query_vecs,
                                  TransformKind::residual, config, "fp");
  auto [m2, r2] = train_transform(f.ts, f.doc_vecs, f.query_vecs,
                                  TransformKind::residual, config, "fp");
  CHECK(m1.hq.ff[0].w == m2.hq.ff[0].w);
  CHECK(m1.hd.ff[1].w == m2.hd.ff[1].w);
  CHECK(r1.iteration_mean_loss == r2.iteration_mean_loss);

  config.share_weights = true;
  auto [ms, rs] = train_transform(f.ts, f.doc_vecs, f.query_vecs,
                                  TransformKind::residual, config, "fp");
  CHECK(ms.hq.ff[0].w == ms.hd.ff[0].w);
  CHECK(ms.hq.ff[1].b == ms.hd.ff[1].b);
}

TEST_CASE("training rejects missing vectors") {
  TrainFixture f = TrainFixture::make();
  VecMap missing_docs = f.doc_vecs;
  missing_docs.erase(missing_docs.begin());
  TrainConfig config;
  config.iterations = 1;
  CHECK_THROWS_AS(train_transform(f.ts, missing_docs, f.query_vecs,
                                  TransformKind::residual, config, "fp"),
                  DataError);
}

TEST_CASE("model serialization round-trips bit-exactly") {
  auto dir = test_tmp_dir("model_io");
  TrainFixture f = TrainFixture::make();
  TrainConfig config;
  config.iterations = 2;
  config.batches_per_iteration = 2;
  config.samples_per_batch = 8;
  config.learning_rate = 1e-2;
  config.seed = 5;
  auto [model, report] = train_transform(f.ts, f.doc_vecs, f.query_vecs,
                                         TransformKind::append, config, "fpX");
  model.save(dir / "m");
  EqiModel back = EqiModel::load(dir / "m");
  CHECK(back.base_fingerprint == "fpX");
  CHECK(back.hq.kind == TransformKind::append);
  for (size_t li = 0; li < model.hq.ff.size(); ++li) {
    CHECK(back.hq.ff[li].w == model.hq.ff[li].w);
    CHECK(back.hd.ff[li].b == model.hd.ff[li].b);
    CHECK(back.hq.ff[li].ln_gain == model.hq.ff[li].ln_gain);
  }
  back.save(dir / "m2");
  CHECK(read_text_file(dir / "m" / "params.bin") ==
        read_text_file(dir / "m2" / "params.bin"));
  CHECK(read_text_file(dir / "m" / "manifest.json") ==
        read_text_file(dir / "m2" / "manifest.json"));
}
