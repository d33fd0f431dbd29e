// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Usage: hyper3d_acceptance --cli <hyper3d binary> --work <dir>
//                 [--only C1,C7,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "gradcheck.hpp"
#include "hyper3d/checkpoint.hpp"
#include "hyper3d/mapgen.hpp"
#include "hyper3d/metrics.hpp"
#include "hyper3d/mlr.hpp"
#include "hyper3d/network.hpp"
#include "hyper3d/sampling.hpp"
#include "hyper3d/synthfield.hpp"
#include "hyper3d/training.hpp"
#include "oracles.hpp"

using namespace hyper3d;
namespace fs = std::filesystem;
namespace L = hyper3d::layers;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

struct Args {
  fs::path cli;
  fs::path work = "acceptance_work";
  std::set<std::string> only;
};

// ---------------------------------------------------------------- C1

Outcome c1_layer_shapes() {
  using Row = std::pair<std::string, Shape>;
  // Output Size column for n = 8
  const std::vector<Row> trunk{{"Input", {5, 5, 8, 1}},
                               {"Conv3D + ReLU + BN", {5, 5, 8, 32}},
                               {"Conv3D + ReLU + BN", {5, 5, 8, 32}},
                               {"CONCAT", {5, 5, 8, 64}},
                               {"Conv3D + ReLU + BN", {5, 5, 8, 32}},
                               {"CONCAT", {5, 5, 8, 96}},
                               {"Conv3D + ReLU + BN", {5, 5, 8, 32}},
                               {"CONCAT", {5, 5, 8, 128}},
                               {"Reshape", {5, 5, 1024}},
                               {"Dropout", {5, 5, 1024}},
                               {"SepConv2D + ReLU + BN", {5, 5, 512}},
                               {"SepConv2D + ReLU + BN", {5, 5, 320}},
                               {"Dropout", {5, 5, 320}},
                               {"SepConv2D + ReLU + BN", {5, 5, 256}},
                               {"Dropout", {5, 5, 256}},
                               {"SepConv2D + ReLU + BN", {5, 5, 128}},
                               {"SepConv2D + ReLU + BN", {5, 5, 32}}};
  const std::map<std::size_t, std::vector<Row>> heads{
      {5, {{"Conv2D + ReLU", {5, 5, 1}}}},
      {3, {{"Conv2D + ReLU", {3, 3, 1}}}},
      {1, {{"Conv2D + ReLU", {3, 3, 1}}, {"Reshape", {9, 1}}, {"FC", {1}}}}};

  Outcome o;
  std::size_t rows = 0;
  for (const auto& [N, head] : heads) {
    ModelConfig cfg;
    cfg.out_size = N;
    const Hyper3DNetReg net(cfg, 1);
    ForwardCache cache;
    net.forward(Tensor(net.input_shape(1), 0.5), Mode::kEval, &cache);
    std::vector<Row> expected = trunk;
    expected.insert(expected.end(), head.begin(), head.end());
    if (cache.trace.size() != expected.size()) {
      return {false, "N=" + std::to_string(N) + ": " + std::to_string(cache.trace.size()) + " rows, expected " +
                         std::to_string(expected.size())};
    }
    for (std::size_t i = 0; i < expected.size(); ++i, ++rows) {
      if (cache.trace[i].layer != expected[i].first || cache.trace[i].shape != expected[i].second) {
        return {false, "N=" + std::to_string(N) + " row " + std::to_string(i) + ": got " + cache.trace[i].layer +
                           " " + to_string(cache.trace[i].shape) + ", expected " + expected[i].first + " " +
                           to_string(expected[i].second)};
      }
    }
  }
  o.detail = std::to_string(rows) + " layer rows match for N=5,3,1";
  return o;
}

// ---------------------------------------------------------------- C2

Outcome c2_param_counts() {
  std::size_t head = 0, fc = 0;
  ModelConfig cfg;
  for (const auto& c : count_params(cfg))
    if (c.layer == "head_conv2d") head = c.trainable;
  cfg.out_size = 1;
  for (const auto& c : count_params(cfg))
    if (c.layer == "head_dense") fc = c.trainable;
  // allocated tensors must agree with the closed forms
  const Hyper3DNetReg n1(cfg, 1);
  std::size_t fc_alloc = n1.params()[n1.params().index("head_dense/kernel")].value.size();
  std::size_t head_alloc = n1.params()[n1.params().index("head_conv2d/kernel")].value.size() +
                           n1.params()[n1.params().index("head_conv2d/bias")].value.size();
  const std::size_t alt = dense_param_count(5 * 5 * 32, 5 * 5);
  const bool ok = head == 289 && head_alloc == 289 && alt == 20025 && fc == 9 && fc_alloc == 9;
  return {ok, "head Conv2D " + std::to_string(head) + ", FC alternative " + std::to_string(alt) +
                  ", N=1 FC " + std::to_string(fc)};
}

// ---------------------------------------------------------------- C3

double dot(const Tensor& out, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

double grad_error(Tensor& wrt, const Tensor& analytic, const std::function<double()>& loss,
                  std::vector<std::size_t> idx = {}) {
  if (idx.empty()) idx = gradcheck::all_indices(wrt.size());
  const auto numeric = gradcheck::numeric(wrt.data(), idx, loss, 1e-5);
  std::vector<double> a;
  for (std::size_t i : idx) a.push_back(analytic[i]);
  return gradcheck::relative_error(a, numeric);
}

double layer_gradients(std::vector<std::string>& worst) {
  gen::Gen g(2024);
  double max_err = 0.0;
  auto note = [&](const std::string& name, double e) {
    if (e > max_err) {
      max_err = e;
      worst = {name};
    }
  };
  {
    Tensor x = g.tensor({2, 4, 3, 3, 2}), k = g.tensor({3, 3, 3, 2, 3}), b = g.tensor({3});
    const Tensor w = g.tensor({2, 4, 3, 3, 3});
    auto loss = [&] { return dot(L::conv3d_forward(x, k, b), w); };
    Tensor dx, dk(k.shape()), db(b.shape());
    L::conv3d_backward(x, k, w, {}, &dx, dk, db);
    note("conv3d", std::max({grad_error(x, dx, loss), grad_error(k, dk, loss), grad_error(b, db, loss)}));
  }
  for (std::size_t pad : {0u, 1u}) {
    Tensor x = g.tensor({2, 5, 5, 3}), k = g.tensor({3, 3, 3, 1}), b = g.tensor({1});
    const Tensor w = g.tensor(L::conv2d_forward(x, k, b, pad).shape());
    auto loss = [&] { return dot(L::conv2d_forward(x, k, b, pad), w); };
    Tensor dx, dk(k.shape()), db(b.shape());
    L::conv2d_backward(x, k, w, pad, &dx, dk, db);
    note("conv2d", std::max({grad_error(x, dx, loss), grad_error(k, dk, loss), grad_error(b, db, loss)}));
  }
  {
    Tensor x = g.tensor({2, 5, 5, 4}), k = g.tensor({3, 3, 4}), p = g.tensor({4, 3}), b = g.tensor({3});
    const Tensor w = g.tensor({2, 5, 5, 3});
    auto loss = [&] { return dot(L::sepconv2d_forward(x, k, p, b, 1), w); };
    const Tensor mid = L::depthwise2d_forward(x, k, 1);
    Tensor dmid, dp(p.shape()), db(b.shape()), dx, dk(k.shape());
    L::pointwise_backward(mid, p, w, &dmid, dp, db);
    L::depthwise2d_backward(x, k, dmid, 1, &dx, dk);
    note("sepconv2d", std::max({grad_error(x, dx, loss), grad_error(k, dk, loss), grad_error(p, dp, loss),
                                grad_error(b, db, loss)}));
  }
  for (L::Mode mode : {L::Mode::kTrain, L::Mode::kEval}) {
    Tensor x = g.tensor({3, 2, 2, 4}, -2, 3), gm = g.tensor({4}, 0.5, 1.5), bt = g.tensor({4});
    const Tensor rm = g.tensor({4}), rv = g.tensor({4}, 0.5, 2), w = g.tensor(x.shape());
    auto loss = [&] { return dot(L::batchnorm_forward(x, gm, bt, rm, rv, mode, 1e-5), w); };
    L::BatchNormCache cache;
    L::batchnorm_forward(x, gm, bt, rm, rv, mode, 1e-5, &cache);
    Tensor dx, dg(gm.shape()), db(bt.shape());
    L::batchnorm_backward(cache, gm, w, &dx, dg, db);
    note("batchnorm", std::max({grad_error(x, dx, loss), grad_error(gm, dg, loss), grad_error(bt, db, loss)}));
  }
  {
    Tensor x = g.tensor({4, 9});
    const Tensor w = g.tensor({4, 9});
    Tensor y = x;
    L::relu_inplace(y);
    auto relu_loss = [&] {
      Tensor t = x;
      L::relu_inplace(t);
      return dot(t, w);
    };
    note("relu", grad_error(x, L::relu_backward(y, w), relu_loss));

    std::vector<std::uint8_t> mask;
    Rng rng(5);
    L::dropout_forward(x, 0.5, L::Mode::kTrain, &rng, &mask);
    auto drop_loss = [&] {
      Rng r(5);
      return dot(L::dropout_forward(x, 0.5, L::Mode::kTrain, &r, nullptr), w);
    };
    note("dropout", grad_error(x, L::dropout_backward(w, mask, 0.5, L::Mode::kTrain), drop_loss));

    Tensor k = g.tensor({9, 1});
    const Tensor w1 = g.tensor({4, 1});
    auto fc_loss = [&] { return dot(L::dense_forward(x, k), w1); };
    Tensor dx, dk(k.shape());
    L::dense_backward(x, k, w1, &dx, dk);
    note("dense", std::max(grad_error(x, dx, fc_loss), grad_error(k, dk, fc_loss)));
  }
  return max_err;
}

// ReLU on/off pattern of every activation in the network.
std::vector<bool> relu_pattern(const ForwardCache& c) {
  std::vector<bool> p;
  auto add = [&](const Tensor& t) {
    for (double v : t.values()) p.push_back(v > 0.0);
  };
  for (const auto& b : c.conv) add(b.activated);
  for (const auto& b : c.sep) add(b.activated);
  add(c.head_activated);
  if (c.flattened.size() > 0) add(c.output);
  return p;
}

struct NetGradCheck {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t kinked = 0;  // entries whose +-h probe flips some ReLU
};

// Train-mode MSE of the network; every trainable block and the input are
// checked (sampled when per_block > 0). Central differences are meaningless
// across a ReLU kink, so probes that change the activation pattern are
// counted and left out of the comparison.
NetGradCheck network_gradients(Hyper3DNetReg& net, std::size_t batch, std::size_t per_block, double h,
                               gen::Gen& g) {
  const std::size_t n = net.config().channels;
  Tensor x = g.tensor({batch, 5, 5, n, 1}, 0, 1);
  const Tensor target = g.tensor(net.output_shape(batch), 0, 2);
  ForwardCache cache;
  const LossResult lr = mse_loss(net.forward(x, Mode::kTrain, &cache, 77), target);
  const std::vector<bool> base = relu_pattern(cache);
  Tensor dx;
  const Gradients grads = net.backward(cache, lr.grad, &dx);

  NetGradCheck r;
  auto check = [&](Tensor& wrt, const Tensor& analytic) {
    std::vector<std::size_t> idx;
    if (per_block == 0 || per_block >= wrt.size()) {
      idx = gradcheck::all_indices(wrt.size());
    } else {
      for (std::size_t k = 0; k < per_block; ++k) idx.push_back(g.size(0, wrt.size() - 1));
    }
    std::vector<double> a, num;
    for (std::size_t i : idx) {
      const double saved = wrt[i];
      ForwardCache probe;
      wrt[i] = saved + h;
      const double up = mse_loss(net.forward(x, Mode::kTrain, &probe, 77), target).loss;
      bool smooth = relu_pattern(probe) == base;
      wrt[i] = saved - h;
      const double down = mse_loss(net.forward(x, Mode::kTrain, &probe, 77), target).loss;
      smooth = smooth && relu_pattern(probe) == base;
      wrt[i] = saved;
      if (!smooth) {
        ++r.kinked;
        continue;
      }
      a.push_back(analytic[i]);
      num.push_back((up - down) / (2.0 * h));
    }
    r.checked += a.size();
    r.max_error = std::max(r.max_error, gradcheck::relative_error(a, num));
  };
  for (std::size_t b = 0; b < net.params().size(); ++b)
    if (net.params()[b].trainable) check(net.params()[b].value, grads[b]);
  check(x, dx);
  return r;
}

Outcome c3_gradients() {
  std::vector<std::string> worst;
  const double layer_err = layer_gradients(worst);
  gen::Gen g(99);
  NetGradCheck nets;
  for (std::size_t N : {5u, 3u, 1u}) {
    ModelConfig c;
    c.channels = 3;
    c.out_size = N;
    c.conv3d_filters = 2;
    c.sepconv_filters = {4, 3, 3, 2, 2};
    Hyper3DNetReg net(c, 60 + N);
    const NetGradCheck r = network_gradients(net, 3, 0, 1e-5, g);
    nets.max_error = std::max(nets.max_error, r.max_error);
    nets.checked += r.checked;
    nets.kinked += r.kinked;
  }
  // the wide network has ~10^5 activations per sample; a smaller step keeps
  // most probes on one side of every kink
  Hyper3DNetReg full(ModelConfig{}, 8);
  const NetGradCheck wide = network_gradients(full, 2, 3, 1e-6, g);
  auto mostly_smooth = [](const NetGradCheck& r) { return r.checked > 0 && r.kinked * 4 <= r.checked + r.kinked; };
  const bool ok = layer_err < 1e-4 && nets.max_error < 1e-4 && wide.max_error < 1e-4 && mostly_smooth(nets) &&
                  mostly_smooth(wide);
  return {ok, "max rel err: layers " + fmt(layer_err) + " (" + (worst.empty() ? "" : worst[0]) +
                  "), surrogate nets " + fmt(nets.max_error) + " over " + std::to_string(nets.checked) +
                  " entries, full width " + fmt(wide.max_error) + " over " + std::to_string(wide.checked) +
                  " sampled entries; ReLU-kink probes excluded: " + std::to_string(nets.kinked) + " + " +
                  std::to_string(wide.kinked)};
}

// ---------------------------------------------------------------- C4

Outcome c4_overlap_oracle() {
  gen::Gen g(44);
  const std::size_t h = 6, w = 6, n = 2;
  double max_diff = 0.0;
  bool counts_ok = true, interior_ok = true;
  for (std::size_t N : {1u, 3u, 5u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const FieldRaster f = trial == 0 ? [&] {
        FieldRaster full(h, w, n);
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t c = 0; c < w; ++c) {
            full.set_in_field(r, c, true);
            for (std::size_t ch = 0; ch < n; ++ch) full.at(r, c, ch) = g.real(0, 1);
          }
        return full;
      }()
                                       : g.raster(h, w, n, 0.75, 0, 1);
      auto weight = [](std::size_t k, std::size_t o) { return std::cos(0.21 * double(k) - 0.9 * double(o)); };
      const Predictor stub{5, N, n, [&, N](const Tensor& x) {
                             const std::size_t b = x.dim(0), per = 25 * n;
                             Tensor y = N == 1 ? Tensor({b, 1}) : Tensor({b, N, N});
                             for (std::size_t s = 0; s < b; ++s)
                               for (std::size_t o = 0; o < N * N; ++o) {
                                 double acc = 0.0;
                                 for (std::size_t k = 0; k < per; ++k) acc += x[s * per + k] * weight(k, o);
                                 y[s * N * N + o] = acc;
                               }
                             return y;
                           }};
      std::vector<int> field(h * w);
      std::vector<oracle::Vec> planes(n, oracle::Vec(h * w, 0.0));
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          field[r * w + c] = f.in_field(r, c);
          for (std::size_t ch = 0; ch < n; ++ch)
            if (f.in_field(r, c)) planes[ch][r * w + c] = f.at(r, c, ch);
        }
      const auto [avg, counts] = oracle::overlap_average(h, w, field, N, [&](std::size_t r, std::size_t c) {
        std::vector<oracle::Vec> win;
        for (std::size_t ch = 0; ch < n; ++ch) win.push_back(oracle::window(planes[ch], field, h, w, r, c, 5));
        oracle::Vec out(N * N, 0.0);
        for (std::size_t o = 0; o < N * N; ++o)
          for (std::size_t cell = 0; cell < 25; ++cell)
            for (std::size_t ch = 0; ch < n; ++ch) out[o] += win[ch][cell] * weight(cell * n + ch, o);
        return out;
      });
      const PredictedMap m = predict_map(stub, f, f);
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          if (!field[r * w + c]) continue;
          max_diff = std::max(max_diff, std::abs(m.yield.at(r, c) - avg[r * w + c]));
          counts_ok = counts_ok && m.counts.at(r, c) == double(counts[r * w + c]);
        }
      if (trial == 0) {
        const std::size_t half = N / 2;
        for (std::size_t r = half; r + half < h; ++r)
          for (std::size_t c = half; c + half < w; ++c)
            interior_ok = interior_ok && m.counts.at(r, c) == double(N * N);
      }
    }
  }
  return {max_diff <= 1e-12 && counts_ok && interior_ok,
          "max |map - oracle| " + fmt(max_diff) + ", counts " + (counts_ok ? "match" : "differ") +
              ", interior counts N^2 " + (interior_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------- C5

Outcome c5_variance_reduction() {
  const double sigma = 5.0;
  const std::size_t h = 11, w = 11, pr = 5, pc = 5, trials = 1000;
  FieldRaster truth(h, w, 1);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      truth.set_in_field(r, c, true);
      truth.at(r, c) = 120.0 + 2.0 * double(r) - double(c);
    }
  std::vector<double> ratios, vars;
  for (std::size_t N : {1u, 3u, 5u}) {
    std::mt19937_64 eng(500 + N);
    std::normal_distribution<double> noise(0.0, sigma);
    const Predictor stub{5, N, 1, [&, N](const Tensor& x) {
                           const std::size_t b = x.dim(0), off = (5 - N) / 2;
                           Tensor y = N == 1 ? Tensor({b, 1}) : Tensor({b, N, N});
                           for (std::size_t s = 0; s < b; ++s)
                             for (std::size_t i = 0; i < N; ++i)
                               for (std::size_t j = 0; j < N; ++j)
                                 y[(s * N + i) * N + j] = x[s * 25 + (i + off) * 5 + (j + off)] + noise(eng);
                           return y;
                         }};
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const double e = predict_map(stub, truth, truth).yield.at(pr, pc) - truth.at(pr, pc);
      sum += e;
      sum_sq += e * e;
    }
    const double mean = sum / double(trials);
    const double var = (sum_sq - double(trials) * mean * mean) / double(trials - 1);
    vars.push_back(var);
    ratios.push_back(var / (sigma * sigma / double(N * N)));
  }
  bool ok = vars[0] > vars[1] && vars[1] > vars[2];
  for (double r : ratios) ok = ok && r > 0.5 && r < 2.0;
  return {ok, "var/(sigma^2/N^2) = " + fmt(ratios[0]) + ", " + fmt(ratios[1]) + ", " + fmt(ratios[2]) +
                  " for N=1,3,5 over 1000 trials"};
}

// ---------------------------------------------------------------- C6

Outcome c6_metrics() {
  gen::Gen g(66);
  double max_diff = 0.0;
  bool identity = true, symmetric = true, background = true;
  for (int trial = 0; trial < 20; ++trial) {
    const FieldRaster truth = g.raster(20, 20, 1, 0.7, 0, 220);
    FieldRaster pred(20, 20, 1);
    for (std::size_t r = 0; r < 20; ++r)
      for (std::size_t c = 0; c < 20; ++c)
        if (truth.in_field(r, c) || g.coin(0.1)) {
          pred.set_in_field(r, c, true);
          pred.at(r, c) = std::max(0.0, (truth.in_field(r, c) ? truth.at(r, c) : 100.0) + g.real(-40, 40));
        }
    std::vector<double> ti(400), pi(400);
    std::vector<int> tm(400), pm(400);
    std::vector<double> se;
    double L = 0.0;
    for (std::size_t k = 0; k < 400; ++k) {
      tm[k] = truth.mask()[k];
      pm[k] = pred.mask()[k];
      ti[k] = tm[k] ? truth.values()[k] : 0.0;
      pi[k] = pm[k] ? pred.values()[k] : 0.0;
      L = std::max({L, ti[k], pi[k]});
      if (tm[k]) se.push_back((ti[k] - pred.values()[k]) * (ti[k] - pred.values()[k]));
    }
    double sum = 0.0;
    for (double v : se) sum += v;
    max_diff = std::max(max_diff, std::abs(rmse(truth, pred) - std::sqrt(sum / double(se.size()))));
    max_diff = std::max(max_diff, std::abs(rmedse(truth, pred) - std::sqrt(oracle::median(se))));
    for (std::size_t win : {3u, 11u}) {
      const FieldRaster map = ssim_map(truth, pred, win);
      for (std::size_t r = 0; r < 20; ++r)
        for (std::size_t c = 0; c < 20; ++c) {
          const double expected = oracle::ssim_window(oracle::window(ti, tm, 20, 20, r, c, win),
                                                      oracle::window(pi, pm, 20, 20, r, c, win), L);
          max_diff = std::max(max_diff, std::abs(map.at(r, c) - expected));
        }
      const FieldRaster self = ssim_map(truth, truth, win);
      for (double v : self.values()) identity = identity && v == 1.0;
      const FieldRaster rev = ssim_map(pred, truth, win);
      for (std::size_t k = 0; k < 400; ++k) symmetric = symmetric && rev.values()[k] == map.values()[k];
    }
  }
  // a small field in the corner of a larger raster: windows entirely on the
  // shared zero background score exactly 1
  FieldRaster t(16, 16, 1), p(16, 16, 1);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      t.set_in_field(r, c, true);
      p.set_in_field(r, c, true);
      t.at(r, c) = 150.0 + 3.0 * double(r);
      p.at(r, c) = 140.0 + 2.0 * double(c);
    }
  const FieldRaster bg = ssim_map(t, p, 3);
  for (std::size_t r = 5; r < 16; ++r)
    for (std::size_t c = 5; c < 16; ++c) background = background && bg.at(r, c) == 1.0;
  const bool ok = max_diff <= 1e-10 && identity && symmetric && background;
  return {ok, "max |metric - oracle| " + fmt(max_diff) + "; SSIM(M,M)=1 " + (identity ? "exact" : "violated") +
                  "; symmetric " + (symmetric ? "yes" : "no") + "; background windows 1 " +
                  (background ? "yes" : "no")};
}

// ---------------------------------------------------------------- C7

Outcome c7_adadelta() {
  const double rho = 0.95, eps = 1e-6, g = 1.0;
  double x = 0.0;
  AdadeltaSlot slot;
  const double dx = adadelta_step(x, g, slot, {rho, eps});
  // hand evaluation with E[g^2]_1 = (1 - rho) g^2 and E[dx^2]_0 = 0
  const double hand = -std::sqrt(0.0 + eps) / std::sqrt((1.0 - rho) * g * g + eps) * g;
  const double stated = -4.4716e-3;

  double v = 1.0, prev = 1.0;
  AdadeltaSlot s2;
  bool monotone = true;
  for (int t = 1; t <= 200; ++t) {
    adadelta_step(v, 2.0 * v, s2, {rho, eps});
    if (t > 1) monotone = monotone && std::abs(v) < prev;
    prev = std::abs(v);
  }
  const bool ok = std::abs(dx - hand) <= 1e-7 && monotone;
  return {ok, "first step " + fmt(dx, 7) + " vs hand-evaluated " + fmt(hand, 7) + " (|diff| " +
                  fmt(std::abs(dx - hand)) + "); stated constant " + fmt(stated, 5) + " is off by " +
                  fmt(std::abs(hand - stated)) + " (rounding slip, see README); |x| after 200 steps " +
                  fmt(std::abs(v)) + ", monotone " + (monotone ? "yes" : "no")};
}

// ---------------------------------------------------------------- C8

Outcome c8_overfit() {
  SynthSpec spec;
  spec.seed = 8;
  const SynthField field = generate(spec);
  auto samples = extract_patches(field.years[0].features, field.years[0].yield, {5, 5, 0.75}, spec.years[0]);
  if (samples.size() < 8) return {false, "not enough patches"};
  std::vector<Sample> eight;
  for (std::size_t i = 0; i < 8; ++i) eight.push_back(samples[i * (samples.size() / 8)]);
  DatasetSplit split{eight, {}, 0};
  TrainConfig cfg;
  cfg.seed = 8;
  cfg.epochs = 500;
  double first = -1.0, last = 0.0;
  const TrainResult r = train(split, cfg, ModelConfig{}, [&](const EpochRecord& e) {
    if (first < 0) first = e.train_mse;
    last = e.train_mse;
    return !(last < 0.01 * first);
  });
  const bool ok = last < 0.01 * first;

  // samples whose whole output is clamped by the final ReLU get no gradient
  std::vector<Sample> normalized = eight;
  normalize_samples(normalized, *r.best.normalizer);
  std::vector<std::size_t> idx(8);
  for (std::size_t i = 0; i < 8; ++i) idx[i] = i;
  const Tensor pred = to_network(r.best).forward(batch_inputs(normalized, idx), Mode::kEval);
  std::size_t dead = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    bool all_zero = true;
    for (std::size_t k = 0; k < 25; ++k) all_zero = all_zero && pred[i * 25 + k] == 0.0;
    dead += all_zero;
  }
  return {ok, "epoch-0 train MSE " + fmt(first, 6) + ", final " + fmt(last, 6) + " after " +
                  std::to_string(r.history.size()) + " epochs (ratio " + fmt(last / first) + ", target < 0.01); " +
                  std::to_string(dead) + " of 8 samples have every output clamped to 0 by the final ReLU"};
}

// ---------------------------------------------------------------- C9

Outcome c9_mlr() {
  gen::Gen g(9);
  double max_diff = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    MlrData d{8, g.reals(200 * 8, -3, 3), {}};
    for (std::size_t i = 0; i < 200; ++i) d.y.push_back(g.real(0, 200));
    const MlrModel m = fit_mlr(d);
    const auto beta = oracle::normal_equations(d.x, d.y, 8);
    for (std::size_t j = 0; j < 8; ++j) max_diff = std::max(max_diff, std::abs(m.coefficients[j] - beta[j]));
    max_diff = std::max(max_diff, std::abs(m.intercept - beta[8]));
  }

  SynthSpec spec;
  spec.response = Response::kLinear;
  spec.noise_sigma = 0.0;
  const SynthField f = generate(spec);
  MlrData d{kFeatureChannels, {}, {}};
  for (const auto& y : f.years)
    for (std::size_t r = 0; r < spec.height; ++r)
      for (std::size_t c = 0; c < spec.width; ++c) {
        if (!y.yield.in_field(r, c)) continue;
        for (std::size_t ch = 0; ch < kFeatureChannels; ++ch) d.x.push_back(y.features.at(r, c, ch));
        d.y.push_back(y.yield.at(r, c));
      }
  const MlrModel m = fit_mlr(d);
  const LinearResponse truth = linear_response();
  double coef_err = 0.0;
  for (std::size_t j = 0; j < kFeatureChannels; ++j)
    coef_err = std::max(coef_err, std::abs(m.coefficients[j] - truth.beta[j]));
  const bool ok = max_diff <= 1e-8 && coef_err <= 1e-6;
  return {ok, "max |QR - normal equations| " + fmt(max_diff) + "; linear family coefficient error " +
                  fmt(coef_err) + " over " + std::to_string(d.rows()) + " cells"};
}

// ---------------------------------------------------------------- C10 / C11

int run_cli(const Args& args, const std::string& cmd, const fs::path& log) {
  const std::string line = "\"" + args.cli.string() + "\" " + cmd + " >> \"" + log.string() + "\" 2>&1";
  return std::system(line.c_str());
}

struct PipelineRun {
  bool ok = true;
  std::string failure;
  fs::path dir;
};

PipelineRun run_pipeline(const Args& args, const fs::path& dir) {
  PipelineRun run;
  run.dir = dir;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "run.ini", log = dir / "log.txt";
  {
    std::ofstream out(cfg);
    out << "[field]\nheight = 48\nwidth = 48\nyears = 2016, 2018, 2020\nseed = 2021\nboundary = blob\n"
        << "[run]\nfield_dir = " << (dir / "field").string() << "\nout_dir = " << (dir / "out").string()
        << "\nseed = 2021\nthreads = 1\n"
        << "[train]\nepochs = 8\n";
  }
  const std::string c = "--config \"" + cfg.string() + "\"";
  const fs::path out = dir / "out", eval = dir / "eval", img = dir / "images";
  fs::create_directories(img);
  const std::vector<std::string> steps{
      "synth " + c + " --out \"" + (dir / "field").string() + "\"",
      "train " + c + " --model-n 5 --baseline",
      "train " + c + " --model-n 1",
      "predict " + c + " --checkpoint \"" + (out / "model_n5.ckpt").string() + "\" --mlr \"" +
          (out / "mlr_coefficients.csv").string() + "\"",
      "predict " + c + " --checkpoint \"" + (out / "model_n1.ckpt").string() + "\"",
      "evaluate --truth \"" + (dir / "field" / "yield_2020.frst").string() + "\" --pred n5=\"" +
          (out / "pred_n5.frst").string() + "\" --pred n1=\"" + (out / "pred_n1.frst").string() +
          "\" --pred mlr=\"" + (out / "pred_mlr.frst").string() + "\" --out \"" + eval.string() + "\"",
      "render --input \"" + (dir / "field" / "yield_2020.frst").string() + "\" --out \"" +
          (img / "truth.ppm").string() + "\"",
      "render --input \"" + (out / "pred_n5.frst").string() + "\" --out \"" + (img / "pred_n5.ppm").string() + "\"",
      "render --input \"" + (out / "pred_n1.frst").string() + "\" --out \"" + (img / "pred_n1.ppm").string() + "\"",
      "render --input \"" + (eval / "ssim3_n5.frst").string() + "\" --palette gray --out \"" +
          (img / "ssim3_n5.pgm").string() + "\""};
  for (const auto& s : steps) {
    if (run_cli(args, s, log) != 0) {
      run.ok = false;
      run.failure = "step failed: hyper3d " + s.substr(0, s.find(' ')) + " (see " + log.string() + ")";
      return run;
    }
  }
  return run;
}

std::map<std::string, std::string> file_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).string();
    if (rel == "log.txt" || rel == "run.ini") continue;  // log and config embed the run directory
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    out[rel] = buf.str();
  }
  return out;
}

Outcome c10_end_to_end(const Args& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineRun run = run_pipeline(args, args.work / "run_a");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!run.ok) return {false, run.failure};

  std::ifstream in(run.dir / "eval" / "metrics.csv");
  std::string line;
  std::getline(in, line);
  const bool header_ok = line == "metric,n5,n1,mlr";
  std::vector<std::string> rows;
  std::string rmse_row, ssim_row;
  while (std::getline(in, line)) {
    rows.push_back(line.substr(0, line.find(',')));
    if (rows.back() == "RMSE") rmse_row = line;
    if (rows.back() == "SSIM3*") ssim_row = line;
  }
  bool rows_ok = rows.size() >= 4;
  const std::vector<std::string> want{"RMSE", "RMedSE", "SSIM3*", "SSIM11*"};
  for (std::size_t i = 0; i < want.size() && rows_ok; ++i) rows_ok = rows[i] == want[i];
  bool images_ok = true;
  for (const char* name : {"truth.ppm", "pred_n5.ppm", "pred_n1.ppm", "ssim3_n5.pgm"})
    images_ok = images_ok && fs::exists(run.dir / "images" / name) && fs::file_size(run.dir / "images" / name) > 0;
  const bool ok = header_ok && rows_ok && images_ok && secs < 15 * 60;
  return {ok, "pipeline " + fmt(secs, 4) + " s; metrics.csv header " + (header_ok ? "ok" : "wrong") +
                  ", rows " + (rows_ok ? "ok" : "wrong") + ", images " + (images_ok ? "ok" : "missing") +
                  "; " + rmse_row + "; " + ssim_row};
}

Outcome c11_reproducible(const Args& args) {
  const fs::path a = args.work / "run_a";
  if (!fs::exists(a / "eval" / "metrics.csv")) {
    const PipelineRun first = run_pipeline(args, a);
    if (!first.ok) return {false, first.failure};
  }
  const PipelineRun second = run_pipeline(args, args.work / "run_b");
  if (!second.ok) return {false, second.failure};
  const auto fa = file_bytes(a), fb = file_bytes(second.dir);
  std::vector<std::string> differ;
  for (const auto& [name, bytes] : fa) {
    const auto it = fb.find(name);
    if (it == fb.end() || it->second != bytes) differ.push_back(name);
  }
  for (const auto& [name, bytes] : fb)
    if (!fa.count(name)) differ.push_back(name);
  std::size_t ckpts = 0;
  for (const auto& [name, bytes] : fa) ckpts += name.ends_with(".ckpt");
  if (!differ.empty()) return {false, "differing files: " + differ.front() + " and " + std::to_string(differ.size() - 1) + " more"};
  return {ckpts == 2, std::to_string(fa.size()) + " files byte-identical across two runs (" +
                          std::to_string(ckpts) + " checkpoints)"};
}

Args parse_args(int argc, char** argv) {
  Args a;
  for (int i = 1; i < argc; ++i) {
    const std::string k = argv[i];
    auto value = [&]() -> std::string {
      if (i + 1 >= argc) throw std::invalid_argument("missing value for " + k);
      return argv[++i];
    };
    if (k == "--cli") {
      a.cli = value();
    } else if (k == "--work") {
      a.work = value();
    } else if (k == "--only") {
      std::stringstream ss(value());
      for (std::string item; std::getline(ss, item, ',');) a.only.insert(item);
    } else {
      throw std::invalid_argument("unknown argument " + k);
    }
  }
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  Args args;
  try {
    args = parse_args(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  fs::create_directories(args.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"C1 layer output shapes", c1_layer_shapes},
      {"C2 parameter counts", c2_param_counts},
      {"C3 gradient checks", c3_gradients},
      {"C4 overlap-average oracle", c4_overlap_oracle},
      {"C5 variance reduction", c5_variance_reduction},
      {"C6 metric oracles", c6_metrics},
      {"C7 Adadelta", c7_adadelta},
      {"C8 overfit smoke test", c8_overfit},
      {"C9 MLR baseline", c9_mlr},
      {"C10 end-to-end pipeline", [&] { return c10_end_to_end(args); }},
      {"C11 reproducibility", [&] { return c11_reproducible(args); }},
  };

  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    const std::string id = name.substr(0, name.find(' '));
    if (!args.only.empty() && !args.only.count(id)) continue;
    if ((id == "C10" || id == "C11") && args.cli.empty()) {
      std::cout << "FAIL " << name << ": no --cli given\n";
      ++failures;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(secs, 3) << " s]"
              << std::endl;
    failures += !o.pass;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
