#include "inet/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include "inet/encoder.hpp"
#include "inet/model.hpp"
#include "inet/ops.hpp"
#include "inet/sampling.hpp"
#include "inet/spectral.hpp"

namespace inet::checks {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

GradCheckStats gradcheck(const LossFn& loss, const std::vector<Tensor>& wrt, std::mt19937_64& rng,
                         const GradCheckOptions& options) {
  for (auto t : wrt) t.zero_grad();
  {
    Tape tape;
    Tensor l = loss(tape);
    tape.backward(l);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& t : wrt) {
    if (t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.size(), 0.0);
  }
  for (auto t : wrt) t.zero_grad();

  auto eval = [&loss] {
    Tape off(false);
    return loss(off).item();
  };
  const double h = options.step;
  GradCheckStats stats;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    Tensor t = wrt[ti];
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > options.samples_per_tensor) {
      for (std::size_t i = 0; i < options.samples_per_tensor; ++i)
        std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
      idx.resize(options.samples_per_tensor);
    }
    for (std::size_t i : idx) {
      auto w = t.mutable_data();
      const double orig = w[i];
      const double f0 = eval();
      w[i] = orig + h;
      const double fp = eval();
      w[i] = orig - h;
      const double fm = eval();
      w[i] = orig;
      const double left = (f0 - fm) / h, right = (fp - f0) / h;
      if (std::abs(left - right) > options.kink_tolerance * std::max({std::abs(left), std::abs(right), 1e-6})) {
        ++stats.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      stats.max_relative_error = std::max(stats.max_relative_error, relative_error(analytic[ti][i], numeric));
      ++stats.checked;
    }
  }
  return stats;
}

Mesh random_mesh(std::size_t vertices, std::mt19937_64& rng) {
  if (vertices < 6) throw ConfigError("random_mesh needs at least 6 vertices");
  auto u = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  Mesh base = make_octahedron(1.0);
  std::vector<Vec3> vs = base.vertices();
  std::vector<Face> fs = base.faces();
  while (vs.size() < vertices) {
    std::size_t f = rng() % fs.size();
    Face face = fs[f];
    double a = 0.2 + u(), b = 0.2 + u(), c = 0.2 + u(), s = a + b + c;
    Vec3 p = (a / s) * vs[face[0]] + (b / s) * vs[face[1]] + (c / s) * vs[face[2]];
    p = ((1.0 + 0.1 * (u() - 0.5)) / norm(p)) * p;
    const std::size_t n = vs.size();
    vs.push_back(p);
    fs[f] = {face[0], face[1], n};
    fs.push_back({face[1], face[2], n});
    fs.push_back({face[2], face[0], n});
  }
  return Mesh(std::move(vs), std::move(fs));
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string format(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s %-34s worst %.3e (tol %.1e, %zu instances", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.worst, r.tolerance, r.instances);
  std::string s = buf;
  if (r.skipped) s += ", " + std::to_string(r.skipped) + " kink points skipped";
  s += ")";
  if (!r.detail.empty()) s += " " + r.detail;
  return s;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

Tensor random_tensor(Shape s, std::mt19937_64& rng, bool grad = true) {
  std::vector<double> d(shape_numel(s));
  for (auto& v : d) v = uniform(rng, -1.0, 1.0);
  return Tensor(std::move(s), std::move(d), grad);
}

std::vector<double> random_weights(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = uniform(rng, -1.0, 1.0);
  return w;
}

/// Value away from zero by at least `gap`.
double away_from_zero(std::mt19937_64& rng, double gap) {
  double m = uniform(rng, gap, 1.0);
  return (rng() & 1) ? m : -m;
}

template <class Instance>
CheckResult grad_instances(const std::string& name, std::size_t instances, std::mt19937_64& rng, Instance&& make) {
  CheckResult r{name, 0.0, 1e-4, instances};
  std::size_t checked = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    GradCheckStats s = make(rng);
    r.worst = std::max(r.worst, s.max_relative_error);
    r.skipped += s.skipped;
    checked += s.checked;
  }
  r.passed = r.worst < r.tolerance && checked > 0;
  r.detail = std::to_string(checked) + " entries";
  return r;
}

std::shared_ptr<SamplingHierarchy> desk_hierarchy() {
  return std::make_shared<SamplingHierarchy>(build_hierarchy(make_icosphere(2, 20.0), 3, 4));
}

}  // namespace

std::vector<CheckResult> gradcheck_suite(std::uint64_t seed, std::size_t instances) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  GradCheckOptions opt;

  out.push_back(grad_instances("matmul", instances, rng, [&](std::mt19937_64& g) {
    Tensor a = random_tensor({pick(g, 1, 6), pick(g, 1, 5)}, g), b = random_tensor({a.dim(1), pick(g, 1, 4)}, g);
    auto w = random_weights(a.dim(0) * b.dim(1), g);
    return gradcheck([&](Tape& t) { return ops::weighted_sum(t, ops::matmul(t, a, b), w); }, {a, b}, g, opt);
  }));

  out.push_back(grad_instances("conv2d", instances, rng, [&](std::mt19937_64& g) {
    std::size_t k = pick(g, 1, 3);
    Tensor x = random_tensor({pick(g, 1, 2), pick(g, k, 7), pick(g, k, 7), pick(g, 1, 3)}, g);
    Tensor kern = random_tensor({x.dim(3), k, k, pick(g, 1, 3)}, g);
    std::size_t stride = pick(g, 1, 2);
    Padding pad = (g() & 1) ? Padding::same : Padding::valid;
    Tape probe(false);
    auto w = random_weights(ops::conv2d(probe, x, kern, stride, pad).size(), g);
    return gradcheck([&](Tape& t) { return ops::weighted_sum(t, ops::conv2d(t, x, kern, stride, pad), w); },
                     {x, kern}, g, opt);
  }));

  out.push_back(grad_instances("pool2d-average", instances, rng, [&](std::mt19937_64& g) {
    std::size_t k = pick(g, 2, 3);
    Tensor x = random_tensor({1, pick(g, k, 7), pick(g, k, 7), pick(g, 1, 3)}, g);
    bool general = g() & 1;
    auto run = [&, general, k](Tape& t) {
      return general ? ops::pool2d(t, x, k, 2, Padding::same, ops::PoolMode::average)
                     : ops::pool2d(t, x, k, ops::PoolMode::average);
    };
    Tape probe(false);
    auto w = random_weights(run(probe).size(), g);
    return gradcheck([&](Tape& t) { return ops::weighted_sum(t, run(t), w); }, {x}, g, opt);
  }));

  out.push_back(grad_instances("pool2d-max", instances, rng, [&](std::mt19937_64& g) {
    Tensor x = random_tensor({1, 6, 6, pick(g, 1, 2)}, g);
    Tape probe(false);
    auto w = random_weights(ops::pool2d(probe, x, 3, ops::PoolMode::max).size(), g);
    return gradcheck([&](Tape& t) { return ops::weighted_sum(t, ops::pool2d(t, x, 3, ops::PoolMode::max), w); },
                     {x}, g, opt);
  }));

  out.push_back(grad_instances("batch_norm", instances, rng, [&](std::mt19937_64& g) {
    Tensor x = random_tensor({1, 4, 4, 2}, g), gamma = random_tensor({2}, g), beta = random_tensor({2}, g);
    ops::BatchNormStats stats(2);
    auto mode = (g() % 3 == 0) ? ops::NormMode::infer : ops::NormMode::train;
    if (mode == ops::NormMode::infer) stats.var = {uniform(g, 0.5, 2.0), uniform(g, 0.5, 2.0)};
    auto w = random_weights(x.size(), g);
    return gradcheck(
        [&](Tape& t) { return ops::weighted_sum(t, ops::batch_norm(t, x, gamma, beta, stats, mode), w); },
        {x, gamma, beta}, g, opt);
  }));

  out.push_back(grad_instances("relu", instances, rng, [&](std::mt19937_64& g) {
    Tensor x = random_tensor({pick(g, 1, 4), pick(g, 1, 5)}, g);
    for (auto& v : x.mutable_data()) v = away_from_zero(g, 0.1);
    auto w = random_weights(x.size(), g);
    return gradcheck([&](Tape& t) { return ops::weighted_sum(t, ops::relu(t, x), w); }, {x}, g, opt);
  }));

  out.push_back(grad_instances("fully_connected", instances, rng, [&](std::mt19937_64& g) {
    Tensor x = random_tensor({pick(g, 1, 2), 2, 1, 5}, g);
    Tensor wt = random_tensor({10, pick(g, 1, 4)}, g), b = random_tensor({wt.dim(1)}, g);
    auto w = random_weights(x.dim(0) * wt.dim(1), g);
    return gradcheck([&](Tape& t) { return ops::weighted_sum(t, ops::fully_connected(t, x, wt, b), w); },
                     {x, wt, b}, g, opt);
  }));

  out.push_back(grad_instances("concat+reshape+scale_shift", instances, rng, [&](std::mt19937_64& g) {
    Tensor a = random_tensor({1, 2, 2, pick(g, 1, 3)}, g), b = random_tensor({1, 2, 2, pick(g, 1, 3)}, g);
    const std::size_t n = a.size() + b.size();
    auto offset = random_weights(n, g), w = random_weights(n, g);
    double scale = uniform(g, 0.5, 2.0);
    return gradcheck(
        [&](Tape& t) {
          const Tensor parts[2] = {a, b};
          Tensor c = ops::reshape(t, ops::concat_channels(t, parts), {4, n / 4});
          return ops::weighted_sum(t, ops::scale_shift(t, c, scale, offset), w);
        },
        {a, b}, g, opt);
  }));

  out.push_back(grad_instances("cheb_conv", instances, rng, [&](std::mt19937_64& g) {
    Mesh m = random_mesh(pick(g, 6, 20), g);
    auto bundle = build_laplacian(m);
    auto layer = ChebConvLayer::create(pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 4), g);
    for (auto& v : layer.bias.mutable_data()) v = uniform(g, -1.0, 1.0);
    Tensor v = random_tensor({m.vertex_count(), layer.in_channels}, g);
    auto w = random_weights(m.vertex_count() * layer.out_channels, g);
    return gradcheck([&](Tape& t) { return ops::weighted_sum(t, cheb_conv(t, layer, bundle, v), w); },
                     {layer.theta, layer.bias, v}, g, opt);
  }));

  out.push_back(grad_instances("upsample", instances, rng, [&](std::mt19937_64& g) {
    Mesh m = random_mesh(pick(g, 12, 40), g);
    auto h = build_hierarchy(m, 2, 1);
    Tensor f = random_tensor({h.levels[1].vertex_count(), pick(g, 1, 3)}, g);
    auto w = random_weights(m.vertex_count() * f.dim(1), g);
    return gradcheck([&](Tape& t) { return ops::weighted_sum(t, upsample(t, h.up[0], f), w); }, {f}, g, opt);
  }));

  out.push_back(grad_instances("l1_loss", instances, rng, [&](std::mt19937_64& g) {
    Tensor truth = random_tensor({pick(g, 1, 6), 3}, g, false);
    Tensor pred = truth.clone();
    pred.set_requires_grad(true);
    auto p = pred.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += away_from_zero(g, 0.1);
    return gradcheck([&](Tape& t) { return ops::l1_loss(t, pred, truth); }, {pred}, g, opt);
  }));

  // 32 x 32 would leave a 1 x 1 map whose batch statistics pin the output to beta.
  {
    EncoderConfig cfg = EncoderConfig::desk();
    std::mt19937_64 init(seed + 1);
    EncoderParams enc = EncoderParams::create(cfg, init);
    std::vector<NamedTensor> params;
    std::vector<NamedBuffer> buffers;
    enc.collect("", params, buffers);
    std::vector<Tensor> wrt;
    for (auto& p : params) wrt.push_back(p.tensor);
    Tensor image = tile_channels(random_tensor({1, cfg.input_height, cfg.input_width, 1}, rng, false));
    auto w = random_weights(cfg.output_features(), rng);
    GradCheckOptions o = opt;
    o.samples_per_tensor = 2;
    auto s = gradcheck([&](Tape& t) { return ops::weighted_sum(t, encode(t, enc, image, ops::NormMode::train), w); },
                       wrt, rng, o);
    CheckResult r{"encoder (desk)", s.max_relative_error, 1e-4, 1, s.skipped};
    r.passed = r.worst < r.tolerance && s.checked >= 10;
    r.detail = std::to_string(s.checked) + " entries";
    out.push_back(r);
  }

  {
    ModelConfig cfg;
    std::mt19937_64 init(seed + 2);
    ModelParams model = ModelParams::create(cfg, desk_hierarchy(), init);
    std::vector<Tensor> wrt;
    for (auto& p : model.parameters()) wrt.push_back(p.tensor);
    Tensor image = random_tensor({64, 64, 1}, rng, false);
    for (auto& v : image.mutable_data()) v = 0.5 * (v + 1.0);
    Tensor truth({model.hierarchy->levels[0].vertex_count(), 3}, model.hierarchy->levels[0].coordinates());
    GradCheckOptions o = opt;
    o.samples_per_tensor = 1;
    auto s = gradcheck(
        [&](Tape& t) { return ops::l1_loss(t, forward(t, model, image, ops::NormMode::train), truth); }, wrt, rng,
        o);
    CheckResult r{"end-to-end (desk model)", s.max_relative_error, 1e-4, 1, s.skipped};
    r.passed = r.worst < r.tolerance && s.checked >= 10;
    r.detail = std::to_string(s.checked) + " sampled parameters";
    out.push_back(r);
  }
  return out;
}

namespace {

CheckResult laplacian_check(std::mt19937_64& rng) {
  CheckResult r{"laplacian exactness", 0.0, 1e-9, 51};
  Mesh tri({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  auto l = build_laplacian(tri).laplacian.to_dense();
  const std::vector<double> expect{2, -1, -1, -1, 2, -1, -1, -1, 2};
  bool exact = l == expect;
  bool rows_zero = true;
  for (int i = 0; i < 50; ++i) {
    Mesh m = random_mesh(pick(rng, 6, 50), rng);
    auto b = build_laplacian(m);
    auto rp = b.laplacian.row_ptr();
    auto vals = b.laplacian.values();
    for (std::size_t row = 0; row < b.laplacian.rows(); ++row) {
      double s = 0.0;
      for (std::size_t e = rp[row]; e < rp[row + 1]; ++e) s += vals[e];
      rows_zero = rows_zero && s == 0.0;
    }
    std::vector<double> ones(m.vertex_count(), 1.0);
    for (double v : b.scaled.multiply(ones, 1)) r.worst = std::max(r.worst, std::abs(v + 1.0));
  }
  r.passed = exact && rows_zero && r.worst < r.tolerance;
  r.detail = std::string("triangle L ") + (exact ? "exact" : "WRONG") + ", row sums " +
             (rows_zero ? "exactly 0" : "NONZERO");
  return r;
}

CheckResult spectral_check(std::mt19937_64& rng) {
  CheckResult r{"cheb_conv vs eigenbasis filter", 0.0, 1e-8, 20};
  const std::size_t orders[] = {1, 2, 3, 5};
  for (std::size_t trial = 0; trial < r.instances; ++trial) {
    Mesh m = random_mesh(pick(rng, 6, 50), rng);
    auto bundle = build_laplacian(m);
    auto eig = eigendecompose(bundle.laplacian);
    const std::size_t k = orders[trial % 4], fin = pick(rng, 1, 3), fout = pick(rng, 1, 3), n = m.vertex_count();
    auto layer = ChebConvLayer::create(fin, fout, k, rng);
    for (auto& v : layer.bias.mutable_data()) v = uniform(rng, -1.0, 1.0);
    Tensor v = random_tensor({n, fin}, rng, false);
    Tape off(false);
    Tensor y = cheb_conv(off, layer, bundle, v);

    std::vector<double> expect(n * fout);
    for (std::size_t j = 0; j < fout; ++j)
      for (std::size_t vtx = 0; vtx < n; ++vtx) expect[vtx * fout + j] = layer.bias[j];
    for (std::size_t i = 0; i < fin; ++i) {
      std::vector<double> col(n);
      for (std::size_t vtx = 0; vtx < n; ++vtx) col[vtx] = v[vtx * fin + i];
      for (std::size_t j = 0; j < fout; ++j) {
        std::vector<double> theta(k);
        for (std::size_t q = 0; q < k; ++q) theta[q] = layer.theta[(i * fout + j) * k + q];
        auto f = spectral_filter_exact(bundle, eig, col, 1, theta);
        for (std::size_t vtx = 0; vtx < n; ++vtx) expect[vtx * fout + j] += f[vtx];
      }
    }
    for (std::size_t e = 0; e < expect.size(); ++e) r.worst = std::max(r.worst, std::abs(expect[e] - y[e]));
  }
  r.passed = r.worst < r.tolerance;
  return r;
}

CheckResult hierarchy_check(int subdivisions, std::size_t stride) {
  Mesh mesh = make_icosphere(subdivisions, 1.0);
  auto h = build_hierarchy(mesh, stride, 4);
  CheckResult r{"hierarchy icosphere-" + std::to_string(mesh.vertex_count()) + " S=" + std::to_string(stride), 0.0,
                1e-12, h.depth()};
  bool counts = h.level_counts() == hierarchy_counts(mesh.vertex_count(), stride, 4);
  bool weights_ok = true, round_trip = true, selection = true;
  for (std::size_t l = 0; l < h.depth(); ++l) {
    const auto& q = h.up[l];
    auto rp = q.row_ptr();
    auto vals = q.values();
    for (std::size_t row = 0; row < q.rows(); ++row) {
      double s = 0.0;
      for (std::size_t e = rp[row]; e < rp[row + 1]; ++e) {
        weights_ok = weights_ok && vals[e] >= 0.0 && vals[e] <= 1.0;
        s += vals[e];
      }
      const std::size_t nnz = rp[row + 1] - rp[row];
      weights_ok = weights_ok && nnz >= 1 && nnz <= 3;
      r.worst = std::max(r.worst, std::abs(s - 1.0));
    }
    auto fine = h.levels[l].coordinates();
    auto coarse = h.down[l].multiply(fine, 3);
    selection = selection && coarse == h.levels[l + 1].coordinates();
    auto back = q.multiply(coarse, 3);
    for (std::size_t c = 0; c < h.kept[l].size(); ++c)
      for (int d = 0; d < 3; ++d) round_trip = round_trip && back[h.kept[l][c] * 3 + d] == fine[h.kept[l][c] * 3 + d];
  }

  // Plant a fine vertex on a coarse triangle and rebuild that level's up-map.
  double planted = 0.0;
  for (std::size_t l = 0; l < h.depth(); ++l) {
    const Mesh& coarse = h.levels[l + 1];
    if (coarse.faces().empty()) continue;
    std::vector<Vec3> fine = h.levels[l].vertices();
    std::vector<bool> kept(fine.size(), false);
    for (auto i : h.kept[l]) kept[i] = true;
    auto victim = static_cast<std::size_t>(std::find(kept.begin(), kept.end(), false) - kept.begin());
    const Face& f = coarse.faces()[coarse.faces().size() / 2];
    const auto& cv = coarse.vertices();
    Vec3 target = 0.2 * cv[f[0]] + 0.3 * cv[f[1]] + 0.5 * cv[f[2]];
    fine[victim] = target;
    auto q = barycentric_upsampler(fine, h.kept[l], coarse);
    auto rec = q.multiply(coarse.coordinates(), 3);
    for (int d = 0; d < 3; ++d) planted = std::max(planted, std::abs(rec[victim * 3 + d] - target[d]));
  }
  r.worst = std::max(r.worst, planted);
  r.passed = counts && weights_ok && round_trip && selection && r.worst < r.tolerance;
  std::string cs;
  for (auto c : h.level_counts()) cs += (cs.empty() ? "" : ",") + std::to_string(c);
  r.detail = "counts " + cs + (counts ? "" : " (MISMATCH)") + (weights_ok ? "" : ", bad weights") +
             (round_trip ? "" : ", round trip broken") + (selection ? "" : ", selection broken") +
             ", planted vertex error " + std::to_string(planted);
  return r;
}

}  // namespace

std::vector<CheckResult> oracle_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  out.push_back(laplacian_check(rng));
  out.push_back(spectral_check(rng));
  out.push_back(hierarchy_check(2, 3));
  out.push_back(hierarchy_check(3, 4));
  return out;
}

}  // namespace inet::checks
