#include "hgcl/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "hgcl/errors.hpp"
#include "hgcl/gradcheck.hpp"
#include "hgcl/harness/backbone.hpp"
#include "hgcl/hhcl.hpp"
#include "hgcl/init.hpp"
#include "hgcl/ops.hpp"
#include "hgcl/saam.hpp"

namespace hgcl::verify {
namespace {

using Rng = std::mt19937_64;

constexpr double kGradTolerance = 1e-4;

// Runs `body`, turning any exception into a failed check that names it.
template <typename F>
CheckResult guarded(const std::string& suite, const std::string& name, double tol, F&& body) {
  CheckResult r{suite, name, false, 0.0, tol, ""};
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.measured = std::numeric_limits<double>::infinity();
    r.detail = std::string("exception: ") + e.what();
  }
  return r;
}

Tensor random_ball(Rng& rng, std::size_t d, double radius) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(d);
  double norm = 0.0;
  for (double& x : v) {
    x = n(rng);
    norm += x * x;
  }
  const double r = radius * u(rng) / std::sqrt(norm);
  for (double& x : v) x *= r;
  return Tensor::vector(std::move(v));
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double stddev = 1.0) {
  return normal_tensor({r, c}, stddev, rng);
}

Tensor positive_matrix(Rng& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Tensor t({r, c});
  for (double& v : t.data()) v = u(rng);
  return t;
}

Var weigh(Var out, const Tensor& w) { return ops::sum(ops::mul(out, out.tape->constant(w))); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------- SAAM fixture

struct SaamFixture {
  harness::BackboneShape backbone;
  saam::SaamShape shape;
  saam::SaamParams params;
  std::vector<Tensor> tokens;
  std::vector<std::vector<Tensor>> attention;

  saam::StageFeatures features(Tape& tape) const {
    saam::StageFeatures f;
    for (const auto& t : tokens) f.tokens.push_back(tape.constant(t));
    for (const auto& heads : attention) {
      std::vector<Var> hv;
      for (const auto& a : heads) hv.push_back(tape.constant(a));
      f.attention.push_back(std::move(hv));
    }
    return f;
  }
};

SaamFixture make_saam_fixture(Rng& rng, std::size_t grid) {
  SaamFixture fx;
  fx.backbone = harness::BackboneShape{grid, 8, {16, 32, 64}, {1, 2, 2}};
  const std::size_t final_side = grid >> 2;
  fx.shape = saam::SaamShape{{16, 32, 64}, final_side * final_side, 8, 16};
  fx.params = saam::init_saam(fx.shape, rng);
  // Move off the zero initialization so every parameter influences the output.
  fx.params.visit([&](Tensor& t) {
    std::normal_distribution<double> n(0.0, 0.1);
    for (double& v : t.data()) v += n(rng);
  });
  Tape tape;
  const auto bb = harness::init_backbone(fx.backbone, rng);
  const auto vars = harness::bind(tape, bb, false);
  const auto stages = harness::backbone_forward(
      fx.backbone, vars, tape.constant(random_matrix(rng, grid * grid, 8)));
  // Freshly initialized stages give nearly constant columns, which puts the
  // max pool within finite-difference reach of a tie; spread them out.
  for (const auto& t : stages.tokens) {
    Tensor v = t.value();
    const Tensor noise = random_matrix(rng, v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += noise[i];
    fx.tokens.push_back(std::move(v));
  }
  for (const auto& heads : stages.attention) {
    std::vector<Tensor> hv;
    for (const auto& a : heads) hv.push_back(a.value());
    fx.attention.push_back(std::move(hv));
  }
  return fx;
}

// Replace the k-th parameter (visit order) with `x`.
void substitute(saam::SaamVars& vars, std::size_t k, Var x) {
  std::size_t i = 0;
  vars.visit([&](Var& v) {
    if (i++ == k) v = x;
  });
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"lorentz", "saam", "hhcl", "gradients"};
  return names;
}

std::vector<CheckResult> run_suite(const std::string& name, const VerifyOptions& options) {
  if (name == "lorentz") return lorentz_suite(options);
  if (name == "saam") return saam_suite(options);
  if (name == "hhcl") return hhcl_suite(options);
  if (name == "gradients") return gradient_suite(options);
  if (name == "all") {
    std::vector<CheckResult> all;
    for (const auto& s : suite_names()) {
      auto part = run_suite(s, options);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw ConfigError("unknown verify suite '" + name + "' (expected lorentz, saam, hhcl, gradients or all)");
}

std::string format_result(const CheckResult& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "measured=%.3g  tol=%.3g", r.measured, r.tolerance);
  std::string line = std::string(r.passed ? "PASS " : "FAIL ") + r.suite + "/" + r.name + "  " + buf;
  if (!r.detail.empty()) line += "  (" + r.detail + ")";
  return line;
}

// ------------------------------------------------------------------- Lorentz

std::vector<CheckResult> lorentz_suite(const VerifyOptions& opt) {
  const std::string suite = "lorentz";
  const std::array<double, 4> curvatures{0.05, 0.1, 0.5, 1.0};
  constexpr std::size_t dim = 8;
  std::vector<CheckResult> out;

  struct Cloud {
    double k;
    std::vector<Tensor> pre;
    std::vector<lorentz::LorentzPoint> pts;
  };
  std::vector<Cloud> clouds;
  Rng rng(derive_seed(opt.seed, "verify/lorentz"));
  for (double k : curvatures) {
    Cloud c{k, {}, {}};
    for (std::size_t i = 0; i < opt.manifold_samples; ++i) {
      c.pre.push_back(random_ball(rng, dim, 10.0));
      c.pts.push_back(lorentz::exp_map_origin(c.pre.back().data(), k));
    }
    clouds.push_back(std::move(c));
  }
  auto dist = [&](const lorentz::LorentzPoint& a, const lorentz::LorentzPoint& b) {
    return lorentz::lorentz_distance(a, b, opt.clamp_floor);
  };

  out.push_back(guarded(suite, "hyperboloid-constraint", 1e-9, [&](CheckResult& r) {
    for (const auto& c : clouds)
      for (const auto& p : c.pts)
        r.measured = std::max(r.measured, std::abs(lorentz::lorentz_inner(p.coords(), p.coords()) + 1.0 / c.k));
    r.passed = r.measured <= r.tolerance;
    r.detail = std::to_string(clouds.size() * opt.manifold_samples) + " points, |z| <= 10";
  }));

  out.push_back(guarded(suite, "upper-sheet", 0.0, [&](CheckResult& r) {
    std::size_t bad = 0;
    for (const auto& c : clouds)
      for (const auto& p : c.pts) bad += p.time() > 0.0 ? 0 : 1;
    r.measured = static_cast<double>(bad);
    r.passed = bad == 0;
    r.detail = "points with non-positive time coordinate";
  }));

  out.push_back(guarded(suite, "self-distance-clamped", 0.0, [&](CheckResult& r) {
    for (const auto& c : clouds) {
      const double bound = std::acosh(lorentz::kDistanceClampFloor) / std::sqrt(c.k) + 1e-12;
      for (const auto& p : c.pts) {
        const double d = dist(p, p);
        if (!std::isfinite(d) || d < 0.0) throw NumericalError("d(x, x) is not a finite distance");
        r.measured = std::max(r.measured, std::max(0.0, d - bound));
      }
    }
    r.passed = r.measured <= r.tolerance;
    r.detail = "d(x, x) stays within the clamp floor";
  }));

  out.push_back(guarded(suite, "distance-symmetry", 0.0, [&](CheckResult& r) {
    for (const auto& c : clouds)
      for (std::size_t i = 0; i + 1 < c.pts.size(); i += 2)
        r.measured = std::max(r.measured, std::abs(dist(c.pts[i], c.pts[i + 1]) - dist(c.pts[i + 1], c.pts[i])));
    r.passed = r.measured == 0.0;
    r.detail = "exact equality";
  }));

  out.push_back(guarded(suite, "triangle-inequality", 1e-8, [&](CheckResult& r) {
    std::uniform_int_distribution<std::size_t> pick(0, opt.manifold_samples - 1);
    for (const auto& c : clouds) {
      for (std::size_t t = 0; t < opt.manifold_samples; ++t) {
        const auto& x = c.pts[pick(rng)];
        const auto& y = c.pts[pick(rng)];
        const auto& z = c.pts[pick(rng)];
        r.measured = std::max(r.measured, dist(x, z) - dist(x, y) - dist(y, z));
      }
    }
    r.passed = r.measured <= r.tolerance;
    r.detail = "max of d(x,z) - d(x,y) - d(y,z) over sampled triples";
  }));

  out.push_back(guarded(suite, "origin-distance", 1e-9, [&](CheckResult& r) {
    // d(o, exp0(z)) = asinh(sqrt(K) |z|) / sqrt(K) with o = exp0(0).
    for (const auto& c : clouds) {
      const auto origin = lorentz::exp_map_origin(std::vector<double>(dim, 0.0), c.k);
      for (std::size_t i = 0; i < c.pts.size(); ++i) {
        double norm = 0.0;
        for (double v : c.pre[i].data()) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 0.1) continue;
        const double expect = std::asinh(std::sqrt(c.k) * norm) / std::sqrt(c.k);
        r.measured = std::max(r.measured, std::abs(dist(origin, c.pts[i]) - expect) / std::max(1.0, expect));
      }
    }
    r.passed = r.measured <= r.tolerance;
    r.detail = "relative error against asinh closed form";
  }));

  out.push_back(guarded(suite, "tape-matches-scalar", 1e-9, [&](CheckResult& r) {
    for (const auto& c : clouds) {
      constexpr std::size_t n = 24;
      Tensor z({n, dim});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) z(i, j) = c.pre[i][j];
      Tape tape;
      const Var x = lorentz::exp_map_origin(tape.constant(z), c.k);
      const Tensor d = lorentz::pairwise_lorentz_distance(x, c.k, opt.clamp_floor).value();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double ref = dist(c.pts[i], c.pts[j]);
          r.measured = std::max(r.measured, std::abs(d(i, j) - ref) / std::max(1.0, ref));
        }
    }
    r.passed = r.measured <= r.tolerance;
    r.detail = "pairwise tape distances vs scalar distances";
  }));
  return out;
}

// ---------------------------------------------------------------------- SAAM

std::vector<CheckResult> saam_suite(const VerifyOptions& opt) {
  const std::string suite = "saam";
  Rng rng(derive_seed(opt.seed, "verify/saam"));
  const SaamFixture fx = make_saam_fixture(rng, 16);
  std::vector<CheckResult> out;

  out.push_back(guarded(suite, "backbone-attention-row-stochastic", 1e-6, [&](CheckResult& r) {
    for (const auto& heads : fx.attention)
      for (const auto& a : heads) r.measured = std::max(r.measured, saam::incidence_row_error(a));
    r.passed = r.measured <= r.tolerance;
  }));

  out.push_back(guarded(suite, "incidence-row-stochastic", 1e-12, [&](CheckResult& r) {
    Tape tape;
    const auto o = saam::saam_forward(fx.features(tape), saam::bind(tape, fx.params, false));
    r.measured = saam::incidence_row_error(o.incidence.value());
    double neg = 0.0;
    for (double v : o.incidence.value().data()) neg = std::min(neg, v);
    r.passed = r.measured <= r.tolerance && neg >= 0.0;
    r.detail = "N=" + std::to_string(o.incidence.value().rows()) +
               " M=" + std::to_string(o.incidence.value().cols());
  }));

  out.push_back(guarded(suite, "importance-sums-to-one", 1e-12, [&](CheckResult& r) {
    Tape tape;
    const auto f = fx.features(tape);
    for (const auto& heads : f.attention) {
      double s = 0.0;
      for (double v : saam::importance_vector(heads).value().data()) s += v;
      r.measured = std::max(r.measured, std::abs(s - 1.0));
    }
    r.passed = r.measured <= r.tolerance;
  }));

  out.push_back(guarded(suite, "five-step-composition", 1e-12, [&](CheckResult& r) {
    for (bool normalize : {false, true}) {
      Tape tape;
      const auto f = fx.features(tape);
      const auto p = saam::bind(tape, fx.params, false);
      const auto full = saam::saam_forward(f, p, {normalize});
      const Var ctx = saam::context_generate(f, p.context).features;
      const Var k = saam::prototype_generate(ctx, p);
      const Var x = f.tokens.back();
      const Var a = saam::build_incidence(x, k, p.w_query);
      const Var he = saam::hyperedge_aggregate(a, x, p.w_edge, normalize);
      const Var refined = saam::gated_residual(x, saam::node_update(a, he, p.w_vertex), p.gate);
      r.measured = std::max({r.measured, max_abs_diff(full.refined.value(), refined.value()),
                             max_abs_diff(full.hyperedges.value(), he.value())});
    }
    r.passed = r.measured <= r.tolerance;
    r.detail = "with and without hyperedge normalization";
  }));

  out.push_back(guarded(suite, "closed-gate-passthrough", 0.0, [&](CheckResult& r) {
    Tape tape;
    const auto f = fx.features(tape);
    auto p = saam::bind(tape, fx.params, false);
    p.gate = tape.constant(Tensor(fx.params.gate.shape(), -std::numeric_limits<double>::infinity()));
    const auto o = saam::saam_forward(f, p);
    r.measured = max_abs_diff(o.refined.value(), f.tokens.back().value());
    r.passed = r.measured == 0.0;
    r.detail = "sigmoid(-inf) gate leaves tokens bit-identical";
  }));

  out.push_back(guarded(suite, "zero-update-residual", 0.0, [&](CheckResult& r) {
    Tape tape;
    const auto f = fx.features(tape);
    auto p = saam::bind(tape, fx.params, false);
    p.w_vertex = tape.constant(Tensor(fx.params.w_vertex.shape()));
    const auto o = saam::saam_forward(f, p);
    r.measured = max_abs_diff(o.refined.value(), f.tokens.back().value());
    r.passed = r.measured == 0.0;
  }));

  out.push_back(guarded(suite, "normalized-aggregation-of-constant-tokens", 1e-12, [&](CheckResult& r) {
    Tape tape;
    const auto f = fx.features(tape);
    const auto p = saam::bind(tape, fx.params, false);
    const Tensor& x = fx.tokens.back();
    Tensor flat(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) flat(i, j) = x(0, j);
    const Var a = saam::saam_forward(f, p).incidence;
    const Tensor he = saam::hyperedge_aggregate(a, tape.constant(flat), p.w_edge, true).value();
    for (std::size_t m = 1; m < he.rows(); ++m)
      for (std::size_t j = 0; j < he.cols(); ++j)
        r.measured = std::max(r.measured, std::abs(he(m, j) - he(0, j)));
    r.passed = r.measured <= r.tolerance;
    r.detail = "every hyperedge equals the shared token";
  }));
  return out;
}

// ---------------------------------------------------------------------- HHCL

namespace {

double euclid(const Tensor& z, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < z.cols(); ++k) s += (z(i, k) - z(j, k)) * (z(i, k) - z(j, k));
  return std::sqrt(s);
}

double hyper(const Tensor& z, std::size_t i, std::size_t j, double k) {
  const auto a = lorentz::exp_map_origin(z.row(i), k);
  const auto b = lorentz::exp_map_origin(z.row(j), k);
  return lorentz::lorentz_distance(a, b);
}

// Direct enumeration of (anchor, positive, candidate) triples.
double contrastive_by_enumeration(const Tensor& d, const std::vector<int>& labels, double tau) {
  const std::size_t b = labels.size();
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < b; ++i) {
    double li = 0.0;
    std::size_t positives = 0;
    for (std::size_t p = 0; p < b; ++p) {
      if (p == i || labels[p] != labels[i]) continue;
      double denom = 0.0;
      for (std::size_t a = 0; a < b; ++a)
        if (a != i) denom += std::exp(-d(i, a) / tau);
      li += -std::log(std::exp(-d(i, p) / tau) / denom);
      ++positives;
    }
    if (positives == 0) continue;
    total += li / static_cast<double>(positives);
    ++anchors;
  }
  return anchors ? total / static_cast<double>(anchors) : 0.0;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  return ab / std::sqrt(aa * bb);
}

}  // namespace

std::vector<CheckResult> hhcl_suite(const VerifyOptions& opt) {
  const std::string suite = "hhcl";
  Rng rng(derive_seed(opt.seed, "verify/hhcl"));
  std::vector<CheckResult> out;

  out.push_back(guarded(suite, "contrastive-vs-enumeration", 1e-8, [&](CheckResult& r) {
    std::uniform_int_distribution<int> lab(0, 1);
    const double tau = 0.1, lambda = 1.0, k = 0.1;
    std::size_t cases = 0;
    for (std::size_t b = 2; b <= 4; ++b) {
      for (int inst = 0; inst < 100; ++inst) {
        const Tensor z = random_matrix(rng, b, 3);
        std::vector<int> labels(b);
        for (int& l : labels) l = lab(rng);
        for (auto kind : {hhcl::DistanceKind::Euclidean, hhcl::DistanceKind::Hyperbolic,
                          hhcl::DistanceKind::Hybrid}) {
          Tensor d({b, b});
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < b; ++j) {
              if (i == j) continue;
              const double e = euclid(z, i, j), h = hyper(z, i, j, k);
              d(i, j) = kind == hhcl::DistanceKind::Euclidean    ? e
                        : kind == hhcl::DistanceKind::Hyperbolic ? h
                                                                 : e + lambda * h;
            }
          Tape tape;
          const double got =
              hhcl::supervised_contrastive(tape.constant(z), labels, tau, kind, lambda, k).item();
          const double want = contrastive_by_enumeration(d, labels, tau);
          r.measured = std::max(r.measured, std::abs(got - want) / std::max(1.0, std::abs(want)));
          ++cases;
        }
      }
    }
    r.passed = r.measured <= r.tolerance;
    r.detail = std::to_string(cases) + " batches, B in 2..4";
  }));

  out.push_back(guarded(suite, "uniform-distances-give-log-b-minus-1", 1e-12, [&](CheckResult& r) {
    for (std::size_t b = 2; b <= 8; ++b) {
      Tape tape;
      const std::vector<int> labels(b, 3);
      const Var loss = hhcl::contrastive_from_distances(tape.constant(Tensor({b, b}, 0.7)), labels, 0.1);
      r.measured = std::max(r.measured, std::abs(loss.item() - std::log(static_cast<double>(b - 1))));
    }
    r.passed = r.measured <= r.tolerance;
  }));

  out.push_back(guarded(suite, "hierarchy-matches-exhaustive-pairing", 0.0, [&](CheckResult& r) {
    const std::array<std::array<std::size_t, 4>, 3> pairings{
        {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}}};
    const std::array<std::size_t, 3> ratios{4, 2, 1};
    std::size_t mismatches = 0;
    for (int inst = 0; inst < 200; ++inst) {
      const Tensor leaves = random_matrix(rng, 4, 5);
      double best = -std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t p = 0; p < pairings.size(); ++p) {
        const auto& q = pairings[p];
        const double s = cosine(leaves.row(q[0]), leaves.row(q[1])) + cosine(leaves.row(q[2]), leaves.row(q[3]));
        if (s > best) best = s, arg = p;
      }
      const auto tree = hhcl::build_hierarchy(leaves, ratios);
      const auto& pm = tree.parent_maps.front();
      const auto& q = pairings[arg];
      if (pm[q[0]] != pm[q[1]] || pm[q[2]] != pm[q[3]] || pm[q[0]] == pm[q[2]]) ++mismatches;
    }
    r.measured = static_cast<double>(mismatches);
    r.passed = mismatches == 0;
    r.detail = "200 random 4-leaf sets, ratios 4/2/1";
  }));

  out.push_back(guarded(suite, "parents-are-child-means", 1e-12, [&](CheckResult& r) {
    const std::array<std::size_t, 4> ratios{16, 8, 4, 1};
    const Tensor leaves = random_matrix(rng, 16, 6);
    const auto tree = hhcl::build_hierarchy(leaves, ratios);
    for (std::size_t l = 0; l + 1 < tree.depth(); ++l) {
      const Tensor& kids = tree.levels[l];
      const Tensor& par = tree.levels[l + 1];
      if (par.rows() != ratios[l + 1]) throw ValidationError("level size differs from fusion ratio");
      for (std::size_t p = 0; p < par.rows(); ++p) {
        std::vector<double> mean(kids.cols(), 0.0);
        double n = 0.0;
        for (std::size_t c = 0; c < kids.rows(); ++c) {
          if (tree.parent_maps[l][c] != p) continue;
          for (std::size_t j = 0; j < kids.cols(); ++j) mean[j] += kids(c, j);
          n += 1.0;
        }
        for (std::size_t j = 0; j < kids.cols(); ++j)
          r.measured = std::max(r.measured, std::abs(mean[j] / n - par(p, j)));
      }
    }
    r.passed = r.measured <= r.tolerance;
  }));

  out.push_back(guarded(suite, "partial-order-loss-bounds", 1e-12, [&](CheckResult& r) {
    const std::array<std::size_t, 3> ratios{8, 4, 1};
    const double k = 0.1;
    double min_random = std::numeric_limits<double>::infinity();
    for (int inst = 0; inst < 20; ++inst) {
      Tape tape;
      const Tensor leaves = random_matrix(rng, 8, 6);
      const Var lv = tape.constant(leaves);
      min_random = std::min(min_random, hhcl::popl(hhcl::hierarchy_vars(lv, hhcl::build_hierarchy(leaves, ratios)), k).item());
    }
    Tape tape;
    Tensor same({8, 6}, 0.3);
    const double collapsed =
        hhcl::popl(hhcl::hierarchy_vars(tape.constant(same), hhcl::build_hierarchy(same, ratios)), k).item();
    const double floor = std::acosh(lorentz::kDistanceClampFloor) / std::sqrt(k);
    r.measured = std::abs(collapsed - floor);
    r.passed = r.measured <= r.tolerance && min_random >= 0.0;
    r.detail = "identical leaves sit at the clamp floor; random trees are non-negative";
  }));

  out.push_back(guarded(suite, "hybrid-distance-decomposition", 1e-12, [&](CheckResult& r) {
    for (int inst = 0; inst < 50; ++inst) {
      const Tensor z = random_matrix(rng, 2, 4);
      Tape tape;
      const Var zi = tape.constant(Tensor({1, 4}, std::vector<double>(z.row(0).begin(), z.row(0).end())));
      const Var zj = tape.constant(Tensor({1, 4}, std::vector<double>(z.row(1).begin(), z.row(1).end())));
      const double dij = hhcl::hybrid_distance(zi, zj, 1.0, 0.1).item();
      const double dji = hhcl::hybrid_distance(zj, zi, 1.0, 0.1).item();
      const double want = euclid(z, 0, 1) + hyper(z, 0, 1, 0.1);
      r.measured = std::max({r.measured, std::abs(dij - want), std::abs(dij - dji)});
    }
    r.passed = r.measured <= r.tolerance;
  }));
  return out;
}

// ----------------------------------------------------------------- gradients

std::vector<CheckResult> gradient_suite(const VerifyOptions& opt) {
  const std::string suite = "gradients";
  Rng rng(derive_seed(opt.seed, "verify/gradients"));
  std::vector<CheckResult> out;
  auto check = [&](const std::string& name, const ScalarFn& f, const Tensor& x) {
    out.push_back(guarded(suite, name, kGradTolerance, [&](CheckResult& r) {
      const auto g = gradient_check_detailed(f, x, 1e-5);
      r.measured = g.max_rel_error;
      r.passed = r.measured < r.tolerance;
      r.detail = std::to_string(x.size()) + " coords";
      if (!r.passed) {
        r.detail += "; worst coord " + std::to_string(g.worst_index) + " analytic " +
                    std::to_string(g.analytic) + " numeric " + std::to_string(g.numeric);
      }
    }));
  };

  const Tensor a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 5), c = random_matrix(rng, 3, 4);
  const Tensor w34 = random_matrix(rng, 3, 4), w35 = random_matrix(rng, 3, 5), w43 = random_matrix(rng, 4, 3);
  const Tensor w33 = random_matrix(rng, 3, 3), w14 = random_matrix(rng, 1, 4), w31 = random_matrix(rng, 3, 1);
  const Tensor row = random_matrix(rng, 1, 4), col = random_matrix(rng, 3, 1);
  const Tensor pos = positive_matrix(rng, 3, 4);
  const Tensor w64 = random_matrix(rng, 6, 4), w38 = random_matrix(rng, 3, 8);
  const Tensor w24 = random_matrix(rng, 2, 4), w32 = random_matrix(rng, 3, 2);

  check("matmul/lhs", [&](Tape& t, Var x) { return weigh(ops::matmul(x, t.constant(b)), w35); }, a);
  check("matmul/rhs", [&](Tape& t, Var x) { return weigh(ops::matmul(t.constant(a), x), w35); }, b);
  check("transpose", [&](Tape&, Var x) { return weigh(ops::transpose(x), w43); }, a);
  check("add", [&](Tape& t, Var x) { return weigh(ops::add(x, t.constant(c)), w34); }, a);
  check("sub/lhs", [&](Tape& t, Var x) { return weigh(ops::sub(x, t.constant(c)), w34); }, a);
  check("sub/rhs", [&](Tape& t, Var x) { return weigh(ops::sub(t.constant(c), x), w34); }, a);
  check("mul", [&](Tape& t, Var x) { return weigh(ops::mul(x, t.constant(c)), w34); }, a);
  check("add_rowvec/matrix", [&](Tape& t, Var x) { return weigh(ops::add_rowvec(x, t.constant(row)), w34); }, a);
  check("add_rowvec/row", [&](Tape& t, Var x) { return weigh(ops::add_rowvec(t.constant(a), x), w34); }, row);
  check("mul_colvec/matrix", [&](Tape& t, Var x) { return weigh(ops::mul_colvec(x, t.constant(col)), w34); }, a);
  check("mul_colvec/col", [&](Tape& t, Var x) { return weigh(ops::mul_colvec(t.constant(a), x), w34); }, col);
  check("mul_scalar/tensor", [&](Tape& t, Var x) { return weigh(ops::mul_scalar(x, t.constant(Tensor::scalar(1.7))), w34); }, a);
  check("mul_scalar/scalar", [&](Tape& t, Var x) { return weigh(ops::mul_scalar(t.constant(a), x), w34); }, Tensor::scalar(0.6));
  check("scale", [&](Tape&, Var x) { return weigh(ops::scale(x, -2.5), w34); }, a);
  check("add_scalar", [&](Tape&, Var x) { return weigh(ops::add_scalar(x, 0.3), w34); }, a);
  check("neg", [&](Tape&, Var x) { return weigh(ops::neg(x), w34); }, a);
  check("exp", [&](Tape&, Var x) { return weigh(ops::exp(x), w34); }, a);
  check("log", [&](Tape&, Var x) { return weigh(ops::log(x), w34); }, pos);
  check("sqrt", [&](Tape&, Var x) { return weigh(ops::sqrt(x), w34); }, pos);
  check("square", [&](Tape&, Var x) { return weigh(ops::square(x), w34); }, a);
  check("relu", [&](Tape&, Var x) { return weigh(ops::relu(x), w34); }, a);
  check("sigmoid", [&](Tape&, Var x) { return weigh(ops::sigmoid(x), w34); }, a);
  check("arcosh", [&](Tape&, Var x) { return weigh(ops::arcosh(ops::add_scalar(x, 0.5)), w34); }, pos);
  check("clamp_min", [&](Tape&, Var x) { return weigh(ops::clamp_min(x, 0.25), w34); }, a);
  check("sum", [&](Tape&, Var x) { return ops::square(ops::sum(x)); }, a);
  check("mean", [&](Tape&, Var x) { return ops::square(ops::mean(x)); }, a);
  check("sum_axis/0", [&](Tape&, Var x) { return weigh(ops::sum_axis(x, 0), w14); }, a);
  check("sum_axis/1", [&](Tape&, Var x) { return weigh(ops::sum_axis(x, 1), w31); }, a);
  check("mean_axis/0", [&](Tape&, Var x) { return weigh(ops::mean_axis(x, 0), w14); }, a);
  check("mean_axis/1", [&](Tape&, Var x) { return weigh(ops::mean_axis(x, 1), w31); }, a);
  check("max_axis/0", [&](Tape&, Var x) { return weigh(ops::max_axis(x, 0), w14); }, a);
  check("max_axis/1", [&](Tape&, Var x) { return weigh(ops::max_axis(x, 1), w31); }, a);
  check("attention_weights/query", [&](Tape& t, Var x) { return weigh(ops::attention_weights(x, t.constant(c), 0.7), w33); }, a);
  check("attention_weights/key", [&](Tape& t, Var x) { return weigh(ops::attention_weights(t.constant(a), x, 0.7), w33); }, c);
  check("softmax_rows", [&](Tape&, Var x) { return weigh(ops::softmax_rows(x), w34); }, a);
  {
    Tensor mask({3, 4}, 1.0);
    mask(0, 1) = mask(1, 3) = mask(2, 0) = mask(2, 2) = 0.0;
    check("logsumexp_rows_masked", [&, mask](Tape&, Var x) { return weigh(ops::logsumexp_rows_masked(x, mask), w31); }, a);
  }
  check("normalize_sum", [&](Tape&, Var x) { return weigh(ops::normalize_sum(x), w34); }, pos);
  check("normalize_cols", [&](Tape&, Var x) { return weigh(ops::normalize_cols(x), w34); }, pos);
  check("concat_rows", [&](Tape& t, Var x) { return weigh(ops::concat_rows({x, t.constant(c)}), w64); }, a);
  check("concat_cols", [&](Tape& t, Var x) { return weigh(ops::concat_cols({t.constant(c), x}), w38); }, a);
  check("slice_rows", [&](Tape&, Var x) { return weigh(ops::slice_rows(x, 1, 3), w24); }, a);
  check("slice_cols", [&](Tape&, Var x) { return weigh(ops::slice_cols(x, 1, 3), w32); }, a);
  check("reshape", [&](Tape&, Var x) { return weigh(ops::reshape(x, {4, 3}), w43); }, a);
  {
    const Tensor grid = random_matrix(rng, 16, 3);
    const Tensor w43b = random_matrix(rng, 4, 3);
    check("avg_pool_2x2", [&](Tape&, Var x) { return weigh(ops::avg_pool_2x2(x, 4), w43b); }, grid);
  }
  check("l2_norm_rows", [&](Tape&, Var x) { return weigh(ops::l2_norm_rows(x), w31); }, a);
  check("pairwise_euclidean", [&](Tape&, Var x) { return weigh(ops::pairwise_euclidean(x), w33); }, a);
  {
    const std::vector<int> labels{2, 0, 3};
    check("cross_entropy", [labels](Tape&, Var x) { return ops::cross_entropy(x, labels); }, a);
  }

  // Lorentz operators, differentiated through their pre-images.
  const double k = 0.1;
  check("exp_map_origin", [&](Tape&, Var x) { return weigh(lorentz::exp_map_origin(x, k), w35); }, a);
  {
    const Tensor other = random_matrix(rng, 3, 5);
    check("lorentz_inner_rows", [&](Tape& t, Var x) { return weigh(lorentz::lorentz_inner_rows(x, t.constant(other)), w31); },
          random_matrix(rng, 3, 5));
  }
  check("lorentz_distance_rows",
        [&](Tape& t, Var x) {
          return weigh(lorentz::lorentz_distance_rows(lorentz::exp_map_origin(x, k),
                                                      lorentz::exp_map_origin(t.constant(c), k), k), w31);
        },
        a);
  check("pairwise_lorentz_distance",
        [&](Tape&, Var x) { return weigh(lorentz::pairwise_lorentz_distance(lorentz::exp_map_origin(x, k), k), w33); },
        a);

  // SAAM steps and the full module at toy dims.
  const SaamFixture fx = make_saam_fixture(rng, 16);
  const Tensor w_refined = random_matrix(rng, fx.shape.tokens, fx.shape.width());
  const Tensor w_edges = random_matrix(rng, fx.shape.hyperedges, fx.shape.width());
  auto saam_scalar = [&](const saam::SaamOutput& o) {
    return ops::add(weigh(o.refined, w_refined), weigh(o.hyperedges, w_edges));
  };
  {
    saam::SaamParams p = fx.params;
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : p.gate.data()) v = n(rng);
    std::size_t count = 0;
    p.visit([&](Tensor&) { ++count; });
    std::vector<Tensor> values;
    p.visit([&](Tensor& t) { values.push_back(t); });
    const char* names[] = {"avg_w", "avg_b", "max_w", "max_b", "attn_w", "attn_b"};
    for (std::size_t idx = 0; idx < count; ++idx) {
      std::string name;
      const std::size_t ctx = 6 * p.context.size();
      if (idx < ctx) {
        name = "context" + std::to_string(idx / 6 + 1) + "." + names[idx % 6];
      } else {
        static const char* rest[] = {"phi_w1", "phi_b1", "phi_w2", "phi_b2", "prototypes",
                                     "w_query", "w_edge", "w_vertex", "gate"};
        name = rest[idx - ctx];
      }
      check("saam_forward/" + name,
            [&, idx](Tape& t, Var x) {
              auto vars = saam::bind(t, p, false);
              substitute(vars, idx, x);
              return saam_scalar(saam::saam_forward(fx.features(t), vars));
            },
            values[idx]);
    }
    for (std::size_t s = 0; s < fx.tokens.size(); ++s) {
      check("saam_forward/stage" + std::to_string(s + 1) + "_tokens",
            [&, s](Tape& t, Var x) {
              auto f = fx.features(t);
              f.tokens[s] = x;
              return saam_scalar(saam::saam_forward(f, saam::bind(t, p, false)));
            },
            fx.tokens[s]);
    }
    // Attention inputs on a smaller grid keep the coordinate count modest.
    const SaamFixture small = make_saam_fixture(rng, 8);
    const Tensor ws_refined = random_matrix(rng, small.shape.tokens, small.shape.width());
    for (std::size_t s = 0; s < small.attention.size(); ++s) {
      check("saam_forward/stage" + std::to_string(s + 1) + "_attention",
            [&, s](Tape& t, Var x) {
              auto f = small.features(t);
              f.attention[s][0] = x;
              return weigh(saam::saam_forward(f, saam::bind(t, small.params, false)).refined, ws_refined);
            },
            small.attention[s][0]);
    }
    check("saam_forward/normalized_hyperedges",
          [&](Tape& t, Var x) {
            auto vars = saam::bind(t, p, false);
            vars.w_query = x;
            return saam_scalar(saam::saam_forward(fx.features(t), vars, {true}));
          },
          p.w_query);
  }

  // HHCL terms.
  check("hybrid_distance/zi",
        [&](Tape& t, Var x) { return hhcl::hybrid_distance(x, t.constant(row), 1.0, k); }, w14);
  check("hybrid_distance/zj",
        [&](Tape& t, Var x) { return hhcl::hybrid_distance(t.constant(row), x, 1.0, k); }, w14);
  const std::vector<int> labels{0, 1, 0, 2, 1, 0};
  const Tensor z = random_matrix(rng, 6, 5);
  for (auto [kind, name] : {std::pair{hhcl::DistanceKind::Hybrid, "hybrid"},
                            std::pair{hhcl::DistanceKind::Hyperbolic, "hyperbolic"},
                            std::pair{hhcl::DistanceKind::Euclidean, "euclidean"}}) {
    check(std::string("supervised_contrastive/") + name,
          [&, kind](Tape&, Var x) { return hhcl::supervised_contrastive(x, labels, 0.1, kind, 1.0, k); }, z);
  }
  const std::array<std::size_t, 3> ratios{8, 4, 1};
  const Tensor leaves = random_matrix(rng, 8, 6);
  const auto structure = hhcl::build_hierarchy(leaves, ratios);
  check("popl", [&](Tape&, Var x) { return hhcl::popl(hhcl::hierarchy_vars(x, structure), k); }, leaves);

  std::vector<Tensor> batch_leaves;
  std::vector<hhcl::HierarchyTree> structures;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    batch_leaves.push_back(random_matrix(rng, 8, 6));
    structures.push_back(hhcl::build_hierarchy(batch_leaves.back(), ratios));
  }
  auto batch_hhcl = [&](Tape& t, Var first, hhcl::LossMode mode, hhcl::ContrastLevels levels) {
    std::vector<hhcl::HierarchyVars> trees;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      trees.push_back(hhcl::hierarchy_vars(i == 0 ? first : t.constant(batch_leaves[i]), structures[i]));
    }
    return hhcl::hhcl_total(trees, labels, hhcl::LossWeights{}, mode, levels);
  };
  for (auto mode : {hhcl::LossMode::Hybrid, hhcl::LossMode::Split}) {
    for (auto levels : {hhcl::ContrastLevels::Root, hhcl::ContrastLevels::All}) {
      check("hhcl_total/" + hhcl::to_string(mode) + "/" + hhcl::to_string(levels),
            [&, mode, levels](Tape& t, Var x) { return batch_hhcl(t, x, mode, levels).total; },
            batch_leaves[0]);
    }
  }
  const Tensor logits = random_matrix(rng, 6, 4);
  const std::vector<int> cls{0, 1, 0, 2, 1, 3};
  check("total_loss/logits",
        [&](Tape& t, Var x) {
          const Var h = batch_hhcl(t, t.constant(batch_leaves[0]), hhcl::LossMode::Split,
                                   hhcl::ContrastLevels::Root).total;
          return hhcl::total_loss(x, cls, h, 1.0);
        },
        logits);
  check("total_loss/hierarchy",
        [&](Tape& t, Var x) {
          const Var h = batch_hhcl(t, x, hhcl::LossMode::Hybrid, hhcl::ContrastLevels::Root).total;
          return hhcl::total_loss(t.constant(logits), cls, h, 0.5);
        },
        batch_leaves[0]);
  return out;
}

}  // namespace hgcl::verify
