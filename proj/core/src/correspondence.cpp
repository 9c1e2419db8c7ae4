#include "dichotomy/correspondence.hpp"

#include <cmath>
#include <limits>

#include "dichotomy/error.hpp"
#include "dichotomy/linalg_splitting.hpp"
#include "dichotomy/parallel.hpp"
#include "json_util.hpp"

namespace dichotomy {
namespace {
double norm_or_zero(const Mat& m) { return m.size() ? norm2(m) : 0.0; }
}  // namespace

GeneratingCorrespondence::GeneratingCorrespondence(CorrDims dims, Joint joint, std::optional<LipTable> lip)
    : dims_(dims), joint_(std::move(joint)), lip_(lip) {}

GeneratingCorrespondence GeneratingCorrespondence::from_maps(CorrDims dims, Map f, Map g, std::optional<LipTable> lip) {
  return GeneratingCorrespondence(
      dims, [f = std::move(f), g = std::move(g)](const Vec& x1, const Vec& y2) { return std::pair{f(x1, y2), g(x1, y2)}; },
      lip);
}

std::pair<Vec, Vec> GeneratingCorrespondence::eval(const Vec& x1, const Vec& y2) const {
  if (x1.size() != dims_.x1 || y2.size() != dims_.y2)
    throw Error(ErrorKind::DimensionMismatch, "generating map argument dimensions");
  return joint_(x1, y2);
}

GraphPoint GeneratingCorrespondence::graph_point(const Vec& x1, const Vec& y2) const {
  auto [x2, y1] = eval(x1, y2);
  return GraphPoint{x1, std::move(y1), std::move(x2), y2};
}

GeneratingCorrespondence identity_correspondence(int dim_x, int dim_y) {
  return GeneratingCorrespondence({dim_x, dim_y, dim_x, dim_y}, [](const Vec& x1, const Vec& y2) { return std::pair{x1, y2}; },
                                  LipTable{0.0, 1.0, 1.0, 0.0});
}

GeneratingCorrespondence linear_correspondence(const Mat& fx, const Mat& fy, const Mat& gx, const Mat& gy) {
  const CorrDims d{static_cast<int>(fx.cols()), static_cast<int>(gx.rows()), static_cast<int>(fx.rows()),
                   static_cast<int>(fy.cols())};
  if (fy.rows() != fx.rows() || gy.rows() != gx.rows() || gy.cols() != fy.cols() || gx.cols() != fx.cols())
    throw Error(ErrorKind::DimensionMismatch, "linear correspondence blocks");
  LipTable lip{norm_or_zero(fy), norm_or_zero(fx), norm_or_zero(gy), norm_or_zero(gx)};
  return GeneratingCorrespondence(
      d, [fx, fy, gx, gy](const Vec& x1, const Vec& y2) { return std::pair<Vec, Vec>{fx * x1 + fy * y2, gx * x1 + gy * y2}; },
      lip);
}

GeneratingCorrespondence dual(const GeneratingCorrespondence& h) {
  const auto& d = h.dims();
  std::optional<LipTable> lip;
  if (h.lip_table()) {
    const auto& t = *h.lip_table();
    // F̃(a,b) = G(b,a): Lip in b ↔ G's first slot, Lip in a ↔ G's second slot
    lip = LipTable{t.g_in_x, t.g_in_y, t.f_in_x, t.f_in_y};
  }
  return GeneratingCorrespondence(
      {d.y2, d.x2, d.y1, d.x1},
      [h](const Vec& a, const Vec& b) {
        auto [f, g] = h.eval(b, a);
        return std::pair<Vec, Vec>{std::move(g), std::move(f)};
      },
      lip);
}

GeneratingCorrespondence invert(const GeneratingCorrespondence& h) { return dual(h); }

GeneratingCorrespondence compose(const GeneratingCorrespondence& h2, const GeneratingCorrespondence& h1, double tol,
                                 int max_iter) {
  const auto& d1 = h1.dims();
  const auto& d2 = h2.dims();
  if (d1.x2 != d2.x1 || d1.y2 != d2.y1) throw Error(ErrorKind::DimensionMismatch, "composition dimensions");
  return GeneratingCorrespondence({d1.x1, d1.y1, d2.x2, d2.y2}, [h1, h2, tol, max_iter](const Vec& x1, const Vec& y3) {
    Vec y2 = Vec::Zero(h1.dims().y2);
    Vec x2;
    for (int it = 0;; ++it) {
      x2 = h1.eval_f(x1, y2);
      Vec next = h2.eval_g(x2, y3);
      const double d = (next - y2).size() ? (next - y2).norm() : 0.0;
      y2 = std::move(next);
      if (d <= tol) break;
      if (it + 1 >= max_iter) throw Error(ErrorKind::MaxIterExceeded, "composition fixed point", d);
    }
    x2 = h1.eval_f(x1, y2);
    return std::pair<Vec, Vec>{h2.eval_f(x2, y3), h1.eval_g(x1, y2)};
  });
}

std::vector<ComposedSample> compose_on_samples(const GeneratingCorrespondence& h2, const GeneratingCorrespondence& h1,
                                               const std::vector<std::pair<Vec, Vec>>& samples, double tol,
                                               int max_iter) {
  const auto& d1 = h1.dims();
  const auto& d2 = h2.dims();
  if (d1.x2 != d2.x1 || d1.y2 != d2.y1) throw Error(ErrorKind::DimensionMismatch, "composition dimensions");
  std::vector<ComposedSample> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto& [x1, y3] = samples[i];
    Vec y2 = Vec::Zero(d1.y2);
    Vec x2;
    for (int it = 0;; ++it) {
      x2 = h1.eval_f(x1, y2);
      Vec next = h2.eval_g(x2, y3);
      const double d = (next - y2).size() ? (next - y2).norm() : 0.0;
      y2 = std::move(next);
      if (d <= tol) break;
      if (it + 1 >= max_iter) throw Error(ErrorKind::MaxIterExceeded, "composition fixed point", d);
    }
    ComposedSample s;
    s.x1 = x1;
    s.y3 = y3;
    auto [f1, g1] = h1.eval(x1, y2);
    s.x2 = f1;
    s.y1 = g1;
    s.y2 = y2;
    auto [f2, g2] = h2.eval(s.x2, y3);
    s.x3 = f2;
    const double r = (g2 - y2).size() ? (g2 - y2).norm() : 0.0;
    s.residual = r;
    out[i] = std::move(s);
  });
  return out;
}

LipTable estimate_lip_table(const GeneratingCorrespondence& h, const std::vector<std::pair<Vec, Vec>>& points,
                            double step) {
  LipTable t;
  auto safe = [](const Vec& v) { return v.size() ? v.norm() : 0.0; };
  for (const auto& [x, y] : points) {
    auto [f0, g0] = h.eval(x, y);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Vec xp = x;
      xp(i) += step;
      auto [f1, g1] = h.eval(xp, y);
      t.f_in_x = std::max(t.f_in_x, safe(f1 - f0) / step);
      t.g_in_x = std::max(t.g_in_x, safe(g1 - g0) / step);
    }
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      Vec yp = y;
      yp(i) += step;
      auto [f1, g1] = h.eval(x, yp);
      t.f_in_y = std::max(t.f_in_y, safe(f1 - f0) / step);
      t.g_in_y = std::max(t.g_in_y, safe(g1 - g0) / step);
    }
  }
  return t;
}

BallPairSampler::BallPairSampler(int dim_x, int dim_y, double radius_x, double radius_y, std::uint64_t seed,
                                 std::size_t limit)
    : dx_(dim_x), dy_(dim_y), rx_(radius_x), ry_(radius_y), seed_(seed), limit_(limit), engine_(seed) {}

Vec BallPairSampler::draw_ball(int dim, double radius) {
  Vec v(dim);
  if (dim == 0) return v;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double n = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v(i) = normal(engine_);
    n = v.norm();
  } while (n == 0.0);
  const double r = radius * std::pow(unif(engine_), 1.0 / dim);
  return v * (r / n);
}

std::optional<InputPair> BallPairSampler::next() {
  if (drawn_ >= limit_) return std::nullopt;
  ++drawn_;
  InputPair p;
  p.x1 = draw_ball(dx_, rx_);
  p.y2 = draw_ball(dy_, ry_);
  p.x1p = draw_ball(dx_, rx_);
  p.y2p = draw_ball(dy_, ry_);
  return p;
}

ConePairSampler::ConePairSampler(int dim_x, int dim_y, double radius_x, double radius_y, double cone,
                                 std::uint64_t seed, std::size_t limit)
    : ball_(dim_x, dim_y, 0.5 * radius_x, 0.5 * radius_y, seed),
      dx_(dim_x),
      dy_(dim_y),
      rx_(radius_x),
      ry_(radius_y),
      cone_(cone),
      limit_(limit),
      engine_(seed ^ 0x9e3779b97f4a7c15ULL) {}

Vec ConePairSampler::direction(int dim) {
  Vec v(dim);
  if (dim == 0) return v;
  std::normal_distribution<double> normal(0.0, 1.0);
  double n = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v(i) = normal(engine_);
    n = v.norm();
  } while (n == 0.0);
  return v / n;
}

std::optional<InputPair> ConePairSampler::next() {
  if (drawn_ >= limit_) return std::nullopt;
  const bool a_turn = drawn_ % 2 == 0;
  ++drawn_;
  InputPair p = *ball_.next();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(engine_);
  // the leading part spans the half ball, the trailing part sits inside the cone
  if (a_turn) {
    const double dy = 0.5 * ry_ * u;
    p.y2p = p.y2 + direction(dy_) * dy;
    p.x1p = p.x1 + direction(dx_) * std::min(0.5 * rx_, cone_ * unif(engine_) * dy);
  } else {
    const double dx = 0.5 * rx_ * u;
    p.x1p = p.x1 + direction(dx_) * dx;
    p.y2p = p.y2 + direction(dy_) * std::min(0.5 * ry_, cone_ * unif(engine_) * dx);
  }
  return p;
}

InputPair transport_to_dual(const InputPair& p) { return InputPair{p.y2, p.x1, p.y2p, p.x1p}; }

std::size_t ViolationReport::total_violations() const {
  std::size_t n = 0;
  for (const auto& c : conditions) n += c.count;
  return n;
}

std::string ViolationReport::to_json() const {
  using detail::json;
  json arr = json::array();
  for (const auto& c : conditions) {
    json j;
    j["condition"] = c.condition;
    j["count"] = c.count;
    j["premises"] = c.premises;
    j["worst_margin"] = detail::real_to_json(c.worst_margin);
    j["seed"] = seed;
    j["n_pairs"] = n_pairs;
    arr.push_back(j);
  }
  return arr.dump(2);
}

ViolationReport empirical_ab_check(const GeneratingCorrespondence& h, const ABConstants& c, const PairSource& sampler,
                                   std::size_t n_pairs, const CheckOptions& opts) {
  if (n_pairs == 0) throw Error(ErrorKind::ParamOutOfRange, "n_pairs must be at least 1");
  std::vector<InputPair> inputs;
  inputs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    auto p = sampler();
    if (!p) throw Error(ErrorKind::SamplerExhausted, "sampler ran out after " + std::to_string(i) + " pairs");
    inputs.push_back(std::move(*p));
  }
  std::vector<PairOutcome> outcomes(n_pairs);
  auto nrm = [](const Vec& v) { return v.size() ? v.norm() : 0.0; };
  parallel_for(
      n_pairs,
      [&](std::size_t i) {
        const auto& p = inputs[i];
        const GraphPoint a = h.graph_point(p.x1, p.y2);
        const GraphPoint b = h.graph_point(p.x1p, p.y2p);
        const double dx1 = nrm(a.x1 - b.x1), dy1 = nrm(a.y1 - b.y1);
        const double dx2 = nrm(a.x2 - b.x2), dy2 = nrm(a.y2 - b.y2);
        PairOutcome o;
        const bool pa = dx1 <= c.alpha * dy1;
        const bool pb = dy2 <= c.beta * dx2;
        o.premise = {pa, pa, pb, pb};
        o.margin = {dx2 - c.alpha_prime * dy2, dy1 - c.lambda_u * dy2, dy1 - c.beta_prime * dx1,
                    dx2 - c.lambda_s * dx1};
        outcomes[i] = o;
      },
      opts.threads);

  ViolationReport r;
  r.seed = opts.seed;
  r.n_pairs = n_pairs;
  r.margin_tol = opts.margin_tol;
  const char* names[4] = {"A1", "A2", "B1", "B2"};
  for (int k = 0; k < 4; ++k) {
    r.conditions[k].condition = names[k];
    r.conditions[k].worst_margin = -std::numeric_limits<double>::infinity();
  }
  for (const auto& o : outcomes)
    for (int k = 0; k < 4; ++k) {
      if (!o.premise[k]) continue;
      auto& cr = r.conditions[k];
      ++cr.premises;
      cr.worst_margin = std::max(cr.worst_margin, o.margin[k]);
      if (o.margin[k] > opts.margin_tol) ++cr.count;
    }
  if (opts.keep_pairs) r.pairs = std::move(outcomes);
  return r;
}

}  // namespace dichotomy
