#include "fbmxcov/gclass.hpp"

#include "fbmxcov/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace fbmxcov {

namespace {

constexpr int kTableIntervals = 4096;

double raw_bump(double u) {
  if (!(std::abs(u) < 1.0)) {
    return 0.0;
  }
  return std::exp(-1.0 / ((1.0 - u) * (1.0 + u)));
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// phi_1-average of g, refining the bump rule until two orders agree.
double bump_average(const std::function<double(double)>& g, const MollifierFamily& family) {
  auto apply = [&](int order) {
    const auto& rule = family.bump_rule(order);
    double s = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      s += rule.weights[k] * g(rule.nodes[k]);
    }
    return s;
  };
  double prev = apply(48);
  for (int order : {96, 192}) {
    const double cur = apply(order);
    if (std::abs(cur - prev) <= 1e-12 * (1.0 + std::abs(cur))) {
      return cur;
    }
    prev = cur;
  }
  return prev;
}

}  // namespace

MollifierFamily::MollifierFamily() {
  const auto r = numerics::integrate_adaptive(raw_bump, -1.0, 1.0, 1e-17, 1e-15);
  norm_ = r.value;
  sup_ = std::exp(-1.0) / norm_;
  table_step_ = 2.0 / kTableIntervals;
  cdf_table_.assign(kTableIntervals + 1, 0.0);
  const auto& gl = numerics::gauss_legendre(16);
  double acc = 0.0;
  for (int i = 0; i < kTableIntervals; ++i) {
    const double a = -1.0 + i * table_step_;
    double s = 0.0;
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      s += gl.weights[k] * raw_bump(a + 0.5 * table_step_ * (gl.nodes[k] + 1.0));
    }
    acc += 0.5 * table_step_ * s / norm_;
    cdf_table_[i + 1] = acc;
  }
  for (double& v : cdf_table_) {
    v /= acc;
  }
}

const MollifierFamily& MollifierFamily::standard() {
  static const MollifierFamily family;
  return family;
}

double MollifierFamily::base(double u) const { return raw_bump(u) / norm_; }

double MollifierFamily::base_derivative(double u) const {
  if (!(std::abs(u) < 1.0)) {
    return 0.0;
  }
  const double d = (1.0 - u) * (1.0 + u);
  return base(u) * (-2.0 * u / (d * d));
}

double MollifierFamily::cdf(double u) const {
  if (u <= -1.0) {
    return 0.0;
  }
  if (u >= 1.0) {
    return 1.0;
  }
  const double pos = (u + 1.0) / table_step_;
  const int i = std::min(kTableIntervals - 1, static_cast<int>(pos));
  const double t = pos - i;
  const double x0 = -1.0 + i * table_step_;
  const double h = table_step_;
  const double y0 = cdf_table_[i];
  const double y1 = cdf_table_[i + 1];
  const double d0 = base(x0) * h;
  const double d1 = base(x0 + h) * h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * d1;
}

const numerics::QuadratureRule& MollifierFamily::bump_rule(int order) const {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<numerics::QuadratureRule>> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) {
    const auto& gl = numerics::gauss_legendre(order);
    auto rule = std::make_unique<numerics::QuadratureRule>();
    double total = 0.0;
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      const double w = gl.weights[k] * base(gl.nodes[k]);
      if (w > 0.0) {
        rule->nodes.push_back(gl.nodes[k]);
        rule->weights.push_back(w);
        total += w;
      }
    }
    for (double& w : rule->weights) {
      w /= total;
    }
    it = cache.emplace(order, std::move(rule)).first;
  }
  return *it->second;
}

GFunction::GFunction(std::optional<SmoothPart> smooth, std::vector<Jump> jumps, double base_value,
                     std::string label, std::vector<SmoothedJump> smoothed)
    : smooth_(std::move(smooth)),
      jumps_(std::move(jumps)),
      smoothed_(std::move(smoothed)),
      base_(base_value),
      label_(std::move(label)) {
  if (smooth_ && (!smooth_->value || !smooth_->derivative)) {
    throw std::invalid_argument("GFunction: smooth part needs value and derivative callables");
  }
  if (smooth_ && !(smooth_->derivative_bound >= 0.0)) {
    throw std::invalid_argument("GFunction: derivative bound must be non-negative");
  }
  if (!std::isfinite(base_)) {
    throw std::invalid_argument("GFunction: base value must be finite");
  }
  for (std::size_t i = 0; i < jumps_.size(); ++i) {
    if (!std::isfinite(jumps_[i].location) || !std::isfinite(jumps_[i].size)) {
      throw std::invalid_argument("GFunction: jump location and size must be finite");
    }
    if (i > 0 && !(jumps_[i].location > jumps_[i - 1].location)) {
      throw std::invalid_argument("GFunction: jump locations must be strictly increasing");
    }
  }
  for (const auto& r : smoothed_) {
    if (!std::isfinite(r.location) || !std::isfinite(r.size) || !(r.scale > 0.0)) {
      throw std::invalid_argument("GFunction: invalid smoothed jump");
    }
  }
}

GFunction GFunction::constant(double c) { return GFunction(std::nullopt, {}, c, "const:" + format_number(c)); }

GFunction GFunction::identity() {
  return smooth([](double x) { return x; }, [](double) { return 1.0; }, 1.0, "id");
}

GFunction GFunction::sign() { return GFunction(std::nullopt, {{0.0, 2.0}}, -1.0, "sgn"); }

GFunction GFunction::tanh() {
  return smooth([](double x) { return std::tanh(x); },
                [](double x) {
                  const double c = std::cosh(x);
                  return std::isfinite(c) ? 1.0 / (c * c) : 0.0;
                },
                1.0, "tanh");
}

GFunction GFunction::sine() {
  return smooth([](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }, 1.0,
                "sin");
}

GFunction GFunction::steps(std::vector<Jump> jumps, double base_value) {
  std::ostringstream label;
  label << "steps:";
  for (std::size_t i = 0; i < jumps.size(); ++i) {
    label << (i ? "," : "") << format_number(jumps[i].location) << ':' << format_number(jumps[i].size);
  }
  return GFunction(std::nullopt, std::move(jumps), base_value, label.str());
}

GFunction GFunction::smooth(Callable value, Callable derivative, double derivative_bound,
                            std::string label) {
  return GFunction(SmoothPart{std::move(value), std::move(derivative), derivative_bound}, {}, 0.0,
                   std::move(label));
}

double GFunction::smooth_value(double x) const { return smooth_ ? smooth_->value(x) : 0.0; }

double GFunction::smooth_derivative(double x) const {
  return smooth_ ? smooth_->derivative(x) : 0.0;
}

double GFunction::ac_value(double x) const {
  double v = smooth_value(x);
  const auto& family = MollifierFamily::standard();
  for (const auto& r : smoothed_) {
    v += r.size * family.cdf(r.scale * (x - r.location));
  }
  return v;
}

double GFunction::ac_derivative(double x) const {
  double v = smooth_derivative(x);
  const auto& family = MollifierFamily::standard();
  for (const auto& r : smoothed_) {
    v += r.size * family.scaled(r.scale, x - r.location);
  }
  return v;
}

double GFunction::operator()(double x) const {
  double v = ac_value(x) + base_;
  for (const auto& j : jumps_) {
    if (j.location > x) {
      break;
    }
    v += j.size;
  }
  return v;
}

double GFunction::derivative_bound() const {
  double b = smooth_derivative_bound();
  const double sup = MollifierFamily::standard().sup_base();
  for (const auto& r : smoothed_) {
    b += std::abs(r.size) * r.scale * sup;
  }
  return b;
}

DerivativeMeasure GFunction::derivative_measure() const {
  auto self = std::make_shared<const GFunction>(*this);
  return {[self](double x) { return self->ac_derivative(x); }, jumps_};
}

GFunction operator+(const GFunction& a, const GFunction& b) {
  std::optional<GFunction::SmoothPart> smooth;
  if (a.smooth_ && b.smooth_) {
    auto sa = *a.smooth_;
    auto sb = *b.smooth_;
    smooth = GFunction::SmoothPart{
        [sa, sb](double x) { return sa.value(x) + sb.value(x); },
        [sa, sb](double x) { return sa.derivative(x) + sb.derivative(x); },
        sa.derivative_bound + sb.derivative_bound};
  } else if (a.smooth_) {
    smooth = a.smooth_;
  } else if (b.smooth_) {
    smooth = b.smooth_;
  }
  std::vector<Jump> merged(a.jumps_.begin(), a.jumps_.end());
  merged.insert(merged.end(), b.jumps_.begin(), b.jumps_.end());
  std::sort(merged.begin(), merged.end(),
            [](const Jump& x, const Jump& y) { return x.location < y.location; });
  std::vector<Jump> jumps;
  for (const auto& j : merged) {
    if (!jumps.empty() && jumps.back().location == j.location) {
      jumps.back().size += j.size;
    } else {
      jumps.push_back(j);
    }
  }
  std::vector<SmoothedJump> smoothed(a.smoothed_.begin(), a.smoothed_.end());
  smoothed.insert(smoothed.end(), b.smoothed_.begin(), b.smoothed_.end());
  return GFunction(std::move(smooth), std::move(jumps), a.base_ + b.base_,
                   "sum:(" + a.label_ + ")+(" + b.label_ + ")", std::move(smoothed));
}

double evaluate(const GFunction& F, double x) { return F(x); }

double derivative_pairing(const GFunction& F, const std::function<double(double)>& h) {
  double total = 0.0;
  if (F.has_smooth_part()) {
    const auto r = numerics::integrate_real_line(
        [&](double x) {
          const double hx = h(x);
          return hx == 0.0 ? 0.0 : hx * F.smooth_derivative(x);
        },
        1e-13, 1e-11);
    if (!r.converged) {
      throw QuadratureError("derivative_pairing: integral did not converge", r.value, r.abs_error);
    }
    total += r.value;
  }
  const auto& family = MollifierFamily::standard();
  for (const auto& s : F.smoothed_jumps()) {
    total += s.size * bump_average([&](double u) { return h(s.location + u / s.scale); }, family);
  }
  for (const auto& j : F.jumps()) {
    total += j.size * h(j.location);
  }
  return total;
}

double linear_growth_bound(const GFunction& F) {
  double m = std::abs(F(0.0)) + F.smooth_derivative_bound() + std::abs(F.base_value());
  for (const auto& j : F.jumps()) {
    m += std::abs(j.size);
  }
  for (const auto& s : F.smoothed_jumps()) {
    m += std::abs(s.size);
  }
  return m;
}

GFunction mollify(const GFunction& F, int n, const MollifierFamily& family) {
  if (n < 1) {
    throw std::invalid_argument("mollify: n must be a positive integer");
  }
  std::optional<GFunction::SmoothPart> smooth;
  if (F.has_ac_part()) {
    auto src = std::make_shared<const GFunction>(F);
    const double scale = n;
    const MollifierFamily* fam = &family;
    smooth = GFunction::SmoothPart{
        [src, scale, fam](double x) {
          return bump_average([&](double u) { return src->ac_value(x - u / scale); }, *fam);
        },
        [src, scale, fam](double x) {
          return bump_average([&](double u) { return src->ac_derivative(x - u / scale); }, *fam);
        },
        F.derivative_bound()};
  }
  std::vector<SmoothedJump> smoothed;
  for (const auto& j : F.jumps()) {
    smoothed.push_back({j.location, j.size, static_cast<double>(n)});
  }
  return GFunction(std::move(smooth), {}, F.base_value(),
                   "mollify(" + F.label() + "," + std::to_string(n) + ")", std::move(smoothed));
}

PairingConvergenceReport derivative_pairing_converges(const GFunction& F,
                                                      const std::function<double(double)>& h,
                                                      const std::vector<int>& levels,
                                                      const MollifierFamily& family) {
  PairingConvergenceReport report;
  report.limit = derivative_pairing(F, h);
  report.levels = levels;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double v = derivative_pairing(mollify(F, levels[i], family), h);
    report.values.push_back(v);
    report.deviations.push_back(std::abs(v - report.limit));
    if (i > 0) {
      report.max_tail_deviation = std::max(report.max_tail_deviation, report.deviations.back());
    }
  }
  return report;
}

}  // namespace fbmxcov
