#include "soup/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "soup/kernels.hpp"

namespace soup {

std::size_t Segment::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

ParamLayout::ParamLayout(std::vector<Segment> segments) : segments_(std::move(segments)) {
  std::size_t expected = 0;
  for (const auto& s : segments_) {
    if (s.offset != expected) {
      throw std::invalid_argument("segment '" + s.name + "' is not packed contiguously");
    }
    expected += s.size();
  }
  total_ = expected;
}

ParamLayout ParamLayout::packed(
    const std::vector<std::pair<std::string, std::vector<std::size_t>>>& parts) {
  std::vector<Segment> segs;
  std::size_t offset = 0;
  for (const auto& [name, shape] : parts) {
    Segment s{name, offset, shape};
    offset += s.size();
    segs.push_back(std::move(s));
  }
  return ParamLayout(std::move(segs));
}

const Segment& ParamLayout::segment(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no parameter segment named '" + name + "'");
}

bool ParamLayout::operator==(const ParamLayout& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& a = segments_[i];
    const auto& b = other.segments_[i];
    if (a.name != b.name || a.offset != b.offset || a.shape != b.shape) return false;
  }
  return true;
}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout)
    : layout_(std::move(layout)), values_(layout_->total_size(), 0.0) {}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_->total_size()) {
    throw std::invalid_argument("parameter count does not match layout");
  }
}

ParamVector ParamVector::from_values(std::vector<double> values) {
  auto layout = std::make_shared<const ParamLayout>(
      ParamLayout::packed({{"values", {values.size()}}}));
  return ParamVector(std::move(layout), std::move(values));
}

std::span<double> ParamVector::segment(const std::string& name) {
  const auto& s = layout_->segment(name);
  return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> ParamVector::segment(const std::string& name) const {
  const auto& s = layout_->segment(name);
  return std::span<const double>(values_).subspan(s.offset, s.size());
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

double ParamVector::norm() const { return std::sqrt(kernels::sum_squares(values_)); }

void OptimConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("grad_clip_norm must be positive");
  if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be nonnegative");
  if (!(base_lr >= 0.0)) throw std::invalid_argument("base_lr must be nonnegative");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be nonnegative");
}

OptimizerState OptimizerState::zeros(std::size_t n) {
  return OptimizerState{0, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

double lr_at_step(std::int64_t step, const OptimConfig& cfg) {
  if (step < 0) throw std::invalid_argument("step must be nonnegative");
  if (cfg.warmup_steps <= 0 || step >= cfg.warmup_steps) return cfg.base_lr;
  return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

ParamVector clip_global_norm(const ParamVector& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("max_norm must be positive");
  if (!grads.all_finite()) throw NumericalError("non-finite gradient entry");
  ParamVector out = grads;
  const double norm = grads.norm();
  if (norm > max_norm) kernels::scale(max_norm / norm, out.values());
  return out;
}

void adamw_step(ParamVector& params, const ParamVector& grads, OptimizerState& state,
                const OptimConfig& cfg) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw std::invalid_argument("adamw_step: parameter, gradient and moment lengths differ");
  }
  const double lr = lr_at_step(state.step_count, cfg);
  const auto t = static_cast<double>(state.step_count + 1);
  kernels::AdamScalars s;
  s.lr = lr;
  s.weight_decay = cfg.weight_decay;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.epsilon = cfg.epsilon;
  s.bias_correction1 = 1.0 - std::pow(cfg.beta1, t);
  s.bias_correction2 = 1.0 - std::pow(cfg.beta2, t);
  kernels::active().adamw_update(params.values().data(), grads.values().data(),
                                 state.first_moment.data(), state.second_moment.data(), n, s);
  ++state.step_count;
}

ParamVector finite_diff_grad(const LossFn& loss, const ParamVector& params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  ParamVector probe = params;
  ParamVector grad = params.zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = loss(probe);
    probe[i] = orig - eps;
    const double down = loss(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale == 0.0) return 0.0;
  return std::abs(a - b) / scale;
}

}  // namespace soup
