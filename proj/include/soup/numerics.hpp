#pragma once

// Parameter storage, the AdamW optimizer with linear warmup, global-norm
// gradient clipping, and a central finite-difference gradient used as an
// independent check of every hand-derived gradient.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace soup {

/// Raised when a computation produces NaN/Inf or otherwise diverges.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<Segment> segments);

  /// Builds a layout from (name, shape) pairs packed back to back.
  static ParamLayout packed(
      const std::vector<std::pair<std::string, std::vector<std::size_t>>>& parts);

  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(const std::string& name) const;
  std::size_t total_size() const { return total_; }

  bool operator==(const ParamLayout& other) const;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

/// Flat vector of doubles with a named-segment layout. Used for policy
/// parameters, their gradients, and the snapshots taken for the reference
/// and behavior policies.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::shared_ptr<const ParamLayout> layout);
  ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values);

  /// Single-segment vector; handy for small optimizer tests.
  static ParamVector from_values(std::vector<double> values);

  ParamVector zeros_like() const { return ParamVector(layout_); }

  std::size_t size() const { return values_.size(); }
  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> segment(const std::string& name);
  std::span<const double> segment(const std::string& name) const;

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool all_finite() const;
  double norm() const;

  bool operator==(const ParamVector& other) const { return values_ == other.values_; }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> values_;
};

struct OptimConfig {
  double base_lr = 3e-3;
  std::int64_t warmup_steps = 10;
  double weight_decay = 0.1;
  double grad_clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct OptimizerState {
  std::int64_t step_count = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  static OptimizerState zeros(std::size_t n);
};

/// Linear warmup from 0 to base_lr over warmup_steps, then flat.
double lr_at_step(std::int64_t step, const OptimConfig& cfg);

/// Rescales grads so their L2 norm is at most max_norm. Throws
/// NumericalError on non-finite entries.
ParamVector clip_global_norm(const ParamVector& grads, double max_norm);

/// One AdamW step at lr_at_step(state.step_count). Updates params and state
/// in place; throws std::invalid_argument on a length mismatch.
void adamw_step(ParamVector& params, const ParamVector& grads,
                OptimizerState& state, const OptimConfig& cfg);

using LossFn = std::function<double(const ParamVector&)>;

/// Central differences, one coordinate at a time.
ParamVector finite_diff_grad(const LossFn& loss, const ParamVector& params, double eps);

/// |a - b| / max(|a|, |b|); 0 when both are 0.
double relative_error(double a, double b);

}  // namespace soup
