#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <vector>

#include "slam2d/geometry.hpp"

namespace slam2d {

/// How a state slot is updated by a tangent-space increment.
enum class SlotKind {
  Vector,  // x + d
  RotVec,  // log(exp(x) * exp(d)), stays canonical
  Angle,   // wrap(x + d), 1-dim
};

/// Residual + Jacobian callback. `jacobians`, when non-null, holds one
/// (dim x tangent_dim) matrix per referenced slot, to be filled with the
/// derivative w.r.t. that slot's tangent increment at the given values.
using BlockEvaluator = std::function<void(
    const std::vector<Eigen::VectorXd>& states, Eigen::VectorXd& residual,
    std::vector<Eigen::MatrixXd>* jacobians)>;

struct ResidualBlock {
  std::vector<int> slots;
  int dimension = 0;
  // Square-root information (upper-triangular, positive diagonal). The
  // solver whitens residuals and Jacobians with it.
  Eigen::MatrixXd sqrt_info;
  bool robust = false;  // Huber on the whitened norm
  double huber_delta = 1.0;
  BlockEvaluator evaluate;
};

class Problem {
 public:
  int add_slot(SlotKind kind, const Eigen::VectorXd& value, bool fixed = false);
  void set_fixed(int slot, bool fixed);
  void add_block(ResidualBlock block);

  int num_slots() const { return static_cast<int>(values_.size()); }
  const Eigen::VectorXd& slot_value(int slot) const { return values_[slot]; }
  void set_slot_value(int slot, const Eigen::VectorXd& v) { values_[slot] = v; }
  SlotKind slot_kind(int slot) const { return kinds_[slot]; }
  bool slot_fixed(int slot) const { return fixed_[slot]; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }

 private:
  friend struct SolverImpl;
  std::vector<Eigen::VectorXd> values_;
  std::vector<SlotKind> kinds_;
  std::vector<bool> fixed_;
  std::vector<ResidualBlock> blocks_;
};

struct SolveOptions {
  int max_iters = 50;
  double tol_grad = 1e-8;
  double tol_step = 1e-12;
  double lm_init_lambda = 1e-6;
};

struct SolveResult {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iters = 0;  // accepted steps
  bool converged = false;
};

/// Levenberg-Marquardt with diagonal damping, lambda in [1e-9, 1e6] on a
/// x10 / /10 schedule. Accepted steps never increase the cost. Throws
/// SingularSystem if the damped normal equations stay unsolvable at the cap.
SolveResult solve(Problem& problem, const SolveOptions& opts = {});

/// Applies one tangent increment to a value under the slot's retraction rule.
Eigen::VectorXd retract(SlotKind kind, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& delta);

/// Max abs difference between the block's analytic Jacobian and a central
/// finite difference (step 1e-6 on the tangent space), over all entries.
double check_jacobian(const ResidualBlock& block,
                      const std::vector<Eigen::VectorXd>& states,
                      const std::vector<SlotKind>& kinds);

}  // namespace slam2d
