#include "slam2d/solver.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "slam2d/errors.hpp"

namespace slam2d {

namespace {
constexpr double kLambdaMin = 1e-9;
constexpr double kLambdaMax = 1e+6;
}  // namespace

int Problem::add_slot(SlotKind kind, const Eigen::VectorXd& value, bool fixed) {
  if ((kind == SlotKind::RotVec && value.size() != 3) ||
      (kind == SlotKind::Angle && value.size() != 1)) {
    throw InvalidArgument("Problem::add_slot: value size does not match kind");
  }
  values_.push_back(value);
  kinds_.push_back(kind);
  fixed_.push_back(fixed);
  return static_cast<int>(values_.size()) - 1;
}

void Problem::set_fixed(int slot, bool fixed) { fixed_[slot] = fixed; }

void Problem::add_block(ResidualBlock block) {
  for (int s : block.slots) {
    if (s < 0 || s >= num_slots()) {
      throw InvalidArgument("Problem::add_block: unknown slot id");
    }
  }
  if (block.sqrt_info.rows() != block.dimension ||
      block.sqrt_info.cols() != block.dimension) {
    throw InvalidArgument("Problem::add_block: sqrt_info shape mismatch");
  }
  blocks_.push_back(std::move(block));
}

Eigen::VectorXd retract(SlotKind kind, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& delta) {
  switch (kind) {
    case SlotKind::Vector:
      return x + delta;
    case SlotKind::RotVec: {
      const Mat3 R = exp_so3(RotVec(Vec3(x))) * exp_so3(RotVec(Vec3(delta)));
      return log_so3(R).axis_angle;
    }
    case SlotKind::Angle: {
      Eigen::VectorXd out(1);
      out[0] = wrap_angle(x[0] + delta[0]);
      return out;
    }
  }
  return x;
}

namespace {

struct EvalCache {
  Eigen::VectorXd residual;               // whitened, robust-scaled
  std::vector<Eigen::MatrixXd> jacobians;  // same scaling
  double cost = 0.0;                       // contribution to total
};

// Evaluates one block at the given slot values: whitening, then the Huber
// reweighting when enabled. `with_jacobians` controls Jacobian work.
void eval_block(const ResidualBlock& block,
                const std::vector<Eigen::VectorXd>& values,
                bool with_jacobians, EvalCache& out) {
  std::vector<Eigen::VectorXd> local;
  local.reserve(block.slots.size());
  for (int s : block.slots) local.push_back(values[s]);

  Eigen::VectorXd r(block.dimension);
  std::vector<Eigen::MatrixXd> jacs;
  if (with_jacobians) {
    jacs.resize(block.slots.size());
    for (size_t i = 0; i < block.slots.size(); ++i) {
      jacs[i].resize(block.dimension, local[i].size());
      jacs[i].setZero();
    }
  }
  block.evaluate(local, r, with_jacobians ? &jacs : nullptr);

  Eigen::VectorXd rw = block.sqrt_info * r;
  double scale = 1.0;
  const double sq = rw.squaredNorm();
  if (block.robust) {
    const double d = block.huber_delta;
    if (sq > d * d) {
      const double s = std::sqrt(sq);
      out.cost = 0.5 * (2.0 * d * s - d * d);
      scale = std::sqrt(d / s);
    } else {
      out.cost = 0.5 * sq;
    }
  } else {
    out.cost = 0.5 * sq;
  }
  out.residual = scale * rw;
  if (with_jacobians) {
    out.jacobians.resize(jacs.size());
    for (size_t i = 0; i < jacs.size(); ++i) {
      out.jacobians[i] = scale * (block.sqrt_info * jacs[i]);
    }
  }
}

double total_cost(const Problem& p, const std::vector<Eigen::VectorXd>& values) {
  double cost = 0.0;
  EvalCache cache;
  for (const auto& block : p.blocks()) {
    eval_block(block, values, false, cache);
    if (!std::isfinite(cache.cost)) return std::numeric_limits<double>::infinity();
    cost += cache.cost;
  }
  return cost;
}

}  // namespace

SolveResult solve(Problem& problem, const SolveOptions& opts) {
  const int n_slots = problem.num_slots();
  bool any_free = false;
  for (int i = 0; i < n_slots; ++i) any_free |= !problem.slot_fixed(i);
  if (!any_free) {
    throw InvalidArgument("solve: every slot is fixed");
  }

  // Tangent layout over free slots.
  std::vector<int> offset(n_slots, -1);
  int dim = 0;
  for (int i = 0; i < n_slots; ++i) {
    if (!problem.slot_fixed(i)) {
      offset[i] = dim;
      dim += static_cast<int>(problem.slot_value(i).size());
    }
  }

  std::vector<Eigen::VectorXd> values;
  values.reserve(n_slots);
  for (int i = 0; i < n_slots; ++i) values.push_back(problem.slot_value(i));

  SolveResult result;
  result.initial_cost = total_cost(problem, values);
  result.final_cost = result.initial_cost;

  double lambda = std::min(std::max(opts.lm_init_lambda, kLambdaMin), kLambdaMax);
  Eigen::MatrixXd H(dim, dim);
  Eigen::VectorXd g(dim);
  EvalCache cache;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    H.setZero();
    g.setZero();
    for (const auto& block : problem.blocks()) {
      eval_block(block, values, true, cache);
      for (size_t a = 0; a < block.slots.size(); ++a) {
        const int sa = block.slots[a];
        if (offset[sa] < 0) continue;
        const auto& Ja = cache.jacobians[a];
        g.segment(offset[sa], Ja.cols()) += Ja.transpose() * cache.residual;
        for (size_t b = 0; b < block.slots.size(); ++b) {
          const int sb = block.slots[b];
          if (offset[sb] < 0) continue;
          H.block(offset[sa], offset[sb], Ja.cols(),
                  cache.jacobians[b].cols()) +=
              Ja.transpose() * cache.jacobians[b];
        }
      }
    }

    if (g.lpNorm<Eigen::Infinity>() <= opts.tol_grad) {
      result.converged = true;
      break;
    }

    const Eigen::VectorXd diag = H.diagonal().cwiseMax(1e-12);
    bool accepted = false;
    while (true) {
      Eigen::MatrixXd Hd = H;
      Hd.diagonal() += lambda * diag;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(Hd);
      Eigen::VectorXd delta;
      bool solvable = ldlt.info() == Eigen::Success;
      if (solvable) {
        delta = ldlt.solve(-g);
        solvable = delta.allFinite() &&
                   (Hd * delta + g).norm() <= 1e-6 * std::max(1.0, g.norm());
      }
      if (!solvable) {
        if (lambda >= kLambdaMax) {
          const double cond =
              diag.maxCoeff() / std::max(diag.minCoeff(), 1e-300);
          throw SingularSystem(
              "solve: normal equations rank-deficient with damping at cap",
              cond, lambda);
        }
        lambda = std::min(lambda * 10.0, kLambdaMax);
        continue;
      }

      std::vector<Eigen::VectorXd> trial = values;
      for (int i = 0; i < n_slots; ++i) {
        if (offset[i] < 0) continue;
        trial[i] = retract(problem.slot_kind(i), values[i],
                           delta.segment(offset[i], values[i].size()));
      }
      const double trial_cost = total_cost(problem, trial);
      if (trial_cost < result.final_cost) {
        values = std::move(trial);
        result.final_cost = trial_cost;
        lambda = std::max(lambda / 10.0, kLambdaMin);
        accepted = true;
        ++result.iters;  // iterations = accepted steps
        if (delta.norm() <= opts.tol_step) {
          result.converged = true;
        }
        break;
      }
      if (lambda >= kLambdaMax) break;  // no further damping available
      lambda = std::min(lambda * 10.0, kLambdaMax);
    }

    if (!accepted || result.converged) {
      result.converged = result.converged || !accepted;
      break;
    }
  }

  for (int i = 0; i < n_slots; ++i) problem.set_slot_value(i, values[i]);
  return result;
}

double check_jacobian(const ResidualBlock& block,
                      const std::vector<Eigen::VectorXd>& states,
                      const std::vector<SlotKind>& kinds) {
  const double h = 1e-6;
  Eigen::VectorXd r0(block.dimension);
  std::vector<Eigen::MatrixXd> jacs(states.size());
  for (size_t i = 0; i < states.size(); ++i) {
    jacs[i].setZero(block.dimension, states[i].size());
  }
  block.evaluate(states, r0, &jacs);
  if (!r0.allFinite()) {
    throw InvalidArgument("check_jacobian: non-finite residual");
  }

  double max_err = 0.0;
  std::vector<Eigen::VectorXd> perturbed = states;
  for (size_t i = 0; i < states.size(); ++i) {
    const Eigen::MatrixXd Jw = block.sqrt_info * jacs[i];
    for (int k = 0; k < states[i].size(); ++k) {
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(states[i].size());
      delta[k] = h;
      perturbed[i] = retract(kinds[i], states[i], delta);
      Eigen::VectorXd r_plus(block.dimension);
      block.evaluate(perturbed, r_plus, nullptr);
      delta[k] = -h;
      perturbed[i] = retract(kinds[i], states[i], delta);
      Eigen::VectorXd r_minus(block.dimension);
      block.evaluate(perturbed, r_minus, nullptr);
      perturbed[i] = states[i];
      const Eigen::VectorXd fd =
          block.sqrt_info * ((r_plus - r_minus) / (2.0 * h));
      max_err = std::max(max_err, (Jw.col(k) - fd).cwiseAbs().maxCoeff());
    }
  }
  return max_err;
}

}  // namespace slam2d
