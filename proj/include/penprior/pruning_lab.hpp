#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "penprior/dataset.hpp"
#include "penprior/error.hpp"
#include "penprior/lambda_planner.hpp"
#include "penprior/mlp.hpp"

namespace penprior {

/// How the penalty enters each SGD step.
enum class PenaltyStep {
  /// Closed-form proximal map of lr * weight * r; reaches exact zeros.
  Proximal,
  /// Plain subgradient step.
  Subgradient,
};

inline std::string_view to_string(PenaltyStep s) { return s == PenaltyStep::Proximal ? "proximal" : "subgradient"; }

struct TrainConfig {
  std::vector<double> learning_rates{1e-2, 1e-3, 1e-4};
  int patience = 50;
  double lr_decay_factor = 10.0;
  int max_decays = 2;
  double prune_threshold = 1e-3;
  std::uint64_t seed = 0;
  int max_epochs = 2000;
  double momentum = 0.0;
  PenaltyStep penalty_step = PenaltyStep::Proximal;

  void validate() const {
    require(!learning_rates.empty(), ErrorKind::InvalidParameter, "need at least one learning rate");
    for (double lr : learning_rates)
      require(std::isfinite(lr) && lr >= 0.0, ErrorKind::InvalidParameter, "learning rates must be >= 0");
    require(patience >= 1, ErrorKind::InvalidParameter, "patience must be >= 1");
    require(lr_decay_factor > 1.0, ErrorKind::InvalidParameter, "lr_decay_factor must exceed 1");
    require(max_decays >= 0, ErrorKind::InvalidParameter, "max_decays must be >= 0");
    require(prune_threshold > 0.0, ErrorKind::InvalidParameter, "prune threshold must be > 0");
    require(max_epochs >= 1, ErrorKind::InvalidParameter, "max_epochs must be >= 1");
    require(momentum >= 0.0 && momentum < 1.0, ErrorKind::InvalidParameter, "momentum must lie in [0, 1)");
  }
};

struct EpochLog {
  int phase = 1;
  int epoch = 0;
  /// Mean cross-entropy over the epoch's batches.
  double train_loss = 0.0;
  /// Sum of the per-batch penalties, each evaluated before its step.
  double penalty = 0.0;
  double val_acc = 0.0;
  std::vector<int> alive;
  long alive_weights = 0;
  double learning_rate = 0.0;
};

struct PruneReport {
  std::vector<EpochLog> phase_log;
  double final_test_acc = 0.0;
  double final_val_acc = 0.0;
  long final_param_count = 0;
  std::vector<int> final_alive;
  int hidden_total = 0;
  int phase1_epochs = 0;
  int phase2_epochs = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  LambdaPlan plan_used;

  double hidden_pruned_fraction() const {
    int alive = 0;
    for (int a : final_alive) alive += a;
    return hidden_total > 0 ? 1.0 - static_cast<double>(alive) / hidden_total : 0.0;
  }
};

/// Layer shapes of `model` as the planner sees them, with n training samples and batch B.
inline ArchitectureSpec architecture_of(const MLPModel& model, long n, long B) {
  ArchitectureSpec a;
  a.n = n;
  a.B = B;
  for (std::size_t l = 0; l < model.layers.size(); ++l)
    a.layers.push_back({static_cast<int>(l + 1), model.layers[l].n_out(), model.layers[l].n_in()});
  return a;
}

inline MLPModel make_model(const ArchitectureSpec& arch, Activation act, std::uint64_t seed) {
  arch.validate();
  std::vector<int> hidden;
  for (std::size_t l = 0; l + 1 < arch.layers.size(); ++l) {
    require(arch.layers[l + 1].P_l == arch.layers[l].n_l, ErrorKind::ShapeMismatch,
            "layer " + std::to_string(l + 2) + " P_l differs from the previous n_l");
    hidden.push_back(arch.layers[l].n_l);
  }
  return MLPModel::make(arch.layers.front().P_l, hidden, arch.layers.back().n_l, act, seed);
}

struct PenaltyEval {
  double value = 0.0;
  std::vector<double> per_layer;
  std::vector<Eigen::MatrixXd> grad;
};

namespace detail {

inline double group_coefficient(const LayerFactor& f, PlanPenalty kind) {
  return kind == PlanPenalty::SparseGroupLasso ? f.group_component.value_or(0.0) : f.lambda_l;
}

inline double l1_coefficient(const LayerFactor& f, PlanPenalty kind) {
  return kind == PlanPenalty::SparseGroupLasso ? f.l1_component.value_or(0.0) : f.lambda_l;
}

inline void check_plan_fits(const MLPModel& model, const LambdaPlan& plan) {
  require(plan.per_layer.size() == model.layers.size(), ErrorKind::ShapeMismatch,
          "plan has " + std::to_string(plan.per_layer.size()) + " layers, model has " +
              std::to_string(model.layers.size()));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& s = plan.per_layer[l].shape;
    require(s.n_l == model.layers[l].n_out() && s.P_l == model.layers[l].n_in(), ErrorKind::ShapeMismatch,
            "plan layer " + std::to_string(l + 1) + " shape differs from the model");
  }
}

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// weight * sum_l lambda_l r(W_l) and its subgradient; biases are not penalized.
/// `weight` is global * b / n for a batch of b samples. Norm subgradients are 0
/// at the origin.
inline PenaltyEval penalty_value_and_subgradient(const MLPModel& model, const LambdaPlan& plan, double weight) {
  model.validate();
  detail::check_plan_fits(model, plan);
  PenaltyEval out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Eigen::MatrixXd& W = model.layers[l].W;
    const auto& f = plan.per_layer[l];
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(W.rows(), W.cols());
    double r = 0.0;
    switch (plan.penalty_kind) {
      case PlanPenalty::L2:
        r = f.lambda_l * W.squaredNorm();
        g = 2.0 * f.lambda_l * W;
        break;
      case PlanPenalty::L1:
        r = f.lambda_l * W.cwiseAbs().sum();
        g = f.lambda_l * W.unaryExpr(&detail::sign0);
        break;
      case PlanPenalty::GroupLasso:
      case PlanPenalty::SparseGroupLasso: {
        const double cg = detail::group_coefficient(f, plan.penalty_kind);
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
          const double nrm = W.row(i).norm();
          r += cg * nrm;
          if (nrm > 0.0) g.row(i) = cg * W.row(i) / nrm;
        }
        if (plan.penalty_kind == PlanPenalty::SparseGroupLasso) {
          const double c1 = detail::l1_coefficient(f, plan.penalty_kind);
          r += c1 * W.cwiseAbs().sum();
          g += c1 * W.unaryExpr(&detail::sign0);
        }
        break;
      }
      case PlanPenalty::ReversedGroupLasso:
        for (Eigen::Index j = 0; j < W.cols(); ++j) {
          const double nrm = W.col(j).norm();
          r += f.lambda_l * nrm;
          if (nrm > 0.0) g.col(j) = f.lambda_l * W.col(j) / nrm;
        }
        break;
    }
    out.per_layer.push_back(weight * r);
    out.value += weight * r;
    out.grad.push_back(weight * g);
  }
  return out;
}

/// Proximal map of step * lambda_l r(.) applied to every layer in place.
inline void apply_penalty_prox(MLPModel& model, const LambdaPlan& plan, double step) {
  detail::check_plan_fits(model, plan);
  auto shrink = [](auto&& v, double t) {
    const double nrm = v.norm();
    if (nrm <= t) v.setZero();
    else v *= 1.0 - t / nrm;
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Eigen::MatrixXd& W = model.layers[l].W;
    const auto& f = plan.per_layer[l];
    switch (plan.penalty_kind) {
      case PlanPenalty::L2:
        W /= 1.0 + 2.0 * step * f.lambda_l;
        break;
      case PlanPenalty::L1:
      case PlanPenalty::GroupLasso:
      case PlanPenalty::SparseGroupLasso: {
        if (plan.penalty_kind != PlanPenalty::GroupLasso) {
          const double t = step * detail::l1_coefficient(f, plan.penalty_kind);
          W = W.unaryExpr([t](double w) { return detail::sign0(w) * std::max(std::abs(w) - t, 0.0); });
        }
        if (plan.penalty_kind != PlanPenalty::L1) {
          const double t = step * detail::group_coefficient(f, plan.penalty_kind);
          for (Eigen::Index i = 0; i < W.rows(); ++i) shrink(W.row(i), t);
        }
        break;
      }
      case PlanPenalty::ReversedGroupLasso:
        for (Eigen::Index j = 0; j < W.cols(); ++j) shrink(W.col(j), step * f.lambda_l);
        break;
    }
  }
}

/// Prunes hidden neurons whose norm is <= threshold: the incoming row for L2, L1
/// and (sparse) group-Lasso; the outgoing column in the next layer for the
/// reversed group-Lasso. Returns the number of newly pruned neurons.
inline int prune_step(MLPModel& model, PlanPenalty kind, double threshold) {
  require(threshold > 0.0, ErrorKind::InvalidParameter, "threshold must be > 0");
  int pruned = 0;
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < model.layers[l].n_out(); ++i) {
      if (!model.layers[l].alive[static_cast<std::size_t>(i)]) continue;
      const double nrm = kind == PlanPenalty::ReversedGroupLasso ? model.layers[l + 1].W.col(i).norm()
                                                                 : model.layers[l].W.row(i).norm();
      if (nrm <= threshold) {
        model.prune_neuron(l, i);
        ++pruned;
      }
    }
  }
  return pruned;
}

namespace detail {

struct SplitData {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
};

inline SplitData gather(const Dataset& d, const std::vector<std::size_t>& idx) {
  SplitData s;
  s.inputs.resize(d.n_features(), static_cast<Eigen::Index>(idx.size()));
  s.labels.reserve(idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    s.inputs.col(static_cast<Eigen::Index>(c)) = d.features.row(static_cast<Eigen::Index>(idx[c])).transpose();
    s.labels.push_back(d.labels[idx[c]]);
  }
  return s;
}

/// One SGD pass with an optional penalty. Steps use the batch-mean loss, so the
/// penalty enters each step with coefficient global (equivalently, the batch
/// objective (1/n) sum_batch loss + global (b/n) penalty rescaled by n/b).
struct EpochRunner {
  const SplitData& train;
  const LambdaPlan& plan;
  const TrainConfig& cfg;
  std::mt19937_64& rng;
  std::vector<Eigen::MatrixXd> vW;
  std::vector<Eigen::VectorXd> vb;

  std::pair<double, double> run(MLPModel& model, double lr, bool penalized) {
    const auto n = static_cast<std::size_t>(train.inputs.cols());
    const auto B = static_cast<std::size_t>(std::max<long>(1, plan.B));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    if (vW.empty())
      for (const auto& L : model.layers) {
        vW.push_back(Eigen::MatrixXd::Zero(L.W.rows(), L.W.cols()));
        vb.push_back(Eigen::VectorXd::Zero(L.b.size()));
      }
    double loss_sum = 0.0, penalty_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += B) {
      const std::size_t b = std::min(B, n - start);
      Eigen::MatrixXd x(train.inputs.rows(), static_cast<Eigen::Index>(b));
      std::vector<int> y(b);
      for (std::size_t c = 0; c < b; ++c) {
        x.col(static_cast<Eigen::Index>(c)) = train.inputs.col(static_cast<Eigen::Index>(order[start + c]));
        y[c] = train.labels[order[start + c]];
      }
      auto fb = forward_backward(model, x, y);
      require(std::isfinite(fb.loss), ErrorKind::Divergence,
              "non-finite training loss at batch " + std::to_string(batches) + " (lr = " + std::to_string(lr) + ")");
      loss_sum += fb.loss;
      ++batches;
      const bool subgradient = penalized && cfg.penalty_step == PenaltyStep::Subgradient;
      if (penalized) {
        const auto pe = penalty_value_and_subgradient(model, plan, plan.batch_weight(static_cast<long>(b)));
        penalty_sum += pe.value;
        if (subgradient) {
          const auto sg = penalty_value_and_subgradient(model, plan, plan.global_lambda);
          for (std::size_t l = 0; l < model.layers.size(); ++l) fb.grads.dW[l] += sg.grad[l];
        }
      }
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        vW[l] = cfg.momentum * vW[l] + fb.grads.dW[l];
        vb[l] = cfg.momentum * vb[l] + fb.grads.db[l];
        model.layers[l].W -= lr * vW[l];
        model.layers[l].b -= lr * vb[l];
      }
      if (penalized && !subgradient) apply_penalty_prox(model, plan, lr * plan.global_lambda);
      model.apply_masks();
      for (const auto& L : model.layers)
        require(L.W.allFinite() && L.b.allFinite(), ErrorKind::Divergence,
                "non-finite weights after batch " + std::to_string(batches) + " (lr = " + std::to_string(lr) + ")");
    }
    return {loss_sum / static_cast<double>(batches), penalty_sum};
  }
};

}  // namespace detail

/// Phase 1 trains with the plan's penalty and prunes after every epoch until
/// neither the alive neuron count nor the best validation accuracy has improved
/// for `patience` epochs (one shared window). Phase 2 drops the penalty, keeps
/// the masks, and divides the learning rate by `lr_decay_factor` at each
/// stagnation; the stagnation after `max_decays` decays ends training.
/// `max_epochs` caps both phases together.
inline PruneReport train_two_phase(MLPModel& model, const Dataset& dataset, const LambdaPlan& plan,
                                   const TrainConfig& cfg, double learning_rate) {
  cfg.validate();
  dataset.validate();
  model.validate();
  detail::check_plan_fits(model, plan);
  require(model.n_inputs() == dataset.n_features(), ErrorKind::ShapeMismatch,
          "model input size differs from the feature count");
  require(model.layers.back().n_out() >= dataset.n_classes, ErrorKind::ShapeMismatch,
          "model has fewer outputs than classes");
  require(!dataset.train.empty(), ErrorKind::InvalidParameter, "training split is empty");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::InvalidParameter,
          "learning rate must be >= 0");

  const auto train = detail::gather(dataset, dataset.train);
  const auto val = detail::gather(dataset, dataset.validation);
  const auto test = detail::gather(dataset, dataset.test);
  std::mt19937_64 rng(cfg.seed);
  detail::EpochRunner runner{train, plan, cfg, rng, {}, {}};

  PruneReport rep;
  rep.plan_used = plan;
  rep.seed = cfg.seed;
  rep.learning_rate = learning_rate;
  rep.hidden_total = model.hidden_neurons();

  const bool penalized = plan.global_lambda > 0.0;
  auto total_alive = [&] {
    int s = 0;
    for (int a : model.alive_counts()) s += a;
    return s;
  };
  auto log_epoch = [&](int phase, int epoch, std::pair<double, double> lp, double va, double lr) {
    rep.phase_log.push_back({phase, epoch, lp.first, lp.second, va, model.alive_counts(),
                             model.alive_weight_count(), lr});
  };

  int epoch = 0;
  double best_val = -1.0;
  int best_alive = total_alive();
  int stale = 0;
  while (epoch < cfg.max_epochs) {
    ++epoch;
    const auto lp = runner.run(model, learning_rate, penalized);
    prune_step(model, plan.penalty_kind, cfg.prune_threshold);
    const double va = accuracy(model, val.inputs, val.labels);
    log_epoch(1, epoch, lp, va, learning_rate);
    bool improved = false;
    if (va > best_val) {
      best_val = va;
      improved = true;
    }
    if (total_alive() < best_alive) {
      best_alive = total_alive();
      improved = true;
    }
    stale = improved ? 0 : stale + 1;
    if (stale >= cfg.patience) break;
  }
  rep.phase1_epochs = epoch;

  double lr = learning_rate;
  int decays = 0;
  best_val = -1.0;
  stale = 0;
  while (epoch < cfg.max_epochs) {
    ++epoch;
    const auto lp = runner.run(model, lr, false);
    const double va = accuracy(model, val.inputs, val.labels);
    log_epoch(2, epoch, lp, va, lr);
    if (va > best_val) {
      best_val = va;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      if (decays == cfg.max_decays) break;
      lr /= cfg.lr_decay_factor;
      ++decays;
      stale = 0;
    }
  }
  rep.phase2_epochs = epoch - rep.phase1_epochs;

  rep.final_val_acc = accuracy(model, val.inputs, val.labels);
  rep.final_test_acc = accuracy(model, test.inputs, test.labels);
  rep.final_param_count = model.alive_weight_count();
  rep.final_alive = model.alive_counts();
  return rep;
}

inline PruneReport train_two_phase(MLPModel& model, const Dataset& dataset, const LambdaPlan& plan,
                                   const TrainConfig& cfg) {
  cfg.validate();
  return train_two_phase(model, dataset, plan, cfg, cfg.learning_rates.front());
}

/// Global factors swept by default: (1/n) 10^{-2.5..0.5} for the Bayesian
/// scheme, 10^{-6..-2.5} for the usual one, both in half-decades.
inline std::vector<double> default_sweep_grid(Scheme scheme, long n) {
  std::vector<double> out;
  if (scheme == Scheme::Bayesian) {
    require(n >= 1, ErrorKind::InvalidParameter, "n must be >= 1");
    for (int k = 0; k <= 6; ++k) out.push_back(std::pow(10.0, -2.5 + 0.5 * k) / static_cast<double>(n));
  } else {
    for (int k = 0; k <= 7; ++k) out.push_back(std::pow(10.0, -6.0 + 0.5 * k));
  }
  return out;
}

struct SweepEntry {
  double global_lambda = 0.0;
  double best_learning_rate = 0.0;
  /// Validation accuracy reached by each candidate learning rate.
  std::vector<double> lr_val_acc;
  /// Best-LR run followed by the two extra seeds.
  std::vector<PruneReport> runs;
  double mean_test_acc = 0.0;
  double mean_param_count = 0.0;
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  int training_runs = 0;
};

/// For each global factor: train once per learning rate, keep the one with the
/// best final validation accuracy (ties go to the earlier rate), then rerun it
/// with seeds seed+1 and seed+2 and average the three runs.
inline SweepResult lambda_sweep(const Dataset& dataset, const ArchitectureSpec& arch, PlanPenalty kind,
                                Scheme scheme, const std::vector<double>& sweep, const TrainConfig& cfg,
                                Activation act = Activation::ReLU, const PlanOptions& plan_opts = {}) {
  require(!sweep.empty(), ErrorKind::InvalidParameter, "sweep grid is empty");
  cfg.validate();
  SweepResult out;
  for (double g : sweep) {
    require(std::isfinite(g) && g >= 0.0, ErrorKind::InvalidParameter, "sweep values must be >= 0");
    PlanOptions po = plan_opts;
    po.global_lambda = g;
    LambdaPlan p = plan(arch, kind, scheme, po);
    p.global_lambda = g;
    SweepEntry e;
    e.global_lambda = g;
    double best = -1.0;
    PruneReport best_run;
    for (double lr : cfg.learning_rates) {
      MLPModel m = make_model(arch, act, cfg.seed);
      auto rep = train_two_phase(m, dataset, p, cfg, lr);
      ++out.training_runs;
      e.lr_val_acc.push_back(rep.final_val_acc);
      if (rep.final_val_acc > best) {
        best = rep.final_val_acc;
        e.best_learning_rate = lr;
        best_run = std::move(rep);
      }
    }
    e.runs.push_back(std::move(best_run));
    for (std::uint64_t extra = 1; extra <= 2; ++extra) {
      TrainConfig c = cfg;
      c.seed = cfg.seed + extra;
      MLPModel m = make_model(arch, act, c.seed);
      e.runs.push_back(train_two_phase(m, dataset, p, c, e.best_learning_rate));
      ++out.training_runs;
    }
    for (const auto& r : e.runs) {
      e.mean_test_acc += r.final_test_acc / 3.0;
      e.mean_param_count += static_cast<double>(r.final_param_count) / 3.0;
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace penprior
