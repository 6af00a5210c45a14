#pragma once

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "penprior/convergence_rates.hpp"
#include "penprior/divergence.hpp"
#include "penprior/lambda_planner.hpp"
#include "penprior/prior_engine.hpp"
#include "penprior/pruning_lab.hpp"

namespace penprior {

using Json = nlohmann::ordered_json;

inline Json to_json(const GridFunction& g) {
  return {{"lo", g.lo}, {"hi", g.hi}, {"n_points", g.n_points()}, {"values", g.values}};
}

inline GridFunction grid_from_json(const Json& j) {
  try {
    GridFunction g;
    g.lo = j.at("lo").get<double>();
    g.hi = j.at("hi").get<double>();
    g.values = j.at("values").get<std::vector<double>>();
    require(j.at("n_points").get<std::size_t>() == g.values.size(), ErrorKind::InvalidParameter,
            "n_points differs from the number of values");
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidParameter, std::string("malformed grid JSON: ") + e.what());
  }
}

inline Json to_json(const PenaltySpec& p) {
  Json j{{"kind", to_string(p.kind)}, {"lambda", p.lambda}, {"dim", p.dim}};
  if (p.kind == PenaltyKind::EvenPolynomial) j["poly_coeffs"] = p.poly_coeffs;
  if (p.grid) j["grid"] = to_json(*p.grid);
  if (p.nu_dependence) j["nu_dependence"] = {{"power", p.nu_dependence->power}, {"log", p.nu_dependence->log}};
  return j;
}

inline Json to_json(const PosteriorFamily& p) {
  Json j{{"kind", to_string(p.kind)}, {"dim", p.dim}};
  if (p.kind == PosteriorKind::GaussianFixedVar) j["sigma2"] = p.sigma2;
  if (p.kind == PosteriorKind::Dirac) j["epsilon_machine"] = p.epsilon_machine;
  return j;
}

inline Json to_json(const PriorDensity& p) {
  Json j{{"form", to_string(p.form)}, {"dim", p.dim}};
  switch (p.form) {
    case PriorForm::Gaussian:
      j["mean"] = p.mean;
      j["var"] = p.var;
      break;
    case PriorForm::Laplace:
    case PriorForm::ExpNorm:
      j["rate"] = p.rate;
      break;
    case PriorForm::LogPoly:
      j["log_density_coeffs"] = p.log_poly->poly.coeffs;
      j["entropy_const"] = p.log_poly->entropy_const;
      break;
    case PriorForm::Grid:
      j["log_density"] = to_json(*p.grid);
      break;
  }
  j["kappa"] = p.kappa;
  j["log_kappa"] = p.log_kappa;
  return j;
}

inline Json to_json(const ConditionAReport& r) {
  return {{"holds", r.holds()},
          {"independent_of_nu", r.independent_of_nu},
          {"max_deviation", r.max_deviation},
          {"shape_deviation", r.shape_deviation},
          {"tolerance", r.tolerance},
          {"integrable", r.integrable},
          {"integrability_note", r.integrability_note},
          {"engine", r.engine},
          {"tested_nus", r.tested_nus}};
}

inline Json to_json(const KLReport& r) {
  Json rows = Json::array();
  for (const auto& e : r.residuals)
    rows.push_back({{"mu", e.mu}, {"nu", e.nu}, {"kl", e.kl}, {"penalty", e.penalty}, {"residual", e.residual}});
  return {{"fitted_K", r.fitted_K},
          {"max_residual", r.max_residual},
          {"method", to_string(r.method)},
          {"n_samples_or_nodes", r.n_samples_or_nodes},
          {"residuals", rows}};
}

inline Json to_json(const RenyiResult& r) {
  return {{"value", r.finite ? Json(r.value) : Json("inf")},
          {"finite", r.finite},
          {"method", to_string(r.method)},
          {"std_error", r.std_error},
          {"n_samples_or_nodes", r.n_samples_or_nodes},
          {"note", r.note}};
}

inline Json to_json(const RenyiCandidate& c) {
  Json log_alpha = to_json(c.log_alpha);
  // Non-positive points carry ln alpha = -inf; JSON has no infinity.
  for (auto& v : log_alpha["values"])
    if (!std::isfinite(v.get<double>())) v = nullptr;
  return {{"gamma", c.gamma},
          {"K", c.K},
          {"non_positive_points", c.non_positive_points},
          {"alpha", to_json(c.alpha)},
          {"log_alpha", log_alpha}};
}

inline Json to_json(const ArchitectureSpec& a) {
  Json layers = Json::array();
  for (const auto& s : a.layers) layers.push_back({{"l", s.l}, {"n_l", s.n_l}, {"P_l", s.P_l}});
  return {{"layers", layers}, {"n", a.n}, {"B", a.B}};
}

inline ArchitectureSpec architecture_from_json(const Json& j) {
  try {
    ArchitectureSpec a;
    for (const auto& s : j.at("layers"))
      a.layers.push_back({s.at("l").get<int>(), s.at("n_l").get<int>(), s.at("P_l").get<int>()});
    a.n = j.at("n").get<long>();
    a.B = j.at("B").get<long>();
    a.validate();
    return a;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidParameter, std::string("malformed architecture JSON: ") + e.what());
  }
}

inline Json to_json(const LambdaPlan& p) {
  Json per_layer = Json::array();
  for (const auto& f : p.per_layer) {
    Json row{{"l", f.shape.l}, {"n_l", f.shape.n_l}, {"P_l", f.shape.P_l}, {"lambda_l", f.lambda_l}};
    if (f.group_component) row["group_component"] = *f.group_component;
    if (f.l1_component) row["l1_component"] = *f.l1_component;
    per_layer.push_back(row);
  }
  Json j{{"per_layer", per_layer},
         {"global_lambda", p.global_lambda},
         {"per_batch_scale", p.per_batch_scale},
         {"scheme", to_string(p.scheme)},
         {"penalty_kind", to_string(p.penalty_kind)},
         {"n", p.n},
         {"B", p.B}};
  if (p.mixing_gamma) j["mixing_gamma"] = *p.mixing_gamma;
  if (p.annotation)
    j["annotation"] = {{"ratio_low", p.annotation->low}, {"ratio_high", p.annotation->high},
                       {"note", p.annotation->note}};
  return j;
}

inline Json to_json(const PriorConditionReport& r) {
  Json j{{"pass", r.pass},
         {"mean_err", r.mean_err},
         {"moment_err", r.moment_err},
         {"target_moment", r.target_moment},
         {"measured_moment", r.measured_moment}};
  if (r.mc_moment) {
    j["mc_moment"] = *r.mc_moment;
    j["mc_std_error"] = r.mc_std_error.value_or(0.0);
  }
  return j;
}

inline Json to_json(const PruneReport& r) {
  Json log = Json::array();
  for (const auto& e : r.phase_log)
    log.push_back({{"phase", e.phase},
                   {"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"penalty", e.penalty},
                   {"val_acc", e.val_acc},
                   {"alive", e.alive},
                   {"alive_weights", e.alive_weights},
                   {"learning_rate", e.learning_rate}});
  return {{"final_test_acc", r.final_test_acc},
          {"final_val_acc", r.final_val_acc},
          {"final_param_count", r.final_param_count},
          {"final_alive", r.final_alive},
          {"hidden_total", r.hidden_total},
          {"hidden_pruned_fraction", r.hidden_pruned_fraction()},
          {"phase1_epochs", r.phase1_epochs},
          {"phase2_epochs", r.phase2_epochs},
          {"learning_rate", r.learning_rate},
          {"seed", r.seed},
          {"plan_used", to_json(r.plan_used)},
          {"phase_log", log}};
}

inline Json to_json(const SweepResult& s) {
  Json entries = Json::array();
  for (const auto& e : s.entries) {
    Json runs = Json::array();
    for (const auto& r : e.runs) runs.push_back(to_json(r));
    entries.push_back({{"global_lambda", e.global_lambda},
                       {"best_learning_rate", e.best_learning_rate},
                       {"lr_val_acc", e.lr_val_acc},
                       {"mean_test_acc", e.mean_test_acc},
                       {"mean_param_count", e.mean_param_count},
                       {"runs", runs}});
  }
  return {{"training_runs", s.training_runs}, {"entries", entries}};
}

inline Json to_json(const WitnessReport& r) {
  Json rows = Json::array();
  for (const auto& c : r.per_n)
    rows.push_back({{"n", c.n},
                    {"eps", c.eps},
                    {"bound", c.bound_value},
                    {"R_n_estimate", c.R_n_estimate},
                    {"R_n_std_error", c.R_n_std_error},
                    {"R_n_quadrature", c.R_n_quadrature},
                    {"conditions_hold", c.conditions_hold},
                    {"divergence_ok", c.divergence_ok},
                    {"log_ratio_ok", c.log_ratio_ok},
                    {"mass_ok", c.mass_ok},
                    {"divergence_ratio", c.divergence_ratio},
                    {"mass_term", c.mass_term},
                    {"R_n_within_bound", c.R_n_within_bound},
                    {"inconclusive", c.inconclusive}});
  return {{"probe_points", r.probe_points}, {"all_hold", r.all_hold()}, {"table", rows}};
}

}  // namespace penprior
