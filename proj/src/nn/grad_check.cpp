#include "fsv2v/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fsv2v::nn {

namespace {

double evaluate(const LossBuilder& loss, const ParamSet<double>& params) {
  Graph<double> graph(false);
  ParamBinder<double> binder(graph, params);
  return loss(binder).value()[0];
}

}  // namespace

GradCheckReport finite_diff_grad_check(const LossBuilder& loss, ParamSet<double> params,
                                       const GradCheckOptions& options) {
  GradCheckReport report;
  ParamSet<double> analytic;
  {
    Graph<double> graph(true);
    ParamBinder<double> binder(graph, params);
    Var<double> l = loss(binder);
    graph.backward(l);
    analytic = binder.gradients();
  }

  std::mt19937_64 rng(options.seed);
  for (auto& [name, tensor] : params) {
    const Tensor<double>& grad = analytic.at(name);
    if (!grad.all_finite()) {
      report.failure = "non-finite analytic gradient for parameter '" + name + "'";
      return report;
    }
    std::vector<std::size_t> indices(tensor.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_elements_per_param && indices.size() > options.max_elements_per_param) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_elements_per_param);
      std::sort(indices.begin(), indices.end());
    }

    GradCheckEntry entry{name, 0.0, indices.size()};
    for (std::size_t i : indices) {
      const double saved = tensor[i];
      tensor[i] = saved + options.step;
      const double up = evaluate(loss, params);
      tensor[i] = saved - options.step;
      const double down = evaluate(loss, params);
      tensor[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      if (!std::isfinite(numeric)) {
        report.failure = "non-finite numeric gradient for parameter '" + name + "'";
        return report;
      }
      const double a = grad[i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
    }
    if (entry.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = name;
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace fsv2v::nn
