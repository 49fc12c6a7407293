#include "vtt/gradcheck.hpp"

#include <cmath>
#include <numeric>

namespace vtt {

GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss,
                                  const std::vector<NamedTensor<double>>& params,
                                  const GradCheckOptions& options) {
  for (const auto& p : params) {
    auto t = p.tensor;
    t.zero_grad();
  }
  {
    Tensor<double> l = loss();
    if (!std::isfinite(l.item())) throw ValidationError("gradcheck: loss is not finite");
    backward(l);
  }

  std::vector<std::vector<double>> analytic;
  double max_abs = 0.0;
  for (const auto& p : params) {
    analytic.push_back(p.tensor.grad());
    for (double g : analytic.back()) {
      if (!std::isfinite(g)) throw ValidationError("gradcheck: non-finite analytic gradient in " + p.name);
      max_abs = std::max(max_abs, std::abs(g));
    }
  }
  const double floor = 1e-6 * std::max(1.0, max_abs);

  GradCheckReport report;
  SeededRng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double> t = params[pi].tensor;
    const std::size_t n = t.numel();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_tensor > 0 && n > options.max_entries_per_tensor) {
      for (std::size_t i = 0; i < options.max_entries_per_tensor; ++i) {
        std::size_t j = i + rng.below(n - i);
        std::swap(idx[i], idx[j]);
      }
      idx.resize(options.max_entries_per_tensor);
    }
    for (std::size_t i : idx) {
      auto w = t.mutable_data();
      const double orig = w[i];
      double fp, fm;
      {
        NoGradGuard ng;
        w[i] = orig + options.step;
        fp = loss().item();
        w[i] = orig - options.step;
        fm = loss().item();
        w[i] = orig;
      }
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw ValidationError("gradcheck: non-finite loss when perturbing " + params[pi].name + "[" +
                              std::to_string(i) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = params[pi].name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace vtt
