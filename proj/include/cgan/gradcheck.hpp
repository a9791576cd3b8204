#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cgan/tensor.hpp"

namespace cgan {

// Central finite differences of a scalar-valued function at x. f receives a
// tensor and must return a scalar tensor; evaluation is expected to be
// deterministic. Runs one f-call pair per element, so keep x small.
inline std::vector<double> finite_diff_grad(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                            const Tensor<double>& x, double eps) {
  if (!(eps > 0)) fail("finite_diff_grad: eps must be > 0");
  Tensor<double> probe = x.clone();
  std::vector<double> g(static_cast<size_t>(x.size()));
  auto eval = [&]() {
    Tensor<double> r = f(probe);
    if (r.size() != 1) fail("finite_diff_grad: f returned non-scalar of shape " + to_string(r.shape()));
    return r.item();
  };
  for (int64_t i = 0; i < x.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + eps;
    const double fp = eval();
    probe.data()[i] = saved - eps;
    const double fm = eval();
    probe.data()[i] = saved;
    g[static_cast<size_t>(i)] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

struct GradCheckReport {
  std::string name;
  bool pass = false;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  int64_t checked = 0;
  double tol = 0.0;
};

// Compares tape gradients of `target` against central differences. `build`
// re-runs the forward graph on the given tape and returns the scalar loss;
// it must read `target` by handle so both passes see perturbations.
// max_elements > 0 checks only a prefix of target (large parameter blocks).
inline GradCheckReport grad_check(const std::string& name,
                                  const std::function<Tensor<double>(Tape<double>&)>& build,
                                  Tensor<double> target, double eps = 1e-5, double tol = 1e-4,
                                  int64_t max_elements = 0) {
  GradCheckReport rep;
  rep.name = name;
  rep.tol = tol;

  target.set_requires_grad(true);
  target.clear_grad();
  Tape<double> tape;
  Tensor<double> loss = build(tape);
  if (loss.size() != 1) fail("grad_check: loss must be scalar");
  tape.backward(loss);
  const std::vector<double> analytic =
      target.has_grad() ? target.grad() : std::vector<double>(static_cast<size_t>(target.size()), 0.0);

  auto eval = [&]() {
    Tape<double> t;
    t.set_recording(false);
    return build(t).item();
  };

  const int64_t n = (max_elements > 0) ? std::min<int64_t>(max_elements, target.size()) : target.size();
  rep.checked = n;
  rep.pass = true;
  for (int64_t i = 0; i < n; ++i) {
    const double saved = target.data()[i];
    target.data()[i] = saved + eps;
    const double fp = eval();
    target.data()[i] = saved - eps;
    const double fm = eval();
    target.data()[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[static_cast<size_t>(i)];
    const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
    }
  }
  rep.pass = rep.max_rel_err < tol;
  target.set_requires_grad(false);
  target.clear_grad();
  return rep;
}

}  // namespace cgan
