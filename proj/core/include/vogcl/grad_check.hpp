#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "vogcl/graph.hpp"
#include "vogcl/tensor.hpp"

namespace vogcl {

struct GradCheckOptions {
    double step = 1e-5;
    // Denominator floor of the relative error, so coordinates whose true
    // derivative is ~0 are judged on absolute error instead.
    double scale_floor = 1e-3;
    // For piecewise-linear functions (ReLU / max-pool networks): when the
    // central difference straddles a kink, fall back to the one-sided
    // difference whose side is verified linear (D(h) == D(h/2) within tol).
    bool kink_aware = false;
    // Coordinates to probe; empty means all of them.
    std::vector<std::size_t> coordinates{};
};

struct GradCheckReport {
    bool passed = true;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    std::size_t one_sided = 0;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

using ScalarFunction = std::function<double(const Tensor&)>;
using GradientFunction = std::function<std::vector<double>(const Tensor&)>;
// Builds a scalar-valued graph on top of the leaf holding the probe point.
using GraphBuilder = std::function<NodeId(Graph&, NodeId)>;

double relative_error(double analytic, double numeric, double floor);

GradCheckReport grad_check(const ScalarFunction& f, const GradientFunction& gradient, const Tensor& point, double tol,
                           const GradCheckOptions& options = {});

GradCheckReport grad_check(const GraphBuilder& f, const Tensor& point, double tol,
                           const GradCheckOptions& options = {});

}  // namespace vogcl
