#include "vogcl/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vogcl/errors.hpp"

namespace vogcl {

double relative_error(double analytic, double numeric, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(const ScalarFunction& f, const GradientFunction& gradient, const Tensor& point, double tol,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    report.analytic = gradient(point);
    if (report.analytic.size() != point.numel()) {
        throw DimensionError("gradient has " + std::to_string(report.analytic.size()) + " entries for a point with " +
                             std::to_string(point.numel()));
    }
    report.numeric.assign(point.numel(), 0.0);

    std::vector<std::size_t> coords = options.coordinates;
    if (coords.empty()) {
        coords.resize(point.numel());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    }

    const double h = options.step;
    Tensor probe = point;
    const double f0 = options.kink_aware ? f(point) : 0.0;
    auto eval_at = [&](std::size_t i, double delta) {
        const double saved = probe[i];
        probe[i] = saved + delta;
        const double v = f(probe);
        probe[i] = saved;
        return v;
    };

    for (std::size_t i : coords) {
        if (i >= point.numel()) throw ContractError("grad_check coordinate " + std::to_string(i) + " out of range");
        const double fp = eval_at(i, h);
        const double fm = eval_at(i, -h);
        double numeric = (fp - fm) / (2.0 * h);
        const double analytic = report.analytic[i];

        if (options.kink_aware && relative_error(analytic, numeric, options.scale_floor) >= tol) {
            const double fwd = (fp - f0) / h;
            const double fwd_half = (eval_at(i, h / 2) - f0) / (h / 2);
            const double bwd = (f0 - fm) / h;
            const double bwd_half = (f0 - eval_at(i, -h / 2)) / (h / 2);
            const bool fwd_linear = relative_error(fwd, fwd_half, options.scale_floor) < tol;
            const bool bwd_linear = relative_error(bwd, bwd_half, options.scale_floor) < tol;
            if (fwd_linear != bwd_linear) {
                numeric = fwd_linear ? fwd_half : bwd_half;
                ++report.one_sided;
            }
        }

        report.numeric[i] = numeric;
        ++report.checked;
        const double err = relative_error(analytic, numeric, options.scale_floor);
        if (report.checked == 1 || err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_index = i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

GradCheckReport grad_check(const GraphBuilder& f, const Tensor& point, double tol, const GradCheckOptions& options) {
    auto value = [&](const Tensor& x) {
        Graph g;
        const NodeId leaf = g.leaf(x, false);
        return g.value(f(g, leaf)).item();
    };
    auto gradient = [&](const Tensor& x) {
        Graph g;
        const NodeId leaf = g.leaf(x, true);
        const NodeId out = f(g, leaf);
        g.backward(out);
        const auto grad = g.grad(leaf);
        return std::vector<double>(grad.begin(), grad.end());
    };
    return grad_check(value, gradient, point, tol, options);
}

}  // namespace vogcl
