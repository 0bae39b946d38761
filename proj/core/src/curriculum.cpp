#include "vogcl/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vogcl/errors.hpp"

namespace vogcl {

std::vector<double> init_probabilities(std::span<const std::size_t> ranks, CurriculumMode mode) {
    const std::size_t n = ranks.size();
    if (n == 0) throw ContractError("init_probabilities needs at least one rank");
    std::vector<bool> seen(n + 1, false);
    for (std::size_t r : ranks) {
        if (r < 1 || r > n || seen[r]) {
            throw ContractError("ranks are not a permutation of 1.." + std::to_string(n) + " (offending rank " +
                                std::to_string(r) + ")");
        }
        seen[r] = true;
    }
    // sum of 1..N is exact in double for any realistic N.
    const double total = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = mode == CurriculumMode::curriculum ? ranks[i] : n + 1 - ranks[i];
        p[i] = static_cast<double>(s) / total;
    }
    return p;
}

double compute_lambda(double p1, std::size_t n, std::size_t horizon) {
    if (horizon == 0) throw ContractError("curriculum horizon L must be >= 1");
    if (!(p1 > 0.0)) throw ContractError("initial probability must be positive");
    if (n == 0) throw ContractError("N must be positive");
    const double target = 1.0 / static_cast<double>(n);
    return std::pow(target / p1, 1.0 / static_cast<double>(horizon));
}

CurriculumSchedule::CurriculumSchedule(std::span<const std::size_t> ranks, std::size_t horizon, CurriculumMode mode)
    : p_(init_probabilities(ranks, mode)), horizon_(horizon), mode_(mode) {
    if (horizon == 0) throw ContractError("curriculum horizon L must be >= 1");
    lambda_.reserve(p_.size());
    for (double p : p_) lambda_.push_back(compute_lambda(p, p_.size(), horizon));
}

std::vector<double> CurriculumSchedule::next_unnormalized() const {
    std::vector<double> raw(p_.size());
    for (std::size_t i = 0; i < p_.size(); ++i) raw[i] = p_[i] * lambda_[i];
    return raw;
}

void CurriculumSchedule::advance_epoch() {
    ++epoch_;
    if (epoch_ > horizon_) {
        p_.assign(p_.size(), 1.0 / static_cast<double>(p_.size()));
        return;
    }
    p_ = next_unnormalized();
    const double total = std::accumulate(p_.begin(), p_.end(), 0.0);
    for (double& v : p_) v /= total;
}

std::vector<std::size_t> sample_permutation(std::span<const double> weights, Rng& rng) {
    const std::size_t n = weights.size();
    std::vector<double> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(weights[i] > 0.0)) throw ContractError("sampling weight " + std::to_string(i) + " must be positive");
        keys[i] = std::log(uniform_open01(rng)) / weights[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
    return order;
}

}  // namespace vogcl
