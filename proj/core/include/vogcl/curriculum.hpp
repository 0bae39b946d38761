#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vogcl/rng.hpp"

namespace vogcl {

enum class CurriculumMode { curriculum, anti_curriculum };

// Initial sampling probabilities from difficulty ranks (1 = hardest).
// p_i = s_i / sum_j s_j, so the easiest sample (rank N) is drawn most often.
// Anti mode reverses the ranks first. Throws ContractError when `ranks` is
// not a permutation of 1..N.
std::vector<double> init_probabilities(std::span<const std::size_t> ranks, CurriculumMode mode);

// Per-sample multiplier that moves p1 to 1/N in exactly `horizon` steps:
// lambda = ((1/N) / p1)^(1/horizon).
double compute_lambda(double p1, std::size_t n, std::size_t horizon);

// Epoch-indexed sampling distribution. Epoch 1 holds the initial
// probabilities; each advance multiplies by lambda and renormalizes until
// epoch `horizon`, and from epoch horizon+1 on every sample has exactly 1/N.
class CurriculumSchedule {
public:
    CurriculumSchedule(std::span<const std::size_t> ranks, std::size_t horizon, CurriculumMode mode);

    std::size_t size() const noexcept { return p_.size(); }
    std::size_t horizon() const noexcept { return horizon_; }
    std::size_t epoch() const noexcept { return epoch_; }
    CurriculumMode mode() const noexcept { return mode_; }
    const std::vector<double>& probabilities() const noexcept { return p_; }
    const std::vector<double>& lambdas() const noexcept { return lambda_; }

    void advance_epoch();

    // Raw p * lambda of the next step, before renormalization.
    std::vector<double> next_unnormalized() const;

private:
    std::vector<double> p_;
    std::vector<double> lambda_;
    std::size_t horizon_;
    std::size_t epoch_ = 1;
    CurriculumMode mode_;
};

// Weighted sampling without replacement over the current probabilities,
// realized with exponential-race keys: key_i = log(u_i) / p_i, emitted in
// descending key order. Equivalent in distribution to sequential draws
// proportional to p among the remaining items.
std::vector<std::size_t> sample_permutation(std::span<const double> weights, Rng& rng);

inline std::vector<std::size_t> sample_permutation(const CurriculumSchedule& schedule, Rng& rng) {
    return sample_permutation(schedule.probabilities(), rng);
}

}  // namespace vogcl
