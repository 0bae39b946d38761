#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vogcl/checkpoint.hpp"
#include "vogcl/curriculum.hpp"
#include "vogcl/data.hpp"
#include "vogcl/model.hpp"

namespace vogcl {

enum class TrainMode { baseline, curriculum, anti_curriculum, external_scores };

std::string mode_name(TrainMode mode);
TrainMode parse_mode(const std::string& name);
bool uses_curriculum(TrainMode mode);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::vector<std::size_t> checkpoint_epochs{26, 28, 30};
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::baseline;
    std::size_t curriculum_horizon = 10;
    bool augmentation = false;
    std::vector<std::size_t> conv_filters{8, 16};
    std::vector<std::size_t> dense_hidden{64};

    // Throws ConfigError.
    void validate() const;
    std::string to_json() const;
    std::uint64_t digest() const;
};

ModelArch arch_for(const TrainConfig& config, const Dataset& dataset);

// Supplies the visiting order of each epoch. Epochs are requested in order,
// starting at 1; each returned order must be a permutation of 0..N-1.
class EpochSampler {
public:
    virtual ~EpochSampler() = default;
    virtual std::size_t size() const = 0;
    virtual std::vector<std::size_t> permutation(std::size_t epoch) = 0;
};

// Uniform reshuffle every epoch from the `shuffle` stream.
class ShuffleSampler final : public EpochSampler {
public:
    ShuffleSampler(std::size_t n, std::uint64_t seed);
    std::size_t size() const override { return n_; }
    std::vector<std::size_t> permutation(std::size_t epoch) override;

private:
    std::size_t n_;
    Rng rng_;
};

// Rank-driven schedule sampled without replacement from the
// `curriculum-sampling` stream.
class CurriculumSampler final : public EpochSampler {
public:
    CurriculumSampler(std::span<const std::size_t> ranks, std::size_t horizon, CurriculumMode mode,
                      std::uint64_t seed);
    std::size_t size() const override { return schedule_.size(); }
    std::vector<std::size_t> permutation(std::size_t epoch) override;
    const CurriculumSchedule& schedule() const noexcept { return schedule_; }

private:
    CurriculumSchedule schedule_;
    Rng rng_;
};

// Sampler for config.mode; curriculum modes need per-sample ranks
// (1 = hardest) aligned with the dataset order.
std::unique_ptr<EpochSampler> make_sampler(const TrainConfig& config, std::size_t n,
                                           std::span<const std::size_t> ranks = {});

struct LossRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss = 0.0;
};

struct TrainResult {
    Model initial_model;
    Model model;
    std::vector<ModelCheckpoint> checkpoints;
    std::vector<LossRecord> log;
    std::vector<std::vector<std::size_t>> epoch_orders;
};

// Mini-batch SGD with momentum (v = mu v + g; w -= lr v) over the order the
// sampler emits each epoch. Snapshots are taken after each epoch listed in
// config.checkpoint_epochs.
TrainResult train(const TrainConfig& config, const Dataset& dataset, EpochSampler& sampler);

std::string loss_log_csv(std::span<const LossRecord> log);

}  // namespace vogcl
