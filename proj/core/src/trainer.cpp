#include "vogcl/trainer.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "vogcl/errors.hpp"
#include "vogcl/io.hpp"
#include "vogcl/rng.hpp"

namespace vogcl {

std::string mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::baseline: return "baseline";
        case TrainMode::curriculum: return "curriculum";
        case TrainMode::anti_curriculum: return "anti_curriculum";
        case TrainMode::external_scores: return "external_scores";
    }
    return "baseline";
}

TrainMode parse_mode(const std::string& name) {
    if (name == "baseline") return TrainMode::baseline;
    if (name == "curriculum") return TrainMode::curriculum;
    if (name == "anti_curriculum" || name == "anti-curriculum") return TrainMode::anti_curriculum;
    if (name == "external_scores" || name == "external-scores") return TrainMode::external_scores;
    throw ConfigError("unknown mode '" + name + "' (baseline, curriculum, anti_curriculum, external_scores)");
}

bool uses_curriculum(TrainMode mode) { return mode != TrainMode::baseline; }

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    for (std::size_t e : checkpoint_epochs) {
        if (e < 1 || e > epochs) {
            throw ConfigError("checkpoint epoch " + std::to_string(e) + " outside [1, " + std::to_string(epochs) + "]");
        }
    }
    if (uses_curriculum(mode) && (curriculum_horizon < 1 || curriculum_horizon > epochs)) {
        throw ConfigError("curriculum horizon L=" + std::to_string(curriculum_horizon) + " must lie in [1, " +
                          std::to_string(epochs) + "]");
    }
}

std::string TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = format_double(learning_rate);
    j["momentum"] = format_double(momentum);
    auto ck = checkpoint_epochs;
    std::sort(ck.begin(), ck.end());
    j["checkpoint_epochs"] = ck;
    j["seed"] = seed;
    j["mode"] = mode_name(mode);
    j["curriculum_horizon"] = curriculum_horizon;
    j["augmentation"] = augmentation;
    j["conv_filters"] = conv_filters;
    j["dense_hidden"] = dense_hidden;
    return j.dump();
}

std::uint64_t TrainConfig::digest() const { return fnv1a64(to_json()); }

ModelArch arch_for(const TrainConfig& config, const Dataset& dataset) {
    if (dataset.empty()) throw DataError("cannot derive an architecture from an empty dataset");
    const Shape& s = dataset.samples.front().image.shape();
    ModelArch arch;
    arch.channels = s[0];
    arch.height = s[1];
    arch.width = s[2];
    arch.num_classes = dataset.num_classes();
    arch.conv_blocks.clear();
    for (std::size_t f : config.conv_filters) arch.conv_blocks.push_back({f, 3, 2});
    arch.dense_widths = config.dense_hidden;
    arch.dense_widths.push_back(arch.num_classes);
    validate_arch(arch);
    return arch;
}

ShuffleSampler::ShuffleSampler(std::size_t n, std::uint64_t seed) : n_(n), rng_(make_stream(seed, "shuffle")) {}

std::vector<std::size_t> ShuffleSampler::permutation(std::size_t) {
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n_; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng_, i)]);
    return order;
}

CurriculumSampler::CurriculumSampler(std::span<const std::size_t> ranks, std::size_t horizon, CurriculumMode mode,
                                     std::uint64_t seed)
    : schedule_(ranks, horizon, mode), rng_(make_stream(seed, "curriculum-sampling")) {}

std::vector<std::size_t> CurriculumSampler::permutation(std::size_t epoch) {
    if (epoch < schedule_.epoch()) throw SamplerError("curriculum epochs must be requested in order");
    while (schedule_.epoch() < epoch) schedule_.advance_epoch();
    return sample_permutation(schedule_, rng_);
}

std::unique_ptr<EpochSampler> make_sampler(const TrainConfig& config, std::size_t n,
                                           std::span<const std::size_t> ranks) {
    if (!uses_curriculum(config.mode)) return std::make_unique<ShuffleSampler>(n, config.seed);
    if (ranks.size() != n) {
        throw ContractError("mode " + mode_name(config.mode) + " needs " + std::to_string(n) + " ranks, got " +
                            std::to_string(ranks.size()));
    }
    const CurriculumMode cm =
        config.mode == TrainMode::anti_curriculum ? CurriculumMode::anti_curriculum : CurriculumMode::curriculum;
    return std::make_unique<CurriculumSampler>(ranks, config.curriculum_horizon, cm, config.seed);
}

namespace {

void check_bijection(const std::vector<std::size_t>& order, std::size_t n, std::size_t epoch) {
    if (order.size() != n) {
        throw SamplerError("epoch " + std::to_string(epoch) + ": sampler emitted " + std::to_string(order.size()) +
                           " indices for " + std::to_string(n) + " samples");
    }
    std::vector<bool> seen(n, false);
    for (std::size_t i : order) {
        if (i >= n || seen[i]) {
            throw SamplerError("epoch " + std::to_string(epoch) + ": sampler order is not a permutation (index " +
                               std::to_string(i) + ")");
        }
        seen[i] = true;
    }
}

void flip_horizontal(Tensor& batch, std::size_t b) {
    const std::size_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    double* base = batch.data().data() + b * c * h * w;
    for (std::size_t row = 0; row < c * h; ++row) std::reverse(base + row * w, base + (row + 1) * w);
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset, EpochSampler& sampler) {
    config.validate();
    if (dataset.empty()) throw DataError("cannot train on an empty dataset");
    if (sampler.size() != dataset.size()) {
        throw SamplerError("sampler covers " + std::to_string(sampler.size()) + " samples, dataset has " +
                           std::to_string(dataset.size()));
    }
    const ModelArch arch = arch_for(config, dataset);
    TrainResult result;
    result.model = build_model(arch, config.seed);
    result.initial_model = result.model;
    const std::uint64_t digest = config.digest();
    Rng augment = make_stream(config.seed, "augment");

    std::vector<std::vector<double>> velocity;
    for (const NamedTensor& p : result.model.parameters) velocity.emplace_back(p.tensor.numel(), 0.0);

    const std::size_t n = dataset.size();
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order = sampler.permutation(epoch);
        check_bijection(order, n, epoch);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            Tensor batch = make_batch(dataset, idx);
            if (config.augmentation) {
                for (std::size_t b = 0; b < idx.size(); ++b) {
                    if (uniform_open01(augment) < 0.5) flip_horizontal(batch, b);
                }
            }
            std::vector<std::size_t> labels;
            labels.reserve(idx.size());
            for (std::size_t i : idx) labels.push_back(dataset.samples[i].label);

            ForwardTrace t = trace_forward(result.model, batch, true, false);
            const NodeId loss = t.graph.softmax_cross_entropy(t.logits, labels);
            t.graph.backward(loss);
            for (std::size_t p = 0; p < result.model.parameters.size(); ++p) {
                const auto grad = t.graph.grad(t.parameters[p]);
                auto values = result.model.parameters[p].tensor.data();
                auto& v = velocity[p];
                for (std::size_t i = 0; i < v.size(); ++i) {
                    v[i] = config.momentum * v[i] + grad[i];
                    values[i] -= config.learning_rate * v[i];
                }
            }
            ++step;
            result.log.push_back({epoch, step, t.graph.value(loss).item()});
        }
        result.epoch_orders.push_back(std::move(order));
        if (std::find(config.checkpoint_epochs.begin(), config.checkpoint_epochs.end(), epoch) !=
            config.checkpoint_epochs.end()) {
            result.checkpoints.push_back(make_checkpoint(result.model, epoch, digest));
        }
    }
    return result;
}

std::string loss_log_csv(std::span<const LossRecord> log) {
    std::string out = "epoch,step,loss\n";
    for (const LossRecord& r : log) {
        out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + format_double(r.loss) + "\n";
    }
    return out;
}

}  // namespace vogcl
