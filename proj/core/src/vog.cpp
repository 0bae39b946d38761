#include "vogcl/vog.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "vogcl/errors.hpp"
#include "vogcl/io.hpp"
#include "vogcl/model.hpp"

namespace vogcl {

ClassChoice parse_class_choice(const std::string& name) {
    if (name == "true" || name == "true_label") return ClassChoice::true_label;
    if (name == "predicted") return ClassChoice::predicted;
    throw ConfigError("unknown class choice '" + name + "' (true or predicted)");
}

std::string class_choice_name(ClassChoice choice) {
    return choice == ClassChoice::true_label ? "true" : "predicted";
}

VogFormula parse_vog_formula(const std::string& name) {
    if (name == "standard") return VogFormula::standard;
    if (name == "literal") return VogFormula::literal;
    throw ConfigError("unknown VoG formula '" + name + "' (standard or literal)");
}

std::string vog_formula_name(VogFormula formula) { return formula == VogFormula::standard ? "standard" : "literal"; }

namespace {

std::vector<Model> checkpoint_models(std::span<const ModelCheckpoint> checkpoints) {
    if (checkpoints.size() < 2) {
        throw ContractError("VoG needs at least 2 checkpoints, got " + std::to_string(checkpoints.size()));
    }
    std::vector<Model> models;
    for (const ModelCheckpoint& c : checkpoints) {
        if (!(c.arch == checkpoints.front().arch)) {
            throw CheckpointError("checkpoint of epoch " + std::to_string(c.epoch) +
                                  " has a different architecture than epoch " +
                                  std::to_string(checkpoints.front().epoch));
        }
        models.push_back(c.to_model());
    }
    return models;
}

std::size_t latest_index(std::span<const ModelCheckpoint> checkpoints) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < checkpoints.size(); ++k) {
        if (checkpoints[k].epoch > checkpoints[best].epoch) best = k;
    }
    return best;
}

// Maps for samples [lo, hi): result[k][s - lo].
std::vector<std::vector<Tensor>> maps_for_range(const std::vector<Model>& models, std::size_t latest,
                                                const Dataset& dataset, ClassChoice choice, std::size_t lo,
                                                std::size_t hi) {
    std::vector<std::size_t> idx(hi - lo);
    std::iota(idx.begin(), idx.end(), lo);
    const Tensor batch = make_batch(dataset, idx);
    std::vector<std::size_t> classes;
    if (choice == ClassChoice::true_label) {
        for (std::size_t i : idx) classes.push_back(dataset.samples[i].label);
    } else {
        const Tensor logits = forward(models[latest], batch);
        const std::size_t c = logits.dim(1);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const double* row = logits.data().data() + b * c;
            classes.push_back(static_cast<std::size_t>(std::max_element(row, row + c) - row));
        }
    }
    std::vector<std::vector<Tensor>> out;
    for (const Model& m : models) out.push_back(input_gradients(m, batch, classes));
    return out;
}

template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, std::size_t threads, Fn&& fn) {
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    threads = std::max<std::size_t>(1, std::min(threads, n_chunks));
    if (threads == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) fn(c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t c = t; c < n_chunks; c += threads) fn(c * chunk, std::min(n, (c + 1) * chunk));
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

std::vector<std::vector<GradientMap>> compute_gradient_maps(std::span<const ModelCheckpoint> checkpoints,
                                                            const Dataset& dataset, ClassChoice choice) {
    const std::vector<Model> models = checkpoint_models(checkpoints);
    const std::size_t latest = latest_index(checkpoints);
    std::vector<std::vector<GradientMap>> out(dataset.size());
    constexpr std::size_t kChunk = 64;
    for (std::size_t lo = 0; lo < dataset.size(); lo += kChunk) {
        const std::size_t hi = std::min(dataset.size(), lo + kChunk);
        auto maps = maps_for_range(models, latest, dataset, choice, lo, hi);
        for (std::size_t s = lo; s < hi; ++s) {
            for (std::size_t k = 0; k < models.size(); ++k) {
                out[s].push_back({dataset.samples[s].id, checkpoints[k].epoch, std::move(maps[k][s - lo])});
            }
        }
    }
    return out;
}

double compute_vog(std::span<const Tensor> maps, VogFormula formula) {
    if (maps.size() < 2) throw ContractError("VoG needs at least 2 gradient maps, got " + std::to_string(maps.size()));
    const Shape& shape = maps.front().shape();
    for (const Tensor& m : maps) {
        if (m.shape() != shape) {
            throw DimensionError("gradient map shape mismatch: " + shape_to_string(shape) + " vs " +
                                 shape_to_string(m.shape()));
        }
    }
    const std::size_t k = maps.size();
    const std::size_t pixels = maps.front().numel();
    const double inv_k = 1.0 / static_cast<double>(k);
    double total = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
        // shifted by the first map so identical maps give exactly zero
        const double t0 = maps.front()[p];
        double mu = 0.0;
        for (const Tensor& m : maps) mu += m[p] - t0;
        mu *= inv_k;
        double sq = 0.0;
        for (const Tensor& m : maps) {
            const double d = (m[p] - t0) - mu;
            sq += d * d;
        }
        total += formula == VogFormula::standard ? std::sqrt(sq * inv_k) : std::sqrt(inv_k) * sq;
    }
    return total / static_cast<double>(pixels);
}

double compute_vog(std::span<const GradientMap> maps, VogFormula formula) {
    std::vector<Tensor> values;
    values.reserve(maps.size());
    for (const GradientMap& m : maps) values.push_back(m.values);
    return compute_vog(values, formula);
}

std::vector<double> compute_vog_scores(std::span<const ModelCheckpoint> checkpoints, const Dataset& dataset,
                                       const VogOptions& options) {
    const std::vector<Model> models = checkpoint_models(checkpoints);
    const std::size_t latest = latest_index(checkpoints);
    std::vector<double> scores(dataset.size(), 0.0);
    parallel_chunks(dataset.size(), std::max<std::size_t>(options.batch_size, 1), options.threads,
                    [&](std::size_t lo, std::size_t hi) {
                        auto maps = maps_for_range(models, latest, dataset, options.class_choice, lo, hi);
                        std::vector<Tensor> per_sample(models.size());
                        for (std::size_t s = lo; s < hi; ++s) {
                            for (std::size_t k = 0; k < models.size(); ++k) per_sample[k] = std::move(maps[k][s - lo]);
                            scores[s] = compute_vog(per_sample, options.formula);
                        }
                    });
    if (options.class_normalize) return normalize_per_class(scores, dataset.labels());
    return scores;
}

std::vector<double> normalize_per_class(std::span<const double> scores, std::span<const std::size_t> labels) {
    if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
    std::map<std::size_t, std::pair<double, double>> stats;  // label -> (mean, std)
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        stats[labels[i]].first += scores[i];
        ++counts[labels[i]];
    }
    for (auto& [label, st] : stats) st.first /= static_cast<double>(counts[label]);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double d = scores[i] - stats[labels[i]].first;
        stats[labels[i]].second += d * d;
    }
    for (auto& [label, st] : stats) st.second = std::sqrt(st.second / static_cast<double>(counts[label]));
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& [mean, sd] = stats[labels[i]];
        out[i] = sd > 0.0 ? (scores[i] - mean) / sd : scores[i] - mean;
    }
    return out;
}

std::vector<VogResult> rank_samples(std::span<const std::pair<std::string, double>> scores) {
    const std::size_t n = scores.size();
    if (n == 0) throw ContractError("rank_samples needs at least one score");
    for (const auto& [id, s] : scores) {
        if (!std::isfinite(s)) throw DataError("sample " + id + " has a non-finite score");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a].second != scores[b].second) return scores[a].second > scores[b].second;
        return scores[a].first < scores[b].first;
    });
    std::vector<VogResult> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = order[r];
        out[i].sample_id = scores[i].first;
        out[i].vog_score = scores[i].second;
        out[i].rank = r + 1;
        out[i].difficulty = static_cast<double>(n - (r + 1)) / static_cast<double>(n) * 100.0;
    }
    return out;
}

std::vector<std::optional<double>> class_level_scores(std::span<const VogResult> results,
                                                      const std::map<std::string, std::size_t>& labels,
                                                      std::size_t num_classes) {
    std::vector<double> sums(num_classes, 0.0);
    std::vector<std::size_t> counts(num_classes, 0);
    for (const VogResult& r : results) {
        const auto it = labels.find(r.sample_id);
        if (it == labels.end()) throw DataError("sample " + r.sample_id + " has no label");
        if (it->second >= num_classes) throw LabelError("sample " + r.sample_id + " has out-of-range label");
        sums[it->second] += r.difficulty;
        ++counts[it->second];
    }
    std::vector<std::optional<double>> out(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] > 0) out[c] = sums[c] / static_cast<double>(counts[c]);
    }
    return out;
}

std::string scores_csv(std::span<const VogResult> results) {
    std::string out = "sample_id,vog_score,rank,difficulty\n";
    for (const VogResult& r : results) {
        out += r.sample_id + "," + format_double(r.vog_score) + "," + std::to_string(r.rank) + "," +
               format_double(r.difficulty) + "\n";
    }
    return out;
}

std::vector<std::pair<std::string, double>> read_scores_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t id_col = t.column("sample_id");
    const std::size_t score_col = t.column("vog_score");
    std::vector<std::pair<std::string, double>> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        out.emplace_back(row[id_col], parse_double(row[score_col], "score of " + row[id_col]));
    }
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && v[order[end]] == v[order[start]]) ++end;
        const double r = (static_cast<double>(start) + static_cast<double>(end) + 1.0) / 2.0;
        for (std::size_t i = start; i < end; ++i) ranks[order[i]] = r;
        start = end;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw ContractError("spearman needs two equal-length series (n >= 2)");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    auto has_ties = [](const std::vector<double>& r) { return std::set<double>(r.begin(), r.end()).size() != r.size(); };
    if (!has_ties(ra) && !has_ties(rb)) {
        // Integer ranks: 1 - 6 sum d^2 / (n (n^2 - 1)) is exact for small sums.
        double d2 = 0.0;
        for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
        return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
    }
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean, db = rb[i] - mean;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace vogcl
