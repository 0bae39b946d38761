#include "vogcl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vogcl/errors.hpp"
#include "vogcl/io.hpp"
#include "vogcl/log.hpp"
#include "vogcl/rng.hpp"

namespace vogcl {

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const Sample& s : samples) {
        if (s.label >= counts.size()) counts.resize(s.label + 1, 0);
        ++counts[s.label];
    }
    return counts;
}

std::vector<std::size_t> Dataset::labels() const {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) out.push_back(s.label);
    return out;
}

std::size_t Dataset::class_index(const std::string& name) const {
    for (std::size_t i = 0; i < class_names.size(); ++i) {
        if (class_names[i] == name) return i;
    }
    throw DataError("unknown class name '" + name + "'");
}

void Dataset::validate() const {
    std::set<std::string> ids;
    const Shape* shape = samples.empty() ? nullptr : &samples.front().image.shape();
    for (const Sample& s : samples) {
        if (!ids.insert(s.id).second) throw DataError("duplicate sample id " + s.id);
        if (s.label >= class_names.size()) {
            throw DataError("sample " + s.id + " has label " + std::to_string(s.label) + " but only " +
                            std::to_string(class_names.size()) + " classes are named");
        }
        if (s.image.rank() != 3 || s.image.shape() != *shape) {
            throw DataError("sample " + s.id + " has image shape " + shape_to_string(s.image.shape()));
        }
        for (double v : s.image.data()) {
            if (!(v >= 0.0 && v <= 1.0)) throw DataError("sample " + s.id + " has a pixel outside [0, 1]");
        }
    }
}

ClassProfile reference_train_profile() {
    return {{"normal", 800},          {"ulnar_fracture", 88},   {"radial_fracture", 340},
            {"humeral_fracture", 84}, {"dislocation_fracture", 11}, {"complex_fracture", 42},
            {"coronoid_fracture", 27}};
}

ClassProfile reference_test_profile() {
    return {{"normal", 400},         {"ulnar_fracture", 10},  {"radial_fracture", 44},
            {"humeral_fracture", 9}, {"dislocation_fracture", 2}, {"complex_fracture", 4},
            {"coronoid_fracture", 4}};
}

ClassProfile parse_profile_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        const auto [line, col] = line_and_column(text, byte);
        throw ConfigError("profile JSON parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("profile JSON must be an object {class_name: count}");
    ClassProfile profile;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number_integer() || it.value().get<long long>() < 0) {
            throw ConfigError("profile count for '" + it.key() + "' must be a non-negative integer");
        }
        profile.emplace_back(it.key(), it.value().get<std::size_t>());
    }
    if (profile.empty()) throw ConfigError("profile JSON names no classes");
    return profile;
}

double motif_expert_difficulty(std::size_t class_index) {
    // disk, h-bar, v-bar, cross, ring, diagonal, box
    static constexpr std::array<double, 7> kDifficulty{1.0, 3.0, 2.0, 3.0, 4.0, 5.0, 4.0};
    return kDifficulty[class_index % kDifficulty.size()];
}

namespace {

class Canvas {
public:
    Canvas(std::size_t h, std::size_t w) : h_(h), w_(w), px_(h * w, 0.0) {}

    void plot(long y, long x, double v) {
        if (y < 0 || x < 0 || y >= static_cast<long>(h_) || x >= static_cast<long>(w_)) return;
        double& p = px_[static_cast<std::size_t>(y) * w_ + static_cast<std::size_t>(x)];
        p = std::max(p, v);
    }

    void rect(double cy, double cx, double half_h, double half_w, double v) {
        for (long y = std::lround(cy - half_h); y <= std::lround(cy + half_h); ++y) {
            for (long x = std::lround(cx - half_w); x <= std::lround(cx + half_w); ++x) plot(y, x, v);
        }
    }

    // Pixels whose center lies at distance in [r_in, r_out] from (cy, cx).
    void annulus(double cy, double cx, double r_in, double r_out, double v) {
        for (std::size_t y = 0; y < h_; ++y) {
            for (std::size_t x = 0; x < w_; ++x) {
                const double d = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
                if (d >= r_in && d <= r_out) plot(static_cast<long>(y), static_cast<long>(x), v);
            }
        }
    }

    void diagonal(double cy, double cx, double half_len, double v) {
        for (long t = -std::lround(half_len); t <= std::lround(half_len); ++t) {
            for (long k = -1; k <= 1; ++k) {
                plot(std::lround(cy) + t, std::lround(cx) + t + k, v);
            }
        }
    }

    std::vector<double>& pixels() { return px_; }

private:
    std::size_t h_, w_;
    std::vector<double> px_;
};

void draw_motif(Canvas& c, std::size_t motif, double cy, double cx, double scale, double v) {
    switch (motif % 7) {
        case 0: c.annulus(cy, cx, 0.0, 6.0 * scale, v); break;                   // filled disk
        case 1: c.rect(cy, cx, 1.0 * scale, 10.0 * scale, v); break;             // horizontal bar
        case 2: c.rect(cy, cx, 10.0 * scale, 1.0 * scale, v); break;             // vertical bar
        case 3:                                                                   // cross
            c.rect(cy, cx, 1.0 * scale, 9.0 * scale, v);
            c.rect(cy, cx, 9.0 * scale, 1.0 * scale, v);
            break;
        case 4: c.annulus(cy, cx, 6.5 * scale, 8.5 * scale, v); break;           // ring
        case 5: c.diagonal(cy, cx, 9.0 * scale, v); break;                       // diagonal stroke
        default:                                                                  // box outline
            c.rect(cy - 7.0 * scale, cx, 1.0 * scale, 7.0 * scale, v);
            c.rect(cy + 7.0 * scale, cx, 1.0 * scale, 7.0 * scale, v);
            c.rect(cy, cx - 7.0 * scale, 7.0 * scale, 1.0 * scale, v);
            c.rect(cy, cx + 7.0 * scale, 7.0 * scale, 1.0 * scale, v);
            break;
    }
}

std::string padded_id(const std::string& prefix, std::size_t index, std::size_t total) {
    std::size_t width = 5;
    for (std::size_t t = total; t >= 100000; t /= 10) ++width;
    std::string digits = std::to_string(index);
    if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
    return prefix + "_" + digits;
}

double quantize8(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return std::round(v * 255.0) / 255.0;
}

}  // namespace

Dataset generate_synthetic(const SyntheticOptions& options) {
    if (options.knob_min < 0.0 || options.knob_max > 1.0 || options.knob_min > options.knob_max) {
        throw ConfigError("difficulty knob range must satisfy 0 <= min <= max <= 1");
    }
    if (options.height < 8 || options.width < 8) throw ConfigError("synthetic images must be at least 8x8");
    Dataset ds;
    ds.split = options.split;
    std::size_t total = 0;
    for (const auto& [name, count] : options.profile) {
        ds.class_names.push_back(name);
        total += count;
    }
    Rng rng(derive_seed(options.seed, "synthetic:" + options.id_prefix));
    const double scale = static_cast<double>(std::min(options.height, options.width)) / 32.0;
    const double mid_y = (static_cast<double>(options.height) - 1.0) / 2.0;
    const double mid_x = (static_cast<double>(options.width) - 1.0) / 2.0;
    std::size_t index = 0;
    for (std::size_t cls = 0; cls < options.profile.size(); ++cls) {
        for (std::size_t n = 0; n < options.profile[cls].second; ++n) {
            const double knob = options.knob_min + (options.knob_max - options.knob_min) * uniform_open01(rng);
            const auto distractors = static_cast<std::size_t>(std::floor(4.0 * knob));
            const double sigma = 0.05 + 0.45 * knob;
            Canvas canvas(options.height, options.width);
            const double cy = mid_y + (uniform_open01(rng) * 6.0 - 3.0) * scale;
            const double cx = mid_x + (uniform_open01(rng) * 6.0 - 3.0) * scale;
            const double intensity = 0.7 + 0.3 * uniform_open01(rng);
            draw_motif(canvas, cls, cy, cx, scale, intensity);
            for (std::size_t d = 0; d < distractors; ++d) {
                const double dy = uniform_open01(rng) * static_cast<double>(options.height - 1);
                const double dx = uniform_open01(rng) * static_cast<double>(options.width - 1);
                canvas.rect(dy, dx, scale, scale, 0.5 + 0.5 * uniform_open01(rng));
            }
            std::vector<double>& px = canvas.pixels();
            for (double& v : px) v = quantize8(v + sigma * standard_normal(rng));
            Sample s;
            s.id = padded_id(options.id_prefix, index, total);
            s.image = Tensor({1, options.height, options.width}, std::move(px));
            s.label = cls;
            s.meta["knob"] = knob;
            s.meta["distractors"] = static_cast<double>(distractors);
            ds.samples.push_back(std::move(s));
            ++index;
        }
    }
    return ds;
}

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) throw CorruptionError(path.string() + ": truncated IDX header");
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 3]));
}

void put_be32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

std::string read_existing(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingFileError("missing file " + path.string());
    return read_file(path);
}

std::vector<std::string> default_class_names(std::size_t count) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < count; ++i) names.push_back(std::to_string(i));
    return names;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const std::string img = read_existing(images);
    const std::string lab = read_existing(labels);
    if (read_be32(img, 0, images) != 0x00000803u) {
        throw MagicMismatchError(images.string() + ": bad IDX image magic (expected 0x00000803)");
    }
    if (read_be32(lab, 0, labels) != 0x00000801u) {
        throw MagicMismatchError(labels.string() + ": bad IDX label magic (expected 0x00000801)");
    }
    const std::size_t n_img = read_be32(img, 4, images);
    const std::size_t rows = read_be32(img, 8, images);
    const std::size_t cols = read_be32(img, 12, images);
    const std::size_t n_lab = read_be32(lab, 4, labels);
    if (n_img != n_lab) {
        throw CountMismatchError("IDX count mismatch: " + std::to_string(n_img) + " images vs " +
                                 std::to_string(n_lab) + " labels");
    }
    if (img.size() < 16 + n_img * rows * cols) throw CorruptionError(images.string() + ": truncated pixel data");
    if (lab.size() < 8 + n_lab) throw CorruptionError(labels.string() + ": truncated label data");

    Dataset ds;
    std::size_t max_label = 0;
    ds.samples.reserve(n_img);
    const std::size_t plane = rows * cols;
    for (std::size_t i = 0; i < n_img; ++i) {
        std::vector<double> px(plane);
        for (std::size_t p = 0; p < plane; ++p) {
            px[p] = static_cast<double>(static_cast<unsigned char>(img[16 + i * plane + p])) / 255.0;
        }
        Sample s;
        s.id = padded_id("idx", i, n_img);
        s.image = Tensor({1, rows, cols}, std::move(px));
        s.label = static_cast<unsigned char>(lab[8 + i]);
        max_label = std::max(max_label, s.label);
        ds.samples.push_back(std::move(s));
    }
    ds.class_names = default_class_names(n_img == 0 ? 0 : max_label + 1);
    return ds;
}

void save_idx(const Dataset& dataset, const std::filesystem::path& images, const std::filesystem::path& labels) {
    std::string img, lab;
    const std::size_t rows = dataset.empty() ? 0 : dataset.samples.front().image.dim(1);
    const std::size_t cols = dataset.empty() ? 0 : dataset.samples.front().image.dim(2);
    put_be32(img, 0x00000803u);
    put_be32(img, static_cast<std::uint32_t>(dataset.size()));
    put_be32(img, static_cast<std::uint32_t>(rows));
    put_be32(img, static_cast<std::uint32_t>(cols));
    put_be32(lab, 0x00000801u);
    put_be32(lab, static_cast<std::uint32_t>(dataset.size()));
    for (const Sample& s : dataset.samples) {
        if (s.image.dim(0) != 1) throw DataError("IDX export supports single-channel images only");
        for (double v : s.image.data()) img.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        if (s.label > 255) throw DataError("IDX labels must fit in one byte");
        lab.push_back(static_cast<char>(s.label));
    }
    write_file(images, img);
    write_file(labels, lab);
}

namespace {

Tensor read_pgm(const std::filesystem::path& path) {
    const std::string bytes = read_existing(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    if (next_token() != "P5") throw MagicMismatchError(path.string() + ": not a binary PGM (P5)");
    const std::size_t w = parse_uint(next_token(), path.string());
    const std::size_t h = parse_uint(next_token(), path.string());
    const std::size_t maxval = parse_uint(next_token(), path.string());
    if (maxval == 0 || maxval > 255) throw LoaderError(path.string() + ": only 8-bit PGM is supported");
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + w * h) throw CorruptionError(path.string() + ": truncated pixel data");
    std::vector<double> px(w * h);
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / static_cast<double>(maxval);
    }
    return Tensor({1, h, w}, std::move(px));
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 1) throw DataError("PGM export supports 1xHxW images only");
    std::string out = "P5\n" + std::to_string(image.dim(2)) + " " + std::to_string(image.dim(1)) + "\n255\n";
    for (double v : image.data()) out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    write_file(path, out);
}

}  // namespace

Dataset load_directory(const std::filesystem::path& root) {
    const CsvTable labels = read_csv(root / "labels.csv");
    if (labels.header.size() < 2 || labels.header[0] != "id" || labels.header[1] != "label") {
        throw LoaderError((root / "labels.csv").string() + ": header must start with id,label");
    }
    Dataset ds;
    std::size_t max_label = 0;
    for (const auto& row : labels.rows) {
        const std::filesystem::path img = root / (row[0] + ".pgm");
        if (!std::filesystem::exists(img)) {
            throw MissingFileError("labels.csv references sample '" + row[0] + "' but " + img.string() +
                                   " does not exist");
        }
        Sample s;
        s.id = row[0];
        s.label = parse_uint(row[1], "label of " + row[0]);
        s.image = read_pgm(img);
        max_label = std::max(max_label, s.label);
        ds.samples.push_back(std::move(s));
    }
    if (std::filesystem::exists(root / "classes.csv")) {
        const CsvTable classes = read_csv(root / "classes.csv");
        const std::size_t idx_col = classes.column("index"), name_col = classes.column("name");
        ds.class_names.resize(classes.rows.size());
        for (const auto& row : classes.rows) {
            const std::size_t i = parse_uint(row[idx_col], "classes.csv index");
            if (i >= ds.class_names.size()) throw LoaderError("classes.csv index " + row[idx_col] + " out of range");
            ds.class_names[i] = row[name_col];
        }
    } else {
        ds.class_names = default_class_names(ds.empty() ? 0 : max_label + 1);
    }
    if (std::filesystem::exists(root / "meta.csv")) {
        const CsvTable meta = read_csv(root / "meta.csv");
        std::map<std::string, std::size_t> by_id;
        for (std::size_t i = 0; i < ds.samples.size(); ++i) by_id[ds.samples[i].id] = i;
        for (const auto& row : meta.rows) {
            const auto it = by_id.find(row[0]);
            if (it == by_id.end()) continue;
            for (std::size_t c = 1; c < meta.header.size(); ++c) {
                ds.samples[it->second].meta[meta.header[c]] = parse_double(row[c], "meta.csv " + meta.header[c]);
            }
        }
    }
    ds.validate();
    return ds;
}

void save_directory(const Dataset& dataset, const std::filesystem::path& root) {
    std::filesystem::create_directories(root);
    std::string labels = "id,label\n";
    std::set<std::string> meta_keys;
    for (const Sample& s : dataset.samples) {
        write_pgm(root / (s.id + ".pgm"), s.image);
        labels += s.id + "," + std::to_string(s.label) + "\n";
        for (const auto& [k, v] : s.meta) meta_keys.insert(k);
    }
    write_file(root / "labels.csv", labels);
    std::string classes = "index,name\n";
    for (std::size_t i = 0; i < dataset.class_names.size(); ++i) {
        classes += std::to_string(i) + "," + dataset.class_names[i] + "\n";
    }
    write_file(root / "classes.csv", classes);
    if (!meta_keys.empty()) {
        std::string meta = "id";
        for (const auto& k : meta_keys) meta += "," + k;
        meta += "\n";
        for (const Sample& s : dataset.samples) {
            meta += s.id;
            for (const auto& k : meta_keys) {
                const auto it = s.meta.find(k);
                meta += "," + format_double(it == s.meta.end() ? 0.0 : it->second);
            }
            meta += "\n";
        }
        write_file(root / "meta.csv", meta);
    }
}

namespace {

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices, SplitTag tag) {
    Dataset out;
    out.class_names = ds.class_names;
    out.split = tag;
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) out.samples.push_back(ds.samples[i]);
    return out;
}

void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace

std::pair<Dataset, Dataset> stratified_split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ContractError("train fraction must lie strictly between 0 and 1");
    }
    Rng rng = make_stream(seed, "stratified-split");
    std::vector<std::vector<std::size_t>> by_class(std::max<std::size_t>(dataset.num_classes(), 1));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::size_t label = dataset.samples[i].label;
        if (label >= by_class.size()) by_class.resize(label + 1);
        by_class[label].push_back(i);
    }
    std::vector<bool> to_train(dataset.size(), false);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.empty()) continue;
        if (members.size() < 2) {
            log_warning("stratified split: class " + std::to_string(c) + " has fewer than 2 samples, all go to train");
            for (std::size_t i : members) to_train[i] = true;
            continue;
        }
        shuffle_indices(members, rng);
        const auto n_train =
            static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < n_train && k < members.size(); ++k) to_train[members[k]] = true;
    }
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i) (to_train[i] ? train_idx : test_idx).push_back(i);
    return {subset(dataset, train_idx, SplitTag::train), subset(dataset, test_idx, SplitTag::test)};
}

std::vector<Dataset> balanced_test_subsets(const Dataset& test, std::size_t majority_class, std::size_t k,
                                           std::uint64_t seed) {
    if (k == 0) throw ContractError("number of test subsets must be >= 1");
    std::vector<std::size_t> majority, minority;
    for (std::size_t i = 0; i < test.size(); ++i) {
        (test.samples[i].label == majority_class ? majority : minority).push_back(i);
    }
    if (k > majority.size()) {
        throw ContractError("cannot split " + std::to_string(majority.size()) + " majority samples into " +
                            std::to_string(k) + " subsets");
    }
    if (majority.size() % k != 0) {
        log_warning("majority count " + std::to_string(majority.size()) + " not divisible by " + std::to_string(k) +
                    "; last subset is smaller");
    }
    Rng rng = make_stream(seed, "balanced-subsets");
    shuffle_indices(majority, rng);
    const std::size_t chunk = (majority.size() + k - 1) / k;
    std::vector<Dataset> out;
    for (std::size_t s = 0; s < k; ++s) {
        const std::size_t lo = std::min(s * chunk, majority.size());
        const std::size_t hi = std::min(lo + chunk, majority.size());
        std::vector<std::size_t> idx(majority.begin() + static_cast<std::ptrdiff_t>(lo),
                                     majority.begin() + static_cast<std::ptrdiff_t>(hi));
        std::sort(idx.begin(), idx.end());
        idx.insert(idx.end(), minority.begin(), minority.end());
        std::sort(idx.begin(), idx.end());
        out.push_back(subset(test, idx, SplitTag::test));
    }
    return out;
}

Dataset collapse_to_binary(const Dataset& dataset, std::size_t normal_class) {
    if (normal_class >= dataset.num_classes()) throw DataError("normal class index out of range");
    Dataset out = dataset;
    out.class_names = {"normal", "abnormal"};
    for (Sample& s : out.samples) s.label = s.label == normal_class ? 0 : 1;
    return out;
}

Dataset exclude_classes(const Dataset& dataset, std::span<const std::string> names) {
    std::vector<std::size_t> remap(dataset.num_classes(), SIZE_MAX);
    Dataset out;
    out.split = dataset.split;
    for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
        if (std::find(names.begin(), names.end(), dataset.class_names[c]) != names.end()) continue;
        remap[c] = out.class_names.size();
        out.class_names.push_back(dataset.class_names[c]);
    }
    for (const std::string& n : names) {
        if (std::find(dataset.class_names.begin(), dataset.class_names.end(), n) == dataset.class_names.end()) {
            throw DataError("cannot exclude unknown class '" + n + "'");
        }
    }
    for (const Sample& s : dataset.samples) {
        if (remap[s.label] == SIZE_MAX) continue;
        Sample copy = s;
        copy.label = remap[s.label];
        out.samples.push_back(std::move(copy));
    }
    return out;
}

Tensor make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractError("make_batch needs at least one index");
    const Shape& s = dataset.samples.at(indices.front()).image.shape();
    const std::size_t per = shape_numel(s);
    Tensor batch({indices.size(), s[0], s[1], s[2]});
    auto out = batch.data();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Tensor& img = dataset.samples.at(indices[b]).image;
        if (img.shape() != s) throw DimensionError("mixed image shapes in batch");
        std::copy(img.data().begin(), img.data().end(), out.begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    return batch;
}

}  // namespace vogcl
