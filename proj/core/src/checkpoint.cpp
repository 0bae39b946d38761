#include "vogcl/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <regex>

#include <json.hpp>

#include "vogcl/errors.hpp"
#include "vogcl/io.hpp"

namespace vogcl {

namespace {

constexpr char kMagic[4] = {'V', 'O', 'G', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    return v;
}

void put_f64(std::string& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const std::string& in, std::size_t offset) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    return std::bit_cast<double>(bits);
}

nlohmann::ordered_json arch_json(const ModelArch& arch) {
    nlohmann::ordered_json j;
    j["input_shape"] = {arch.channels, arch.height, arch.width};
    j["conv_blocks"] = nlohmann::ordered_json::array();
    for (const ConvBlock& b : arch.conv_blocks) {
        j["conv_blocks"].push_back({{"filters", b.filters}, {"kernel", b.kernel}, {"pool", b.pool}});
    }
    j["dense_widths"] = arch.dense_widths;
    j["num_classes"] = arch.num_classes;
    return j;
}

ModelArch arch_from(const nlohmann::ordered_json& j) {
    ModelArch arch;
    const auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw CorruptionError("arch input_shape must have three entries");
    arch.channels = shape[0];
    arch.height = shape[1];
    arch.width = shape[2];
    arch.conv_blocks.clear();
    for (const auto& b : j.at("conv_blocks")) {
        arch.conv_blocks.push_back({b.at("filters").get<std::size_t>(), b.at("kernel").get<std::size_t>(),
                                    b.at("pool").get<std::size_t>()});
    }
    arch.dense_widths = j.at("dense_widths").get<std::vector<std::size_t>>();
    arch.num_classes = j.at("num_classes").get<std::size_t>();
    return arch;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string arch_to_json(const ModelArch& arch) { return arch_json(arch).dump(); }

ModelArch arch_from_json(const std::string& text) { return arch_from(nlohmann::ordered_json::parse(text)); }

Model ModelCheckpoint::to_model() const { return model_from_parameters(arch, parameters); }

ModelCheckpoint make_checkpoint(const Model& model, std::size_t epoch, std::uint64_t train_config_digest) {
    ModelCheckpoint c;
    c.epoch = epoch;
    c.arch = model.arch;
    c.parameters = model.parameters;
    for (NamedTensor& p : c.parameters) p.tensor.clear_grad();
    c.train_config_digest = train_config_digest;
    return c;
}

std::string checkpoint_filename(std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_epoch%03zu.vogc", epoch);
    return buf;
}

std::string encode_checkpoint(const ModelCheckpoint& checkpoint) {
    nlohmann::ordered_json header;
    header["format_version"] = checkpoint.format_version;
    header["epoch"] = checkpoint.epoch;
    header["arch"] = arch_json(checkpoint.arch);
    header["train_config_digest"] = hex64(checkpoint.train_config_digest);
    header["parameters"] = nlohmann::ordered_json::array();
    for (const NamedTensor& p : checkpoint.parameters) {
        header["parameters"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    }
    const std::string text = header.dump();
    std::string out(kMagic, 4);
    put_u32(out, checkpoint.format_version);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (const NamedTensor& p : checkpoint.parameters) {
        for (double v : p.tensor.data()) put_f64(out, v);
    }
    return out;
}

ModelCheckpoint decode_checkpoint(const std::string& bytes, const std::string& source) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(source + ": not a checkpoint (bad magic)");
    }
    if (bytes.size() < 12) throw CorruptionError(source + ": truncated checkpoint header");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version == 0 || version > kCheckpointFormatVersion) {
        throw VersionError(source + ": checkpoint format version " + std::to_string(version) +
                           " is not supported (this reader handles up to " +
                           std::to_string(kCheckpointFormatVersion) + ")");
    }
    const std::uint32_t header_len = get_u32(bytes, 8);
    if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) {
        throw CorruptionError(source + ": truncated checkpoint header");
    }
    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(bytes.substr(12, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(source + ": unreadable checkpoint header: " + e.what());
    }

    ModelCheckpoint c;
    std::size_t offset = 12 + header_len;
    try {
        c.format_version = header.at("format_version").get<std::uint32_t>();
        if (c.format_version != version) throw CorruptionError(source + ": header version disagrees with preamble");
        c.epoch = header.at("epoch").get<std::size_t>();
        c.arch = arch_from(header.at("arch"));
        c.train_config_digest = std::stoull(header.at("train_config_digest").get<std::string>(), nullptr, 16);
        for (const auto& p : header.at("parameters")) {
            Shape shape = p.at("shape").get<Shape>();
            const std::size_t n = shape_numel(shape);
            if (bytes.size() < offset + 8 * n) throw CorruptionError(source + ": truncated parameter data");
            std::vector<double> values(n);
            for (std::size_t i = 0; i < n; ++i) values[i] = get_f64(bytes, offset + 8 * i);
            offset += 8 * n;
            c.parameters.push_back({p.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(source + ": malformed checkpoint header: " + e.what());
    } catch (const DimensionError& e) {
        throw CorruptionError(source + ": bad parameter shape: " + e.what());
    }
    if (offset != bytes.size()) throw CorruptionError(source + ": trailing bytes after parameter data");
    try {
        (void)c.to_model();
    } catch (const ArchError& e) {
        throw CorruptionError(source + ": parameters inconsistent with arch: " + e.what());
    }
    return c;
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(checkpoint));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingFileError("checkpoint " + path.string() + " does not exist");
    ModelCheckpoint c = decode_checkpoint(read_file(path), path.string());
    static const std::regex pattern(R"(ckpt_epoch(\d+)\.vogc)");
    std::smatch m;
    const std::string name = path.filename().string();
    if (std::regex_match(name, m, pattern) && std::stoull(m[1].str()) != c.epoch) {
        throw CorruptionError(path.string() + ": file name says epoch " + m[1].str() + " but header says " +
                              std::to_string(c.epoch));
    }
    return c;
}

}  // namespace vogcl
