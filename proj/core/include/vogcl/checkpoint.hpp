#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vogcl/model.hpp"

namespace vogcl {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// On disk: "VOGC", u32 LE format_version, u32 LE header length, UTF-8 JSON
// header {format_version, epoch, arch, train_config_digest, parameters:
// [{name, shape}]}, then each parameter's values as little-endian IEEE-754
// doubles in header order.
struct ModelCheckpoint {
    std::uint32_t format_version = kCheckpointFormatVersion;
    std::size_t epoch = 0;
    ModelArch arch;
    std::vector<NamedTensor> parameters;
    std::uint64_t train_config_digest = 0;

    Model to_model() const;
};

ModelCheckpoint make_checkpoint(const Model& model, std::size_t epoch, std::uint64_t train_config_digest);

std::string encode_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
// Throws FormatError (bad magic), VersionError (newer format) or
// CorruptionError (truncated / inconsistent). When the file name follows
// checkpoint_filename(), its epoch must match the header.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// "ckpt_epoch026.vogc"
std::string checkpoint_filename(std::size_t epoch);

std::string arch_to_json(const ModelArch& arch);
ModelArch arch_from_json(const std::string& text);

}  // namespace vogcl
