#pragma once

#include <stdexcept>
#include <string>

namespace vogcl {

// Base of every error raised by the library. Subclasses name the contract
// that was violated so callers (and the CLI exit-code mapping) can dispatch.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class LabelError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class ArchError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class SamplerError : public Error { public: using Error::Error; };
class CheckpointError : public Error { public: using Error::Error; };

// Checkpoint file problems.
class FormatError : public Error { public: using Error::Error; };
class VersionError : public FormatError { public: using FormatError::FormatError; };
class CorruptionError : public FormatError { public: using FormatError::FormatError; };

// Dataset loader problems; each failure mode has its own type.
class LoaderError : public DataError { public: using DataError::DataError; };
class MagicMismatchError : public LoaderError { public: using LoaderError::LoaderError; };
class CountMismatchError : public LoaderError { public: using LoaderError::LoaderError; };
class MissingFileError : public LoaderError { public: using LoaderError::LoaderError; };

class UndefinedMetricError : public Error { public: using Error::Error; };

// Experiment harness.
class ConfigError : public Error { public: using Error::Error; };
class MissingPrerequisiteError : public Error { public: using Error::Error; };

}  // namespace vogcl
