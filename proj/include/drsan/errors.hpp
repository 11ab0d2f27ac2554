#pragma once

#include <stdexcept>
#include <string>

namespace drsan {

// Violated operation precondition (shape mismatch, bad index, ...).
class ContractViolation : public std::runtime_error {
public:
    explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent network/training configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class ImageError : public std::runtime_error {
public:
    explicit ImageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Recognized container but a feature we do not read (16-bit, interlaced, ...).
class UnsupportedFormatError : public ImageError {
public:
    explicit UnsupportedFormatError(const std::string& msg) : ImageError(msg) {}
};

// Corrupt or malformed stream.
class DecodeError : public ImageError {
public:
    explicit DecodeError(const std::string& msg) : ImageError(msg) {}
};

class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

class CheckpointVersionError : public CheckpointError {
public:
    explicit CheckpointVersionError(const std::string& msg) : CheckpointError(msg) {}
};

class CheckpointTruncatedError : public CheckpointError {
public:
    explicit CheckpointTruncatedError(const std::string& msg) : CheckpointError(msg) {}
};

class CheckpointMismatchError : public CheckpointError {
public:
    explicit CheckpointMismatchError(const std::string& msg) : CheckpointError(msg) {}
};

class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

class EmptyDatasetError : public std::runtime_error {
public:
    explicit EmptyDatasetError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace drsan
