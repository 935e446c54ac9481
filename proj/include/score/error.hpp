#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace score {

enum class ErrorKind {
    contract,       // caller violated a precondition
    parse,          // malformed JSON or binary input
    validation,     // well-formed input that violates a schema or invariant
    io,
    transport,      // gateway could not reach the backend
    cache_miss,     // replay mode asked for an uncached request
    model_reply,    // backend replied but the reply could not be used
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& message) : Error(ErrorKind::contract, message) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t byte_offset)
        : Error(ErrorKind::parse, message + " (at byte " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message)
        : Error(ErrorKind::validation, field + ": " + message), field_(std::move(field)), detail_(message) {}

    const std::string& field() const noexcept { return field_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string field_;
    std::string detail_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorKind::io, message) {}
};

class TransportError : public Error {
public:
    TransportError(const std::string& message, std::optional<int> status = std::nullopt)
        : Error(ErrorKind::transport, message), status_(status) {}

    std::optional<int> status() const noexcept { return status_; }

private:
    std::optional<int> status_;
};

class CacheMissError : public Error {
public:
    explicit CacheMissError(const std::string& key)
        : Error(ErrorKind::cache_miss, "uncached request " + key), key_(key) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// A backend reply that could not be turned into the expected structure.
/// `stage` names the consumer (extraction, summarization, sentiment, evaluation).
class ModelReplyError : public Error {
public:
    ModelReplyError(std::string stage, const std::string& message, std::string raw_reply)
        : Error(ErrorKind::model_reply, stage + " error: " + message),
          stage_(std::move(stage)),
          raw_reply_(std::move(raw_reply)) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& raw_reply() const noexcept { return raw_reply_; }

private:
    std::string stage_;
    std::string raw_reply_;
};

}  // namespace score
