#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ragtutor {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configuration value could not be parsed. `key()` names the offending variable.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Parsed configuration violates a cross-field constraint.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Caller passed arguments that violate an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Input has no meaningful result (e.g. normalizing a zero vector).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Network-level failure talking to an external service.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts = 1)
        : Error(what), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

/// The remote side answered, but not in the agreed wire format.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Remote rejected our credentials. Not retryable.
class AuthError : public Error {
public:
    using Error::Error;
};

/// Generation stopped mid-stream. Carries whatever arrived before the break.
class PartialResultError : public Error {
public:
    PartialResultError(const std::string& what, std::string partial_text, int tokens_received)
        : Error(what), partial_text_(std::move(partial_text)), tokens_received_(tokens_received) {}
    const std::string& partial_text() const noexcept { return partial_text_; }
    int tokens_received() const noexcept { return tokens_received_; }

private:
    std::string partial_text_;
    int tokens_received_;
};

/// Prompt template plus question alone do not fit into the context window.
class BudgetExceededError : public Error {
public:
    using Error::Error;
};

/// A persisted index failed validation on load.
class IntegrityError : public Error {
public:
    enum class Kind { BadMagic, VersionMismatch, Truncated, ChecksumMismatch, Malformed };

    IntegrityError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace ragtutor
