#pragma once

#include <stdexcept>
#include <string>

namespace cogc {

// Invalid argument values (bad M/s, non-positive SNR, malformed quantizer
// bounds, ...). Maps to CLI exit code 2 when raised during config handling.
class InvalidParams : public std::invalid_argument {
public:
    explicit InvalidParams(const std::string& what) : std::invalid_argument(what) {}
};

// Configuration file problems; carries the offending field name in the message.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Scheme construction exhausted its retry budget (degenerate random draws).
class ConstructionFailed : public std::runtime_error {
public:
    explicit ConstructionFailed(const std::string& what) : std::runtime_error(what) {}
};

class IndexOutOfRange : public std::out_of_range {
public:
    explicit IndexOutOfRange(const std::string& what) : std::out_of_range(what) {}
};

class EmptyShard : public std::runtime_error {
public:
    explicit EmptyShard(const std::string& what) : std::runtime_error(what) {}
};

class InfeasibleSkew : public std::runtime_error {
public:
    explicit InfeasibleSkew(const std::string& what) : std::runtime_error(what) {}
};

class SchemeMismatch : public std::runtime_error {
public:
    explicit SchemeMismatch(const std::string& what) : std::runtime_error(what) {}
};

// Wall-round cap hit before the stopping rule was satisfied (pathological
// outage probability).
class NonTermination : public std::runtime_error {
public:
    explicit NonTermination(const std::string& what) : std::runtime_error(what) {}
};

// Bound-series denominator is non-positive already at the first term.
class DenominatorViolation : public std::runtime_error {
public:
    explicit DenominatorViolation(const std::string& what) : std::runtime_error(what) {}
};

// Truncated geometric tail mass too large for the series sum to be meaningful.
class TailTooHeavy : public std::runtime_error {
public:
    explicit TailTooHeavy(const std::string& what) : std::runtime_error(what) {}
};

class NonPositiveH1 : public std::runtime_error {
public:
    explicit NonPositiveH1(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cogc
