#pragma once

#include <stdexcept>
#include <string>

namespace ido {

// Precondition violated by caller-supplied data (shapes, ranges, parameters).
class InvalidInput : public std::invalid_argument {
public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// A required artifact (checkpoint, earlier training stage) is missing.
class DependencyError : public std::runtime_error {
public:
  explicit DependencyError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or unreadable configuration, or an unusable path in it.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Corrupt or unreadable file contents.
class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

}  // namespace ido
