// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lidarsim {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. `offset()` is the byte position where parsing
/// stopped.
class ParseError : public Error {
 public:
  ParseError(std::string path, std::size_t offset, const std::string& what)
      : Error(path + " @" + std::to_string(offset) + ": " + what),
        path_(std::move(path)),
        offset_(offset) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string path_;
  std::size_t offset_;
};

/// Dataset loading failure, naming the file and (when known) the frame.
class LoadError : public Error {
 public:
  LoadError(std::string path, std::optional<std::size_t> frame,
            const std::string& what)
      : Error(format(path, frame, what)), path_(std::move(path)), frame_(frame) {}

  const std::string& path() const noexcept { return path_; }
  std::optional<std::size_t> frame() const noexcept { return frame_; }

 private:
  static std::string format(const std::string& path,
                            std::optional<std::size_t> frame,
                            const std::string& what) {
    std::string s;
    if (frame) s += "frame " + std::to_string(*frame) + ": ";
    s += what;
    if (!path.empty()) s += " (" + path + ")";
    return s;
  }

  std::string path_;
  std::optional<std::size_t> frame_;
};

/// Pipeline configuration problems; `violations()` lists every bad field.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept {
    return violations_;
  }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid configuration:";
    for (const auto& item : v) s += "\n  - " + item;
    return s;
  }

  std::vector<std::string> violations_;
};

class EmptyMapError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class CompositionError : public Error {
 public:
  explicit CompositionError(std::vector<std::string> missing)
      : Error(join(missing)), missing_(std::move(missing)) {}

  const std::vector<std::string>& missing_ids() const noexcept {
    return missing_;
  }

 private:
  static std::string join(const std::vector<std::string>& ids) {
    std::string s = "missing assets:";
    for (const auto& id : ids) s += " " + id;
    return s;
  }

  std::vector<std::string> missing_;
};

/// Two components disagree about a quantity they must share.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace lidarsim
