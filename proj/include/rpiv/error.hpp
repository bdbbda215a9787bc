#pragma once

#include <stdexcept>
#include <string>

namespace rpiv {

/// Malformed or unusable input data: bad CSV, missing columns, invalid
/// configuration, samples too small to split.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Rank or identification failure inside an estimator (singular moment
/// matrices, just-identified J-test, degenerate fits).
class RankError : public std::runtime_error {
 public:
  explicit RankError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rpiv
