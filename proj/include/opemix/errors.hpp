// Copyright 2026 The ope-mix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OPEMIX_ERRORS_HPP
#define OPEMIX_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace opemix {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_{line} {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Data violates a modelling assumption (support, bounds, sizes).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A matrix expected to be symmetric positive definite is not.
class NotSpdError : public Error {
 public:
  explicit NotSpdError(std::size_t pivot)
      : Error("matrix is not positive definite (pivot " + std::to_string(pivot) + ")"), pivot_{pivot} {}

  [[nodiscard]] std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Estimator inputs that cannot produce a finite value (zero normalizer, constant coordinates).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace opemix

#endif  // OPEMIX_ERRORS_HPP
