/*
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed manifest or config text. Carries the 1-based line when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A loaded object violates a data-model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A record lacks data that an operation needs (features, scores, accent...).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Tensor or parameter shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument to a numeric routine (out-of-range step, empty input...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Binary file format errors; `kind` tells them apart.
class FormatError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kBadVersion, kTruncated, kTrailingBytes, kNonFinite, kHeader };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Non-finite activation during a decider forward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cascade
