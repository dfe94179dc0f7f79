/*
 * Copyright 2026 The chanprune Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
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

namespace chanprune {

// Base of every error the library throws. Subclasses map onto the CLI exit
// codes (see cli/commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or channel counts disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked out of order (e.g. backward without forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Caller-provided data is out of range.
class InputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Attempt to remove a channel that is tied to others through a residual add.
class CouplingError : public Error {
 public:
  using Error::Error;
};

// Attempt to remove every channel of a layer.
class DegenerateLayerError : public Error {
 public:
  using Error::Error;
};

// Exact enumeration requested beyond the supported player count.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

// Budget cannot be met. `tightest()` is the smallest kept fraction that is
// achievable under the constraints.
class PlanningError : public Error {
 public:
  PlanningError(const std::string& what, double tightest)
      : Error(what), tightest_(tightest) {}
  double tightest() const { return tightest_; }

 private:
  double tightest_;
};

// Non-finite value produced by a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace chanprune
