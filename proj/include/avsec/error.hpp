/* Copyright 2026 The avsec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef AVSEC_ERROR_HPP_
#define AVSEC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace avsec {

// Base of every error thrown by the library. The CLI maps the concrete
// subclass onto a process exit code (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, unknown subcommands, invalid configuration values.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data: CSV/WAV/container parse failures,
// invariant violations, missing clips.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

// A test-fold clip was found inside a standardizer's fit set.
class LeakageError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf during training or a degenerate numeric quantity.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace avsec

#endif  // AVSEC_ERROR_HPP_
