// Copyright 2026 The TempTest Authors.
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

#ifndef TEMPTEST_ERROR_H_
#define TEMPTEST_ERROR_H_

#include <stdexcept>
#include <string>

namespace temptest {

// Process exit codes. Every error class maps to exactly one of these.
enum class ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kCapability = 3,
  kProvider = 4,
  kCapExceeded = 5,
  kUnscorable = 6,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitCode code() const { return ExitCode::kInternal; }
};

// Invalid arguments, malformed files or configs, violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::kConfig; }
};

// A provider cannot supply what a statistic needs (e.g. TempNorm from a
// top-n-only backend).
class CapabilityError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::kCapability; }
};

// Network or remote-server failure. `retriable` is false once the retry
// budget is spent or the server rejected the request outright.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool retriable)
      : Error(what), retriable_(retriable) {}
  ExitCode code() const override { return ExitCode::kProvider; }
  bool retriable() const { return retriable_; }

 private:
  bool retriable_;
};

// Exhaustive enumeration would exceed the configured sequence cap.
class CapExceededError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::kCapExceeded; }
};

// A sequence contains a zero-probability token; its per-token statistics are
// undefined.
class UnscorableError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::kUnscorable; }
};

}  // namespace temptest

#endif  // TEMPTEST_ERROR_H_
