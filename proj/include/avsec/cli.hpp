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

#ifndef AVSEC_CLI_HPP_
#define AVSEC_CLI_HPP_

#include <exception>
#include <iosfwd>

namespace avsec::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

// Maps an exception thrown by the library onto an exit code.
int exit_code_for(const std::exception_ptr& e);

// Subcommands: extract-features, build-avs, train, evaluate, ablate, cluster,
// report, serve. Every file output is staged under a temporary name and
// renamed only when the command succeeds, next to a `<output>.config.json`
// echo of the resolved options and SHA-256 hashes of the inputs.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace avsec::cli

#endif  // AVSEC_CLI_HPP_
