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

#ifndef TEMPTEST_CLI_H_
#define TEMPTEST_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace temptest {

inline constexpr const char kToolVersion[] = "0.1.0";

// Runs the command line `args` (without the program name). Returns the
// process exit code; see ExitCode.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

// Manifest for one command run. Written as manifest.json next to outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  nlohmann::json seeds = nlohmann::json::object();
  std::string generator;
  std::string version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  // file name -> sha256
  std::map<std::string, std::string> outputs;

  nlohmann::json ToJson() const;
};

// Hashes `files` (which must live in `dir`) into the manifest and writes
// dir/manifest.json.
void WriteManifest(RunManifest manifest, const std::filesystem::path& dir,
                   const std::vector<std::filesystem::path>& files);

}  // namespace temptest

#endif  // TEMPTEST_CLI_H_
