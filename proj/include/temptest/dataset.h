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

#ifndef TEMPTEST_DATASET_H_
#define TEMPTEST_DATASET_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "temptest/lm.h"

namespace temptest {

// Dataset JSONL line: {"id", "label", "tokens", "meta"}. A shared prompt is
// carried as meta.prompt.
nlohmann::json RecordToJson(const SequenceRecord& record);
SequenceRecord RecordFromJson(const nlohmann::json& j);

std::vector<SequenceRecord> ReadDataset(const std::filesystem::path& path);
std::vector<SequenceRecord> ReadDataset(std::istream& in,
                                        const std::string& source = "<stream>");
void WriteDataset(const std::filesystem::path& path,
                  const std::vector<SequenceRecord>& records);
void WriteDataset(std::ostream& out,
                  const std::vector<SequenceRecord>& records);

// Throws ConfigError when a record is empty or has ids outside `vocab`.
void ValidateRecord(const SequenceRecord& record, const Vocabulary& vocab);

}  // namespace temptest

#endif  // TEMPTEST_DATASET_H_
