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

#include "temptest/dataset.h"

#include <fstream>
#include <istream>
#include <ostream>

#include "temptest/error.h"

namespace temptest {

nlohmann::json RecordToJson(const SequenceRecord& record) {
  nlohmann::json meta = record.meta;
  if (!record.prompt.empty()) meta["prompt"] = record.prompt;
  return {{"id", record.id},
          {"label", LabelName(record.label)},
          {"tokens", record.tokens},
          {"meta", meta}};
}

SequenceRecord RecordFromJson(const nlohmann::json& j) {
  SequenceRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.label = ParseLabel(j.at("label").get<std::string>());
    r.tokens = j.at("tokens").get<std::vector<TokenId>>();
    if (j.contains("meta")) {
      r.meta = j.at("meta");
      if (!r.meta.is_object()) throw ConfigError("meta must be an object");
      if (r.meta.contains("prompt")) {
        r.prompt = r.meta.at("prompt").get<std::vector<TokenId>>();
        r.meta.erase("prompt");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset record: ") + e.what());
  }
  if (r.tokens.empty()) {
    throw ConfigError("record '" + r.id + "' has no tokens");
  }
  return r;
}

std::vector<SequenceRecord> ReadDataset(std::istream& in,
                                        const std::string& source) {
  std::vector<SequenceRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
    out.push_back(RecordFromJson(j));
  }
  return out;
}

std::vector<SequenceRecord> ReadDataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read dataset " + path.string());
  return ReadDataset(in, path.string());
}

void WriteDataset(std::ostream& out,
                  const std::vector<SequenceRecord>& records) {
  for (const auto& r : records) out << RecordToJson(r).dump() << "\n";
}

void WriteDataset(const std::filesystem::path& path,
                  const std::vector<SequenceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset " + path.string());
  WriteDataset(out, records);
}

void ValidateRecord(const SequenceRecord& record, const Vocabulary& vocab) {
  if (record.tokens.empty()) {
    throw ConfigError("record '" + record.id + "' has no tokens");
  }
  for (const auto* seq : {&record.tokens, &record.prompt}) {
    for (TokenId t : *seq) {
      if (!vocab.Contains(t)) {
        throw ConfigError("record '" + record.id + "' has token " +
                          std::to_string(t) + " outside vocabulary of size " +
                          std::to_string(vocab.size()));
      }
    }
  }
}

}  // namespace temptest
