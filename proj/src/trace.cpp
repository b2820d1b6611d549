// Copyright 2026 the realmsim authors.
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

#include "realmsim/trace.hpp"

#include <fstream>

namespace realmsim {

const char* to_string(World w) {
  switch (w) {
    case World::Normal: return "normal";
    case World::Secure: return "secure";
    case World::Realm: return "realm";
    case World::Root: return "root";
  }
  return "?";
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Bn: return "bn";
    case Mode::Br: return "br";
    case Mode::Dmi: return "dmi";
  }
  return "?";
}

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Assert: return "assert";
    case EventKind::Deliver: return "deliver";
    case EventKind::Trap: return "trap";
    case EventKind::Smc: return "smc";
    case EventKind::Rmi: return "rmi";
    case EventKind::Rsi: return "rsi";
    case EventKind::Gpf: return "gpf";
    case EventKind::WorldSwitch: return "world-switch";
    case EventKind::VgicFire: return "vgic-fire";
    case EventKind::Violation: return "violation";
    case EventKind::Reset: return "reset";
    case EventKind::Dma: return "dma";
    case EventKind::Mmio: return "mmio";
    case EventKind::GicOp: return "gic";
    case EventKind::LogWrite: return "log-write";
    case EventKind::Eoi: return "eoi";
    case EventKind::GptUpdate: return "gpt-update";
    case EventKind::SmmuSync: return "smmu-sync";
    case EventKind::Flush: return "flush";
    case EventKind::Measure: return "measure";
    case EventKind::Note: return "note";
  }
  return "?";
}

namespace {

void append_json_string(std::string& out, std::string_view s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
}

} // namespace

uint64_t TraceLog::emit(EventKind kind, std::initializer_list<TraceField> fields) {
  TraceRecord rec;
  rec.step = ++step_;
  rec.kind = kind;

  std::string& line = rec.line;
  line.reserve(64);
  line += "{\"step\":";
  line += std::to_string(rec.step);
  line += ",\"kind\":\"";
  line += to_string(kind);
  line += '"';
  for (const TraceField& f : fields) {
    line += ",\"";
    line += f.key;
    line += "\":";
    if (std::holds_alternative<uint64_t>(f.value)) {
      line += std::to_string(std::get<uint64_t>(f.value));
    } else if (std::holds_alternative<int64_t>(f.value)) {
      line += std::to_string(std::get<int64_t>(f.value));
    } else if (std::holds_alternative<bool>(f.value)) {
      line += std::get<bool>(f.value) ? "true" : "false";
    } else {
      append_json_string(line, std::get<std::string>(f.value));
    }

    std::string_view key{f.key};
    if (key == "to") {
      if (const auto* s = std::get_if<std::string>(&f.value)) {
        if (*s == "root") rec.world = World::Root;
        else if (*s == "realm") rec.world = World::Realm;
        else if (*s == "secure") rec.world = World::Secure;
        else rec.world = World::Normal;
      }
    } else if (key == "id") {
      if (const auto* u = std::get_if<uint64_t>(&f.value)) rec.id = static_cast<IntId>(*u);
    } else if (key == "op" || key == "check") {
      if (const auto* s = std::get_if<std::string>(&f.value)) rec.detail = *s;
    }
  }
  line += '}';

  records_.push_back(std::move(rec));
  return step_;
}

std::string TraceLog::to_text() const {
  std::string out;
  for (const TraceRecord& r : records_) {
    out += r.line;
    out += '\n';
  }
  return out;
}

Status TraceLog::write_file(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) return Status::error("cannot open trace file: " + path);
  f << to_text();
  if (!f) return Status::error("failed writing trace file: " + path);
  return Status::success();
}

} // namespace realmsim
