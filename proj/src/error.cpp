// Copyright 2026 The bellgate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bellgate/error.hpp"

namespace bellgate {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_spec: return "invalid-spec";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::non_hermitian: return "non-hermitian";
    case ErrorKind::schedule_inconsistent: return "schedule-inconsistent";
    case ErrorKind::calibration_failed: return "calibration-failed";
    case ErrorKind::estimation_failed: return "estimation-failed";
    case ErrorKind::feasibility: return "feasibility";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace bellgate
