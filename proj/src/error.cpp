// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/error.hpp"

namespace ecoref {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kAuthentication: return "authentication";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kSession: return "session";
    case ErrorKind::kState: return "state";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kInvalidRequest: return "invalid-request";
    case ErrorKind::kMeterFailure: return "meter-failure";
    case ErrorKind::kNetwork: return "network";
  }
  return "unknown";
}

std::optional<ErrorKind> error_kind_from_string(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(ErrorKind::kNetwork); ++k) {
    if (to_string(static_cast<ErrorKind>(k)) == name) return static_cast<ErrorKind>(k);
  }
  return std::nullopt;
}

int exit_code(ErrorKind kind) {
  return 2 + static_cast<int>(kind);
}

}  // namespace ecoref
