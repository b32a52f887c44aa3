// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ecoref {

enum class ErrorKind {
  kInvalidInput,
  kParse,
  kConfig,
  kIo,
  kAuthentication,
  kConflict,
  kSession,
  kState,
  kNotFound,
  kInvalidRequest,
  kMeterFailure,
  kNetwork,
};

// Stable machine-parseable name, e.g. "invalid-input".
std::string_view to_string(ErrorKind kind);
std::optional<ErrorKind> error_kind_from_string(std::string_view name);

// Process exit code used by the CLI for each category. Never 0.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ecoref
