// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ecoref::cli {

// Runs one `ecoref` invocation. `args` excludes the program name. Returns the
// process exit code: 0 on success, 1 for usage errors, otherwise
// ecoref::exit_code() of the failure, with `error[<category>]: ...` on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Asks a running `serve` to shut down as if it had received SIGINT.
void request_shutdown();

}  // namespace ecoref::cli
