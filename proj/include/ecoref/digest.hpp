// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace ecoref {

// MD5 of the payload as 32 lowercase hex digits.
std::string md5_hex(std::string_view payload);

}  // namespace ecoref
