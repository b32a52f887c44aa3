// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ecoref::zip {

struct Entry {
  std::string name;
  std::string data;

  bool operator==(const Entry&) const = default;
};

// Stored (uncompressed) PKZIP archive. Image payloads are already
// compressed or tiny, so deflate would only cost referee CPU.
std::string write_archive(std::span<const Entry> entries);

// Reads archives produced by write_archive and any other stored-only zip.
// Truncated bytes, bad signatures and CRC mismatches raise Error(kParse);
// nothing is returned on failure.
std::vector<Entry> read_archive(std::string_view bytes);

}  // namespace ecoref::zip
