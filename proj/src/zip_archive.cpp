// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/zip_archive.hpp"

#include <zlib.h>

#include <algorithm>
#include <limits>

#include "ecoref/error.hpp"

namespace ecoref::zip {
namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
// 1980-01-01 00:00, the DOS epoch; a fixed stamp keeps archives reproducible.
constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t crc_of(std::string_view data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for payloads over 4 GiB.
  while (!data.empty()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(data.size(), 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data()), n);
    data.remove_prefix(n);
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void seek(std::size_t pos) {
    if (pos > bytes_.size()) fail("offset past end of archive");
    pos_ = pos;
  }
  std::size_t pos() const { return pos_; }

  std::uint16_t u16() {
    need(2);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += 2;
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  [[noreturn]] static void fail(const std::string& why) { throw Error(ErrorKind::kParse, "zip: " + why); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated archive");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string write_archive(std::span<const Entry> entries) {
  if (entries.size() > 0xffff) throw Error(ErrorKind::kInvalidInput, "zip: too many entries");
  std::string out;
  std::size_t total = 0;
  for (const auto& e : entries) total += 30 + 46 + 2 * e.name.size() + e.data.size();
  out.reserve(total + 22);

  std::vector<std::uint32_t> offsets, crcs;
  offsets.reserve(entries.size());
  crcs.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff || e.data.size() > std::numeric_limits<std::uint32_t>::max() ||
        out.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorKind::kInvalidInput, "zip: entry '" + e.name + "' too large");
    }
    offsets.push_back(static_cast<std::uint32_t>(out.size()));
    crcs.push_back(crc_of(e.data));
    put32(out, kLocalSig);
    put16(out, 10);  // version needed
    put16(out, 0);   // flags
    put16(out, 0);   // stored
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crcs.back());
    put32(out, static_cast<std::uint32_t>(e.data.size()));
    put32(out, static_cast<std::uint32_t>(e.data.size()));
    put16(out, static_cast<std::uint16_t>(e.name.size()));
    put16(out, 0);
    out += e.name;
    out += e.data;
  }

  const auto central_start = out.size();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    put32(out, kCentralSig);
    put16(out, 20);
    put16(out, 10);
    put16(out, 0);
    put16(out, 0);
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crcs[i]);
    put32(out, static_cast<std::uint32_t>(e.data.size()));
    put32(out, static_cast<std::uint32_t>(e.data.size()));
    put16(out, static_cast<std::uint16_t>(e.name.size()));
    put16(out, 0);  // extra
    put16(out, 0);  // comment
    put16(out, 0);  // disk
    put16(out, 0);  // internal attrs
    put32(out, 0);  // external attrs
    put32(out, offsets[i]);
    out += e.name;
  }
  const auto central_size = out.size() - central_start;

  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central_size));
  put32(out, static_cast<std::uint32_t>(central_start));
  put16(out, 0);
  return out;
}

std::vector<Entry> read_archive(std::string_view bytes) {
  if (bytes.size() < 22) Reader::fail("truncated archive");
  // The end record sits in the last 22 + 65535 bytes (comment length).
  std::size_t eocd = std::string_view::npos;
  const std::size_t lowest = bytes.size() > 22 + 0xffff ? bytes.size() - 22 - 0xffff : 0;
  for (std::size_t p = bytes.size() - 22 + 1; p-- > lowest;) {
    if (bytes.compare(p, 4, "PK\x05\x06") == 0) {
      eocd = p;
      break;
    }
  }
  if (eocd == std::string_view::npos) Reader::fail("end of central directory not found");

  Reader r(bytes);
  r.seek(eocd + 4);
  const auto disk = r.u16();
  const auto cd_disk = r.u16();
  const auto count_here = r.u16();
  const auto count = r.u16();
  const auto cd_size = r.u32();
  const auto cd_offset = r.u32();
  const auto comment_len = r.u16();
  if (disk != 0 || cd_disk != 0 || count_here != count) Reader::fail("multi-disk archives are not supported");
  if (eocd + 22 + comment_len != bytes.size()) Reader::fail("trailing bytes after end record");
  if (static_cast<std::uint64_t>(cd_offset) + cd_size > eocd) Reader::fail("central directory out of range");

  std::vector<Entry> entries;
  entries.reserve(count);
  r.seek(cd_offset);
  for (std::uint16_t i = 0; i < count; ++i) {
    if (r.u32() != kCentralSig) Reader::fail("bad central directory signature");
    r.u16();
    r.u16();
    const auto flags = r.u16();
    const auto method = r.u16();
    r.u16();
    r.u16();
    const auto crc = r.u32();
    const auto csize = r.u32();
    const auto usize = r.u32();
    const auto name_len = r.u16();
    const auto extra_len = r.u16();
    const auto cmt_len = r.u16();
    r.take(8);
    const auto local_offset = r.u32();
    std::string name(r.take(name_len));
    r.take(extra_len);
    r.take(cmt_len);
    if (method != 0 || csize != usize) Reader::fail("entry '" + name + "' is compressed");
    if (flags & 1) Reader::fail("entry '" + name + "' is encrypted");
    const auto resume = r.pos();

    r.seek(local_offset);
    if (r.u32() != kLocalSig) Reader::fail("bad local header for '" + name + "'");
    r.take(22);
    const auto lname_len = r.u16();
    const auto lextra_len = r.u16();
    if (r.take(lname_len) != name) Reader::fail("local name mismatch for '" + name + "'");
    r.take(lextra_len);
    std::string data(r.take(csize));
    if (r.pos() > cd_offset) Reader::fail("entry '" + name + "' overlaps central directory");
    if (crc_of(data) != crc) Reader::fail("crc mismatch for '" + name + "'");
    entries.push_back({std::move(name), std::move(data)});
    r.seek(resume);
  }
  return entries;
}

}  // namespace ecoref::zip
