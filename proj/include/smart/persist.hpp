// Copyright 2026 The SMART Retrieval Authors.
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

// SMRT embedding dump container.
//
// All integers little-endian, all reals IEEE-754 binary32 unless noted.
//
//   header (24 bytes)
//     0  magic        "SMRT"
//     4  version      u32 = 1
//     8  dim          u32
//    12  record_count u64
//    20  flags        u32   bit 0: token rows pre-normalized
//                           bit 1: adapter parameter file
//                           bit 2: pooled-only records allowed
//   offset table      record_count x u64 absolute file offsets
//   records, back to back; the last one ends at end of file
//
//   embedding record
//     seq_id u64 | layer_id u16 | n_tokens u32 | roles u8[n_tokens]
//     | pooled f32[dim] | tokens f32[n_tokens * dim] row-major
//     | crc32 u32 over every preceding byte of the record
//
//   adapter record (flags bit 1, exactly one record, header dim = H)
//     hidden u32 | out u32 | ln_epsilon f64 | ln_scale f32[H]
//     | ln_shift f32[H] | proj_weight f32[H * out] row-major
//     | proj_bias f32[out] | crc32 u32
//
// The manifest is a JSON sidecar with keys source_model, layer_ids, dim,
// record_count, created_at, format_version.

#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/crc.hpp>
#include <json.hpp>

#include "smart/adapter.hpp"
#include "smart/core_types.hpp"
#include "smart/error.hpp"
#include "smart/matrix.hpp"

namespace smart {

inline constexpr char kDumpMagic[4] = {'S', 'M', 'R', 'T'};
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::size_t kHeaderSize = 24;

inline constexpr std::uint32_t kFlagPreNormalized = 1u << 0;
inline constexpr std::uint32_t kFlagAdapterParams = 1u << 1;
inline constexpr std::uint32_t kFlagPooledOnly = 1u << 2;

inline constexpr double kValidatorNormTolerance = 1e-3;

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  void seal_crc() { u32(crc32(buf_)); }

  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  bool has(std::size_t n) const { return b_.size() - at_ >= n; }
  std::size_t position() const { return at_; }
  std::size_t remaining() const { return b_.size() - at_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

 private:
  std::uint64_t get(int n) {
    if (!has(static_cast<std::size_t>(n))) {
      throw Error(ErrorCode::kTruncatedFile, "read past end of buffer");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[at_ + i]) << (8 * i);
    at_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t at_ = 0;
};

inline std::uint64_t embedding_record_size(std::size_t dim, std::size_t n) {
  return 8 + 2 + 4 + n + 4ull * dim * (1 + n) + 4;
}

}  // namespace detail

struct DumpHeader {
  std::uint32_t version = kDumpVersion;
  std::uint32_t dim = 0;
  std::uint64_t record_count = 0;
  std::uint32_t flags = 0;
};

inline std::vector<std::uint8_t> encode_header(const DumpHeader& h) {
  detail::ByteWriter w;
  for (char c : kDumpMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(h.version);
  w.u32(h.dim);
  w.u64(h.record_count);
  w.u32(h.flags);
  return std::move(w.bytes());
}

inline std::vector<std::uint8_t> encode_record(const SequenceEmbedding& e) {
  detail::ByteWriter w;
  w.u64(e.seq_id());
  w.u16(e.layer_id());
  w.u32(static_cast<std::uint32_t>(e.num_tokens()));
  for (auto r : e.roles()) w.u8(static_cast<std::uint8_t>(r));
  for (float v : e.pooled()) w.f32(v);
  for (float v : e.tokens().data()) w.f32(v);
  w.seal_crc();
  return std::move(w.bytes());
}

// Record fields as stored, before any SequenceEmbedding invariant checks.
struct RawRecord {
  std::uint64_t seq_id = 0;
  std::uint16_t layer_id = 0;
  std::vector<std::uint8_t> roles;
  std::vector<float> pooled;
  std::vector<float> tokens;
};

// Parses one record slice; the checksum is verified first so any corrupted
// byte surfaces as ChecksumMismatch(index).
inline RawRecord decode_record(std::span<const std::uint8_t> slice,
                               std::size_t dim, std::uint64_t index) {
  if (slice.size() < detail::embedding_record_size(dim, 0)) {
    throw Error(ErrorCode::kTruncatedFile, "record shorter than minimum",
                index);
  }
  auto body = slice.first(slice.size() - 4);
  detail::ByteReader tail(slice.last(4));
  if (crc32(body) != tail.u32()) {
    throw Error(ErrorCode::kChecksumMismatch, "record checksum mismatch",
                index);
  }
  detail::ByteReader r(body);
  RawRecord rec;
  rec.seq_id = r.u64();
  rec.layer_id = r.u16();
  const std::uint32_t n = r.u32();
  if (detail::embedding_record_size(dim, n) != slice.size()) {
    throw Error(ErrorCode::kTruncatedFile,
                "record length does not match its token count", index);
  }
  rec.roles.resize(n);
  for (auto& b : rec.roles) b = r.u8();
  rec.pooled.resize(dim);
  for (auto& v : rec.pooled) v = r.f32();
  rec.tokens.resize(static_cast<std::size_t>(n) * dim);
  for (auto& v : rec.tokens) v = r.f32();
  return rec;
}

inline SequenceEmbedding to_embedding(RawRecord rec, std::size_t dim,
                                      std::uint64_t index) {
  std::vector<TokenRole> roles;
  roles.reserve(rec.roles.size());
  for (auto b : rec.roles) {
    if (b >= kNumTokenRoles) {
      throw Error(ErrorCode::kInvalidEmbedding, "role byte out of range",
                  index);
    }
    roles.push_back(static_cast<TokenRole>(b));
  }
  const std::size_t n = roles.size();
  try {
    return SequenceEmbedding(rec.seq_id, rec.layer_id, std::move(rec.pooled),
                             Matrix(n, dim, std::move(rec.tokens)),
                             std::move(roles));
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), index);
  }
}

namespace detail {

class FileHandle {
 public:
  FileHandle() = default;
  explicit FileHandle(int fd) : fd_(fd) {}
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
  FileHandle(FileHandle&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileHandle& operator=(FileHandle&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~FileHandle() { reset(); }

  int get() const { return fd_; }

 private:
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

inline void write_all(std::ofstream& out, std::span<const std::uint8_t> b,
                      const std::string& path) {
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed: " + path);
}

}  // namespace detail

struct DumpSummary {
  std::uint64_t record_count = 0;
  std::uint32_t dim = 0;
  std::uint64_t bytes = 0;
  std::set<std::uint16_t> layer_ids;
};

// Byte-deterministic for identical input. `dim` is only consulted when
// `records` is empty.
inline DumpSummary write_dump(std::span<const SequenceEmbedding> records,
                              const std::string& path, std::uint32_t flags = 0,
                              std::uint32_t dim = 0) {
  if (!records.empty()) dim = static_cast<std::uint32_t>(records.front().dim());
  DumpSummary summary;
  summary.dim = dim;
  summary.record_count = records.size();
  std::uint64_t offset = kHeaderSize + 8ull * records.size();
  std::vector<std::uint64_t> offsets;
  offsets.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].dim() != dim) {
      throw Error(ErrorCode::kHeterogeneousDim, "record width differs", i);
    }
    if (!(flags & kFlagPooledOnly) && !records[i].pooling_index()) {
      throw Error(ErrorCode::kInvalidEmbedding,
                  "record has no pooling token (set the pooled-only flag)", i);
    }
    offsets.push_back(offset);
    offset += detail::embedding_record_size(dim, records[i].num_tokens());
    summary.layer_ids.insert(records[i].layer_id());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open for writing: " + path);
  detail::write_all(out, encode_header({kDumpVersion, dim, records.size(), flags}),
                    path);
  detail::ByteWriter table;
  for (auto o : offsets) table.u64(o);
  detail::write_all(out, table.bytes(), path);
  for (const auto& r : records) detail::write_all(out, encode_record(r), path);
  out.flush();
  if (!out) throw Error(ErrorCode::kIoFailure, "flush failed: " + path);
  summary.bytes = offset;
  return summary;
}

// Random-access reader. Header and offset table are read on open; each
// record is read with pread() and checksum-verified on access, so concurrent
// calls to record() are safe.
class DumpReader {
 public:
  explicit DumpReader(const std::string& path) : path_(path) {
    fd_ = detail::FileHandle(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
    if (fd_.get() < 0) {
      throw Error(ErrorCode::kIoFailure,
                  "cannot open " + path + ": " + std::strerror(errno));
    }
    struct stat st {};
    if (::fstat(fd_.get(), &st) != 0) {
      throw Error(ErrorCode::kIoFailure, "cannot stat " + path);
    }
    file_size_ = static_cast<std::uint64_t>(st.st_size);
    if (file_size_ < kHeaderSize) {
      throw Error(ErrorCode::kTruncatedFile, "file shorter than header");
    }
    auto head = read_at(0, kHeaderSize);
    if (std::memcmp(head.data(), kDumpMagic, 4) != 0) {
      throw Error(ErrorCode::kBadMagic, "not an SMRT file: " + path);
    }
    detail::ByteReader r(std::span<const std::uint8_t>(head).subspan(4));
    header_.version = r.u32();
    header_.dim = r.u32();
    header_.record_count = r.u64();
    header_.flags = r.u32();
    if (header_.version != kDumpVersion) {
      throw Error(ErrorCode::kUnsupportedVersion,
                  "version " + std::to_string(header_.version));
    }
    const std::uint64_t n = header_.record_count;
    if (n > (file_size_ - kHeaderSize) / 8) {
      throw Error(ErrorCode::kTruncatedFile, "offset table exceeds file");
    }
    auto table = read_at(kHeaderSize, 8 * n);
    detail::ByteReader tr(table);
    offsets_.resize(n);
    const std::uint64_t table_end = kHeaderSize + 8 * n;
    for (std::uint64_t i = 0; i < n; ++i) {
      offsets_[i] = tr.u64();
      const std::uint64_t lower = i == 0 ? table_end : offsets_[i - 1] + 1;
      if (offsets_[i] < lower || offsets_[i] >= file_size_) {
        throw Error(ErrorCode::kTruncatedFile, "offset out of bounds", i);
      }
    }
  }

  const DumpHeader& header() const { return header_; }
  std::size_t size() const { return offsets_.size(); }
  std::uint64_t file_size() const { return file_size_; }
  std::size_t dim() const { return header_.dim; }
  const std::vector<std::uint64_t>& offsets() const { return offsets_; }

  std::vector<std::uint8_t> record_bytes(std::size_t i) const {
    check_index(i);
    const std::uint64_t end = i + 1 < offsets_.size() ? offsets_[i + 1] : file_size_;
    return read_at(offsets_[i], end - offsets_[i]);
  }

  RawRecord raw_record(std::size_t i) const {
    if (header_.flags & kFlagAdapterParams) {
      throw Error(ErrorCode::kInvalidArgument,
                  "file holds adapter parameters, not embeddings");
    }
    return decode_record(record_bytes(i), header_.dim, i);
  }

  SequenceEmbedding record(std::size_t i) const {
    return to_embedding(raw_record(i), header_.dim, i);
  }

  std::vector<SequenceEmbedding> read_all() const {
    std::vector<SequenceEmbedding> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(record(i));
    return out;
  }

  std::vector<std::uint8_t> read_at(std::uint64_t offset, std::uint64_t len) const {
    std::vector<std::uint8_t> buf(len);
    std::uint64_t done = 0;
    while (done < len) {
      ssize_t got = ::pread(fd_.get(), buf.data() + done, len - done,
                            static_cast<off_t>(offset + done));
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) {
        throw Error(ErrorCode::kTruncatedFile, "short read in " + path_);
      }
      done += static_cast<std::uint64_t>(got);
    }
    return buf;
  }

 private:
  void check_index(std::size_t i) const {
    if (i >= offsets_.size()) {
      throw Error(ErrorCode::kInvalidArgument, "record index out of range", i);
    }
  }

  std::string path_;
  detail::FileHandle fd_;
  std::uint64_t file_size_ = 0;
  DumpHeader header_;
  std::vector<std::uint64_t> offsets_;
};

inline std::vector<SequenceEmbedding> read_dump(const std::string& path) {
  return DumpReader(path).read_all();
}

// ---------------------------------------------------------------------------
// Adapter parameters

inline void write_adapter_params(const AdapterParams<double>& p,
                                 const std::string& path) {
  p.validate();
  detail::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(p.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(p.output_dim()));
  w.f64(p.ln_epsilon);
  p.for_each_field([&](std::span<const double> s) {
    for (double v : s) w.f32(static_cast<float>(v));
  });
  w.seal_crc();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open for writing: " + path);
  detail::write_all(
      out,
      encode_header({kDumpVersion, static_cast<std::uint32_t>(p.hidden_dim()), 1,
                     kFlagAdapterParams}),
      path);
  detail::ByteWriter table;
  table.u64(kHeaderSize + 8);
  detail::write_all(out, table.bytes(), path);
  detail::write_all(out, w.bytes(), path);
  out.flush();
  if (!out) throw Error(ErrorCode::kIoFailure, "flush failed: " + path);
}

inline AdapterParams<double> decode_adapter_record(
    std::span<const std::uint8_t> slice, std::uint32_t header_dim) {
  if (slice.size() < 20) {
    throw Error(ErrorCode::kTruncatedFile, "adapter record too short", 0);
  }
  detail::ByteReader tail(slice.last(4));
  auto body = slice.first(slice.size() - 4);
  if (crc32(body) != tail.u32()) {
    throw Error(ErrorCode::kChecksumMismatch, "adapter record checksum", 0);
  }
  detail::ByteReader r(body);
  const std::uint32_t h = r.u32(), d = r.u32();
  if (h != header_dim || h == 0 || d == 0) {
    throw Error(ErrorCode::kInvalidArgument, "adapter shape", 0);
  }
  const std::uint64_t expect = 8 + 8 + 4ull * (2ull * h + 1ull * h * d + d);
  if (body.size() != expect) {
    throw Error(ErrorCode::kTruncatedFile, "adapter record length", 0);
  }
  AdapterParams<double> p;
  p.ln_epsilon = r.f64();
  p.ln_scale.resize(h);
  p.ln_shift.resize(h);
  p.proj_weight = MatrixD(h, d);
  p.proj_bias.resize(d);
  p.for_each_field([&](std::span<double> s) {
    for (auto& v : s) v = r.f32();
  });
  p.validate();
  return p;
}

inline AdapterParams<double> read_adapter_params(const std::string& path) {
  DumpReader reader(path);
  if (!(reader.header().flags & kFlagAdapterParams) || reader.size() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "not an adapter parameter file: " + path);
  }
  return decode_adapter_record(reader.record_bytes(0), reader.header().dim);
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  std::string source_model;
  std::vector<std::uint16_t> layer_ids;
  std::uint32_t dim = 0;
  std::uint64_t record_count = 0;
  std::string created_at;
  std::uint32_t format_version = kDumpVersion;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline Manifest make_manifest(const DumpSummary& s, std::string source_model,
                              std::string created_at) {
  return {std::move(source_model),
          {s.layer_ids.begin(), s.layer_ids.end()},
          s.dim,
          s.record_count,
          std::move(created_at),
          kDumpVersion};
}

inline nlohmann::json to_json(const Manifest& m) {
  return {{"source_model", m.source_model}, {"layer_ids", m.layer_ids},
          {"dim", m.dim},                   {"record_count", m.record_count},
          {"created_at", m.created_at},     {"format_version", m.format_version}};
}

inline void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open for writing: " + path);
  out << to_json(m).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed: " + path);
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  try {
    auto j = nlohmann::json::parse(in);
    Manifest m;
    m.source_model = j.at("source_model").get<std::string>();
    m.layer_ids = j.at("layer_ids").get<std::vector<std::uint16_t>>();
    m.dim = j.at("dim").get<std::uint32_t>();
    m.record_count = j.at("record_count").get<std::uint64_t>();
    m.created_at = j.at("created_at").get<std::string>();
    m.format_version = j.at("format_version").get<std::uint32_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::optional<std::uint64_t> record;
  std::string kind;
  std::string message;
};

struct ValidationReport {
  DumpHeader header;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  std::string format() const {
    std::ostringstream out;
    for (const auto& v : violations) {
      out << (v.record ? "record " + std::to_string(*v.record) : std::string("file"))
          << ": " << v.kind << ": " << v.message << '\n';
    }
    return out.str();
  }
};

// Collects every violation instead of stopping at the first; only damage
// that makes the rest of the file unreadable (header, offset table) ends
// the scan early.
inline ValidationReport validate_dump(
    const std::string& path,
    const std::optional<std::string>& manifest_path = std::nullopt) {
  ValidationReport report;
  auto add = [&](std::optional<std::uint64_t> rec, std::string kind,
                 std::string msg) {
    report.violations.push_back({rec, std::move(kind), std::move(msg)});
  };

  std::ifstream in(path, std::ios::binary);
  if (!in) {
    add(std::nullopt, "io", "cannot open " + path);
    return report;
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::uint64_t size = bytes.size();
  if (size < kHeaderSize) {
    add(std::nullopt, "truncated", "file shorter than 24-byte header");
    return report;
  }
  if (std::memcmp(bytes.data(), kDumpMagic, 4) != 0) {
    add(std::nullopt, "magic", "bad magic");
    return report;
  }
  detail::ByteReader hr(std::span<const std::uint8_t>(bytes).subspan(4, 20));
  auto& h = report.header;
  h.version = hr.u32();
  h.dim = hr.u32();
  h.record_count = hr.u64();
  h.flags = hr.u32();
  if (h.version != kDumpVersion) {
    add(std::nullopt, "version", "unsupported version " + std::to_string(h.version));
    return report;
  }
  const std::uint64_t n = h.record_count;
  if (n > (size - kHeaderSize) / 8) {
    add(std::nullopt, "offsets", "offset table runs past end of file");
    return report;
  }
  const std::uint64_t table_end = kHeaderSize + 8 * n;
  std::vector<std::uint64_t> offsets(n);
  detail::ByteReader tr(std::span<const std::uint8_t>(bytes).subspan(kHeaderSize, 8 * n));
  bool offsets_ok = true;
  for (std::uint64_t i = 0; i < n; ++i) {
    offsets[i] = tr.u64();
    const std::uint64_t lower = i == 0 ? table_end : offsets[i - 1] + 1;
    if (offsets[i] < lower || offsets[i] >= size) {
      add(i, "offsets", "offset " + std::to_string(offsets[i]) +
                             " not increasing or out of bounds");
      offsets_ok = false;
    }
  }
  if (n == 0 && size != table_end) {
    add(std::nullopt, "length", "trailing bytes after empty offset table");
  }
  if (n > 0 && offsets_ok && offsets[0] != table_end) {
    add(0, "offsets", "gap between offset table and first record");
  }
  if (!offsets_ok) return report;

  const bool adapter = (h.flags & kFlagAdapterParams) != 0;
  if (adapter && n != 1) {
    add(std::nullopt, "adapter", "adapter file must hold exactly one record");
  }
  std::set<std::uint16_t> layers;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t end = i + 1 < n ? offsets[i + 1] : size;
    auto slice = std::span<const std::uint8_t>(bytes).subspan(offsets[i], end - offsets[i]);
    if (adapter) {
      try {
        decode_adapter_record(slice, h.dim);
      } catch (const Error& e) {
        add(i, std::string(error_code_name(e.code())), e.what());
      }
      continue;
    }
    RawRecord rec;
    try {
      rec = decode_record(slice, h.dim, i);
    } catch (const Error& e) {
      add(i, e.code() == ErrorCode::kChecksumMismatch ? "checksum" : "length",
          e.what());
      continue;
    }
    layers.insert(rec.layer_id);
    std::size_t pooling = 0;
    for (std::size_t t = 0; t < rec.roles.size(); ++t) {
      if (rec.roles[t] >= kNumTokenRoles) {
        add(i, "role", "role byte " + std::to_string(rec.roles[t]) +
                           " out of range at token " + std::to_string(t));
      }
      pooling += rec.roles[t] == static_cast<std::uint8_t>(TokenRole::kPooling);
    }
    const bool pooled_only = (h.flags & kFlagPooledOnly) != 0;
    if (pooling > 1 || (pooling == 0 && !pooled_only)) {
      add(i, "pooling", "expected exactly one pooling token, found " +
                            std::to_string(pooling));
    }
    double norm = norm64(std::span<const float>(rec.pooled));
    if (!(std::abs(norm - 1.0) <= kValidatorNormTolerance)) {
      add(i, "pooled-norm", "pooled norm " + std::to_string(norm));
    }
    bool finite = true;
    for (float v : rec.pooled) finite = finite && std::isfinite(v);
    for (float v : rec.tokens) finite = finite && std::isfinite(v);
    if (!finite) add(i, "non-finite", "record contains NaN or infinity");
  }

  if (manifest_path) {
    try {
      Manifest m = read_manifest(*manifest_path);
      if (m.format_version != h.version) {
        add(std::nullopt, "manifest", "format_version " +
                                          std::to_string(m.format_version) +
                                          " vs header " + std::to_string(h.version));
      }
      if (m.dim != h.dim) {
        add(std::nullopt, "manifest",
            "dim " + std::to_string(m.dim) + " vs header " + std::to_string(h.dim));
      }
      if (m.record_count != h.record_count) {
        add(std::nullopt, "manifest",
            "record_count " + std::to_string(m.record_count) + " vs header " +
                std::to_string(h.record_count));
      }
      if (!adapter) {
        std::set<std::uint16_t> listed(m.layer_ids.begin(), m.layer_ids.end());
        if (listed != layers) {
          add(std::nullopt, "manifest", "layer_ids differ from records");
        }
      }
    } catch (const Error& e) {
      add(std::nullopt, "manifest", e.what());
    }
  }
  return report;
}

}  // namespace smart
