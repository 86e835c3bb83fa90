#include "streetstage/archive.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "streetstage/error.hpp"
#include "streetstage/image.hpp"

namespace streetstage::archive {
namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kDosDate = 0x21;  // 1980-01-01

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back(v >> 8);
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::DecodeError, "zip: " + what); }

struct Reader {
  std::span<const std::uint8_t> bytes;

  void need(std::size_t at, std::size_t n) const {
    if (at > bytes.size() || bytes.size() - at < n) malformed("truncated archive");
  }
  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return static_cast<std::uint16_t>(bytes[at] | (bytes[at + 1] << 8));
  }
  std::uint32_t u32(std::size_t at) const {
    need(at, 4);
    return static_cast<std::uint32_t>(bytes[at]) | (static_cast<std::uint32_t>(bytes[at + 1]) << 8) |
           (static_cast<std::uint32_t>(bytes[at + 2]) << 16) | (static_cast<std::uint32_t>(bytes[at + 3]) << 24);
  }
};

std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) malformed("inflate init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) malformed("bad deflate stream");
  return out;
}

}  // namespace

void ZipWriter::add(const std::string& name, std::span<const std::uint8_t> data) {
  if (name.empty() || name.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "zip entry name length");
  if (data.size() > 0xFFFFFFFFu || out_.size() + data.size() + 30 + name.size() > 0xFFFFFFFFu) {
    throw Error(ErrorCode::InvalidArgument, "zip archive exceeds 4 GiB");
  }
  Central c;
  c.name = name;
  c.crc = static_cast<std::uint32_t>(crc32(0L, data.data(), static_cast<uInt>(data.size())));
  c.size = static_cast<std::uint32_t>(data.size());
  c.offset = static_cast<std::uint32_t>(out_.size());

  put32(out_, kLocalSig);
  put16(out_, 20);
  put16(out_, 0);
  put16(out_, 0);  // stored
  put16(out_, 0);
  put16(out_, kDosDate);
  put32(out_, c.crc);
  put32(out_, c.size);
  put32(out_, c.size);
  put16(out_, static_cast<std::uint16_t>(name.size()));
  put16(out_, 0);
  out_.insert(out_.end(), name.begin(), name.end());
  out_.insert(out_.end(), data.begin(), data.end());
  central_.push_back(std::move(c));
}

void ZipWriter::add_directory(const std::filesystem::path& dir, const std::string& prefix) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto rel = std::filesystem::relative(f, dir).generic_string();
    add(prefix + rel, read_file(f));
  }
}

std::vector<std::uint8_t> ZipWriter::finish() {
  if (central_.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "too many zip entries");
  const auto cd_offset = static_cast<std::uint32_t>(out_.size());
  for (const auto& c : central_) {
    put32(out_, kCentralSig);
    put16(out_, 20);
    put16(out_, 20);
    put16(out_, 0);
    put16(out_, 0);
    put16(out_, 0);
    put16(out_, kDosDate);
    put32(out_, c.crc);
    put32(out_, c.size);
    put32(out_, c.size);
    put16(out_, static_cast<std::uint16_t>(c.name.size()));
    put16(out_, 0);
    put16(out_, 0);
    put16(out_, 0);
    put16(out_, 0);
    put32(out_, 0);
    put32(out_, c.offset);
    out_.insert(out_.end(), c.name.begin(), c.name.end());
  }
  const auto cd_size = static_cast<std::uint32_t>(out_.size() - cd_offset);
  put32(out_, kEndSig);
  put16(out_, 0);
  put16(out_, 0);
  put16(out_, static_cast<std::uint16_t>(central_.size()));
  put16(out_, static_cast<std::uint16_t>(central_.size()));
  put32(out_, cd_size);
  put32(out_, cd_offset);
  put16(out_, 0);
  central_.clear();
  return std::move(out_);
}

std::vector<Entry> read_zip(std::span<const std::uint8_t> bytes) {
  const Reader r{bytes};
  if (bytes.size() < 22) malformed("too short");
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = bytes.size() >= 22 + 0xFFFF ? bytes.size() - 22 - 0xFFFF : 0;
  for (std::size_t at = bytes.size() - 22 + 1; at-- > lowest;) {
    if (r.u32(at) == kEndSig) {
      eocd = at;
      break;
    }
  }
  if (eocd == std::string::npos) malformed("no end of central directory");
  const std::size_t count = r.u16(eocd + 10);
  std::size_t at = r.u32(eocd + 16);

  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (r.u32(at) != kCentralSig) malformed("bad central header");
    const auto flags = r.u16(at + 8);
    const auto method = r.u16(at + 10);
    const auto crc = r.u32(at + 16);
    const auto csize = r.u32(at + 20);
    const auto usize = r.u32(at + 24);
    const auto name_len = r.u16(at + 28);
    const auto extra_len = r.u16(at + 30);
    const auto comment_len = r.u16(at + 32);
    const auto local = r.u32(at + 42);
    r.need(at + 46, name_len);
    Entry e;
    e.name.assign(reinterpret_cast<const char*>(bytes.data() + at + 46), name_len);
    at += 46 + name_len + extra_len + comment_len;

    if (flags & 0x1) malformed("encrypted entry " + e.name);
    if (r.u32(local) != kLocalSig) malformed("bad local header for " + e.name);
    const std::size_t data_at = local + 30 + r.u16(local + 26) + r.u16(local + 28);
    r.need(data_at, csize);
    const auto payload = bytes.subspan(data_at, csize);
    if (method == 0) {
      if (csize != usize) malformed("size mismatch in " + e.name);
      e.data.assign(payload.begin(), payload.end());
    } else if (method == 8) {
      e.data = inflate_raw(payload, usize);
    } else {
      malformed("unsupported compression method in " + e.name);
    }
    if (crc32(0L, e.data.data(), static_cast<uInt>(e.data.size())) != crc) malformed("crc mismatch in " + e.name);
    entries.push_back(std::move(e));
  }
  return entries;
}

void extract_zip(std::span<const std::uint8_t> bytes, const std::filesystem::path& dir) {
  const auto entries = read_zip(bytes);
  std::filesystem::create_directories(dir);
  for (const auto& e : entries) {
    const std::filesystem::path rel(e.name);
    if (rel.is_absolute() || e.name.find('\\') != std::string::npos) malformed("unsafe entry name " + e.name);
    for (const auto& part : rel) {
      if (part == "..") malformed("unsafe entry name " + e.name);
    }
    if (!e.name.empty() && e.name.back() == '/') {
      std::filesystem::create_directories(dir / rel);
      continue;
    }
    const auto target = dir / rel;
    std::filesystem::create_directories(target.parent_path());
    write_file_atomic(target, e.data);
  }
}

}  // namespace streetstage::archive
