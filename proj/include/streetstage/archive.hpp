#pragma once

// Minimal ZIP container for shipping frame directories to a backend. Entries
// are written uncompressed (PNG payloads are already deflated); the reader
// accepts stored and deflated entries.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace streetstage::archive {

struct Entry {
  std::string name;
  std::vector<std::uint8_t> data;
};

class ZipWriter {
 public:
  void add(const std::string& name, std::span<const std::uint8_t> data);
  /// Adds every regular file under `dir` (sorted) with `prefix` prepended.
  void add_directory(const std::filesystem::path& dir, const std::string& prefix);
  std::vector<std::uint8_t> finish();

 private:
  struct Central {
    std::string name;
    std::uint32_t crc = 0;
    std::uint32_t size = 0;
    std::uint32_t offset = 0;
  };
  std::vector<std::uint8_t> out_;
  std::vector<Central> central_;
};

/// Throws DecodeError on malformed archives.
std::vector<Entry> read_zip(std::span<const std::uint8_t> bytes);

/// Extracts into `dir`, rejecting entry names that escape it.
void extract_zip(std::span<const std::uint8_t> bytes, const std::filesystem::path& dir);

}  // namespace streetstage::archive
