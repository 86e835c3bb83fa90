#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace streetstage {

enum class ChannelLayout { rgb = 3, rgba = 4 };

/// Interleaved 8-bit raster, rows top to bottom.
class Image {
 public:
  Image() = default;
  Image(int width, int height, ChannelLayout layout);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  ChannelLayout layout() const noexcept { return layout_; }
  int channels() const noexcept { return static_cast<int>(layout_); }
  bool empty() const noexcept { return pixels_.empty(); }

  std::uint8_t* pixel(int x, int y) {
    return pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * channels();
  }
  const std::uint8_t* pixel(int x, int y) const {
    return pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * channels();
  }

  std::span<std::uint8_t> bytes() noexcept { return pixels_; }
  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }

  void fill(std::span<const std::uint8_t> value);

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  ChannelLayout layout_ = ChannelLayout::rgb;
  std::vector<std::uint8_t> pixels_;
};

/// Encodes to PNG. Output bytes are a pure function of the image.
std::vector<std::uint8_t> encode_png(const Image& image);

/// Decodes PNG or JPEG (sniffed from the signature) to RGB, or RGBA when the
/// source carries alpha. Throws DecodeError.
Image decode_image(std::span<const std::uint8_t> bytes);

void write_png(const Image& image, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace streetstage
