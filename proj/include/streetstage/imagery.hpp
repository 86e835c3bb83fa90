#pragma once

// Street-level imagery discovery and retrieval behind one provider contract.
//
// Fixture layout (FixtureProvider):
//   <dir>/nodes.json   {"nodes": [{"id", "lat_deg", "lon_deg", "compass_angle_deg"?,
//                                  "is_pano", "captured_at" (ms since epoch),
//                                  "file"? (default "<id>.png"), "width"?, "height"?}]}
//   <dir>/<id>.png     equirectangular panorama (PNG or JPEG bytes)

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streetstage/geo.hpp"
#include "streetstage/panorama.hpp"

namespace streetstage::imagery {

inline constexpr std::uint64_t kDefaultCacheBudget = 2ull << 30;
inline constexpr const char* kTokenEnvVar = "MAPILLARY_ACCESS_TOKEN";

struct BoundingBox {
  geo::GeoPoint min;  // south-west corner
  geo::GeoPoint max;  // north-east corner

  /// Throws InvalidArgument unless min is strictly south-west of max.
  void check() const;
  bool contains(const geo::GeoPoint& p) const;
};

struct ImageryNode {
  std::string id;
  geo::GeoPoint position;
  double compass_angle = 0.0;  // radians clockwise from north
  bool is_panoramic = false;
  std::int64_t capture_time = 0;  // ms since epoch
  std::string thumbnail_url;
  std::string full_url;
  int width = 0;
  int height = 0;
  std::vector<std::string> warnings;
};

class ImageryProvider {
 public:
  virtual ~ImageryProvider() = default;
  virtual std::string name() const = 0;
  virtual int max_limit() const = 0;
  /// Candidates in the box. May include flat images; callers filter.
  virtual std::vector<ImageryNode> query(const BoundingBox& box, int limit) = 0;
  /// Throws NotFound for unknown ids.
  virtual ImageryNode lookup(const std::string& id) = 0;
  /// Raw encoded image bytes of the full-resolution panorama.
  virtual std::vector<std::uint8_t> download(const ImageryNode& node) = 0;
};

class FixtureProvider final : public ImageryProvider {
 public:
  explicit FixtureProvider(std::filesystem::path dir);

  std::string name() const override { return "fixture"; }
  int max_limit() const override { return 1000; }
  std::vector<ImageryNode> query(const BoundingBox& box, int limit) override;
  ImageryNode lookup(const std::string& id) override;
  std::vector<std::uint8_t> download(const ImageryNode& node) override;

  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::vector<ImageryNode> load_nodes() const;
  std::filesystem::path dir_;
};

/// Graph-API-shaped HTTPS provider. The token travels as an OAuth
/// Authorization header.
class MapillaryProvider final : public ImageryProvider {
 public:
  static constexpr const char* kDefaultBaseUrl = "https://graph.mapillary.com";

  MapillaryProvider(std::string token, std::string base_url = kDefaultBaseUrl, int timeout_s = 20);
  /// Reads the token from MAPILLARY_ACCESS_TOKEN (may be empty; calls then fail
  /// with ProviderUnavailable).
  static std::unique_ptr<MapillaryProvider> from_environment(std::string base_url = kDefaultBaseUrl);

  std::string name() const override { return "mapillary"; }
  int max_limit() const override { return 2000; }
  std::vector<ImageryNode> query(const BoundingBox& box, int limit) override;
  ImageryNode lookup(const std::string& id) override;
  std::vector<std::uint8_t> download(const ImageryNode& node) override;

 private:
  std::string get(const std::string& path_and_query);
  std::string token_;
  std::string base_url_;
  int timeout_s_;
};

/// Parses one Graph-API image record.
ImageryNode node_from_graph_json(const std::string& json_text);

/// Content-addressed disk cache: one file per key named <key>-<sha256>.img.
/// Least-recently-used entries are evicted once the byte budget is exceeded.
class DiskCache {
 public:
  DiskCache(std::filesystem::path dir, std::uint64_t budget_bytes = kDefaultCacheBudget);

  std::optional<std::vector<std::uint8_t>> get(const std::string& key);
  void put(const std::string& key, std::span<const std::uint8_t> bytes);
  std::uint64_t bytes_used() const;
  std::size_t entries() const;

 private:
  struct Entry {
    std::filesystem::path file;
    std::uint64_t size = 0;
  };
  void evict_locked();

  std::filesystem::path dir_;
  std::uint64_t budget_;
  mutable std::mutex mu_;
  std::list<std::string> lru_;  // front = most recent
  std::map<std::string, std::pair<Entry, std::list<std::string>::iterator>> index_;
  std::uint64_t used_ = 0;
};

struct ClientStats {
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t provider_calls = 0;
};

class ImageryClient {
 public:
  ImageryClient(std::shared_ptr<ImageryProvider> provider, std::shared_ptr<DiskCache> disk_cache = nullptr,
                std::size_t memory_slots = 2);

  /// Panoramic nodes inside the box, newest capture first.
  std::vector<ImageryNode> search_nodes(const BoundingBox& box, int limit);
  ImageryNode get_node(const std::string& id);
  /// Decoded panorama with north_offset = compass_angle. Concurrent fetches of
  /// one node share a single provider download.
  std::shared_ptr<const panorama::Panorama> fetch_panorama(const ImageryNode& node);

  ClientStats stats() const;
  ImageryProvider& provider() { return *provider_; }

 private:
  using PanoPtr = std::shared_ptr<const panorama::Panorama>;
  PanoPtr load(const ImageryNode& node);
  void remember(const std::string& id, PanoPtr pano);

  std::shared_ptr<ImageryProvider> provider_;
  std::shared_ptr<DiskCache> disk_;
  std::size_t memory_slots_;

  mutable std::mutex mu_;
  std::list<std::pair<std::string, PanoPtr>> memory_;
  std::map<std::string, std::shared_future<PanoPtr>> in_flight_;
  std::map<std::string, ImageryNode> known_;

  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> provider_calls_{0};
};

/// Drops alpha if present; panoramas are RGB.
Image to_rgb(Image image);

}  // namespace streetstage::imagery
