#include "streetstage/imagery.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <regex>

#include "http.hpp"
#include "streetstage/error.hpp"
#include "streetstage/hashing.hpp"
#include "streetstage/image.hpp"

namespace streetstage::imagery {

using nlohmann::json;
namespace fs = std::filesystem;

void BoundingBox::check() const {
  if (!(min.latitude < max.latitude) || !(min.longitude < max.longitude)) {
    throw Error(ErrorCode::InvalidArgument, "bounding box is degenerate or inverted");
  }
}

bool BoundingBox::contains(const geo::GeoPoint& p) const {
  return p.latitude >= min.latitude && p.latitude <= max.latitude && p.longitude >= min.longitude &&
         p.longitude <= max.longitude;
}

Image to_rgb(Image image) {
  if (image.layout() == ChannelLayout::rgb) return image;
  Image out(image.width(), image.height(), ChannelLayout::rgb);
  const auto src = image.bytes();
  auto dst = out.bytes();
  for (std::size_t i = 0, j = 0; j < dst.size(); i += 4, j += 3) {
    dst[j] = src[i];
    dst[j + 1] = src[i + 1];
    dst[j + 2] = src[i + 2];
  }
  return out;
}

// ---- fixture provider ----

FixtureProvider::FixtureProvider(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::is_regular_file(dir_ / "nodes.json")) {
    throw Error(ErrorCode::ProviderUnavailable, "fixture directory has no nodes.json: " + dir_.string());
  }
}

std::vector<ImageryNode> FixtureProvider::load_nodes() const {
  json doc;
  try {
    const auto bytes = read_file(dir_ / "nodes.json");
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("fixture nodes.json unreadable: ") + e.what());
  }
  std::vector<ImageryNode> nodes;
  try {
    for (const auto& r : doc.at("nodes")) {
      ImageryNode n;
      n.id = r.at("id").get<std::string>();
      n.position = geo::GeoPoint::from_degrees(r.at("lat_deg").get<double>(), r.at("lon_deg").get<double>());
      if (r.contains("compass_angle_deg") && !r["compass_angle_deg"].is_null()) {
        n.compass_angle = geo::normalize_heading(geo::deg_to_rad(r["compass_angle_deg"].get<double>()));
      } else {
        n.warnings.push_back("compass angle missing; assuming 0");
      }
      n.is_panoramic = r.at("is_pano").get<bool>();
      n.capture_time = r.value("captured_at", std::int64_t{0});
      const auto file = r.value("file", n.id + ".png");
      n.full_url = "file://" + fs::absolute(dir_ / file).string();
      n.thumbnail_url = n.full_url;
      n.width = r.value("width", 0);
      n.height = r.value("height", 0);
      nodes.push_back(std::move(n));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("malformed fixture node record: ") + e.what());
  }
  return nodes;
}

std::vector<ImageryNode> FixtureProvider::query(const BoundingBox& box, int limit) {
  std::vector<ImageryNode> out;
  // Same filter the Graph API applies server-side.
  for (auto& n : load_nodes()) {
    if (n.is_panoramic && box.contains(n.position)) out.push_back(std::move(n));
    if (static_cast<int>(out.size()) >= limit) break;
  }
  return out;
}

ImageryNode FixtureProvider::lookup(const std::string& id) {
  for (auto& n : load_nodes()) {
    if (n.id == id) return std::move(n);
  }
  throw Error(ErrorCode::NotFound, "no imagery node '" + id + "'");
}

std::vector<std::uint8_t> FixtureProvider::download(const ImageryNode& node) {
  const auto n = lookup(node.id);
  const fs::path file = n.full_url.substr(std::string("file://").size());
  if (!fs::is_regular_file(file)) {
    throw Error(ErrorCode::ProviderUnavailable, "fixture image missing: " + file.string());
  }
  return read_file(file);
}

// ---- Graph-API provider ----

namespace {

constexpr const char* kGraphFields =
    "id,geometry,computed_geometry,compass_angle,computed_compass_angle,is_pano,captured_at,"
    "thumb_1024_url,thumb_2048_url,thumb_original_url,width,height";

std::string format_coord(double deg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.7f", deg);
  return buf;
}

ImageryNode node_from_graph(const json& r) {
  ImageryNode n;
  n.id = r.at("id").is_string() ? r["id"].get<std::string>() : std::to_string(r["id"].get<std::int64_t>());
  const json* geom = nullptr;
  if (r.contains("computed_geometry") && r["computed_geometry"].is_object()) {
    geom = &r["computed_geometry"];
  } else {
    geom = &r.at("geometry");
  }
  const auto& c = geom->at("coordinates");
  n.position = geo::GeoPoint::from_degrees(c.at(1).get<double>(), c.at(0).get<double>());
  const json* compass = nullptr;
  for (const char* key : {"computed_compass_angle", "compass_angle"}) {
    if (r.contains(key) && r[key].is_number()) {
      compass = &r[key];
      break;
    }
  }
  if (compass) {
    n.compass_angle = geo::normalize_heading(geo::deg_to_rad(compass->get<double>()));
  } else {
    n.warnings.push_back("compass angle missing; assuming 0");
  }
  n.is_panoramic = r.value("is_pano", false);
  n.capture_time = r.value("captured_at", std::int64_t{0});
  n.thumbnail_url = r.value("thumb_1024_url", std::string());
  for (const char* key : {"thumb_original_url", "thumb_2048_url", "thumb_1024_url"}) {
    if (r.contains(key) && r[key].is_string()) {
      n.full_url = r[key].get<std::string>();
      break;
    }
  }
  n.width = r.value("width", 0);
  n.height = r.value("height", 0);
  return n;
}

void raise_for_status(const httplib::Result& res, const std::string& what) {
  if (!res) {
    throw Error(ErrorCode::ProviderUnavailable, what + ": " + httplib::to_string(res.error()));
  }
  const int s = res->status;
  if (s >= 200 && s < 300) return;
  if (s == 429) throw Error(ErrorCode::QuotaExceeded, what + ": rate limited");
  if (s == 401 || s == 403) throw Error(ErrorCode::ProviderUnavailable, what + ": authentication rejected");
  if (s == 404) throw Error(ErrorCode::NotFound, what + ": not found");
  throw Error(ErrorCode::ProviderUnavailable, what + ": HTTP " + std::to_string(s));
}

bool plain_id(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

}  // namespace

ImageryNode node_from_graph_json(const std::string& json_text) {
  try {
    return node_from_graph(json::parse(json_text));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("malformed provider record: ") + e.what());
  }
}

MapillaryProvider::MapillaryProvider(std::string token, std::string base_url, int timeout_s)
    : token_(std::move(token)), base_url_(std::move(base_url)), timeout_s_(timeout_s) {
  detail::split_url(base_url_);
}

std::unique_ptr<MapillaryProvider> MapillaryProvider::from_environment(std::string base_url) {
  const char* tok = std::getenv(kTokenEnvVar);
  return std::make_unique<MapillaryProvider>(tok ? tok : "", std::move(base_url));
}

std::string MapillaryProvider::get(const std::string& path_and_query) {
  if (token_.empty()) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("no access token; set ") + kTokenEnvVar);
  }
  const auto url = detail::join_url(base_url_, path_and_query);
  auto cli = detail::make_client(url.origin, timeout_s_);
  const auto res = cli.Get(url.path, {{"Authorization", "OAuth " + token_}});
  raise_for_status(res, "imagery provider");
  return res->body;
}

std::vector<ImageryNode> MapillaryProvider::query(const BoundingBox& box, int limit) {
  const auto bbox = format_coord(geo::rad_to_deg(box.min.longitude)) + "," +
                    format_coord(geo::rad_to_deg(box.min.latitude)) + "," +
                    format_coord(geo::rad_to_deg(box.max.longitude)) + "," +
                    format_coord(geo::rad_to_deg(box.max.latitude));
  const auto body = get(std::string("/images?fields=") + kGraphFields + "&bbox=" + bbox +
                        "&is_pano=true&limit=" + std::to_string(limit));
  std::vector<ImageryNode> out;
  try {
    const auto doc = json::parse(body);
    for (const auto& r : doc.at("data")) out.push_back(node_from_graph(r));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("malformed provider response: ") + e.what());
  }
  return out;
}

ImageryNode MapillaryProvider::lookup(const std::string& id) {
  if (!plain_id(id)) throw Error(ErrorCode::InvalidArgument, "malformed node id '" + id + "'");
  return node_from_graph_json(get("/" + id + "?fields=" + kGraphFields));
}

std::vector<std::uint8_t> MapillaryProvider::download(const ImageryNode& node) {
  if (node.full_url.empty()) throw Error(ErrorCode::ProviderUnavailable, "node has no image URL");
  const auto url = detail::split_url(node.full_url);
  auto cli = detail::make_client(url.origin, timeout_s_);
  httplib::Headers headers;
  // Image URLs are pre-signed CDN links; the token only goes to the API host.
  if (url.origin == detail::split_url(base_url_).origin) headers.emplace("Authorization", "OAuth " + token_);
  const auto res = cli.Get(url.path, headers);
  raise_for_status(res, "image download");
  return {res->body.begin(), res->body.end()};
}

// ---- disk cache ----

namespace {

std::string cache_key(const std::string& key) {
  if (plain_id(key) && key.size() <= 128) return key;
  return "h" + sha256_hex(key).substr(0, 40);
}

}  // namespace

DiskCache::DiskCache(fs::path dir, std::uint64_t budget_bytes) : dir_(std::move(dir)), budget_(budget_bytes) {
  fs::create_directories(dir_);
  static const std::regex kName(R"((.+)-([0-9a-f]{64})\.img)");
  std::vector<std::pair<fs::file_time_type, std::string>> order;
  for (const auto& e : fs::directory_iterator(dir_)) {
    if (!e.is_regular_file()) continue;
    std::smatch m;
    const auto name = e.path().filename().string();
    if (!std::regex_match(name, m, kName)) continue;
    const auto key = m[1].str();
    if (index_.count(key)) {
      // Duplicate from an interrupted replacement; keep the newer one.
      auto& old = index_[key].first;
      if (fs::last_write_time(old.file) >= e.last_write_time()) {
        fs::remove(e.path());
        continue;
      }
      used_ -= old.size;
      fs::remove(old.file);
      index_.erase(key);
      std::erase_if(order, [&](const auto& p) { return p.second == key; });
    }
    index_[key] = {Entry{e.path(), static_cast<std::uint64_t>(e.file_size())}, {}};
    used_ += e.file_size();
    order.emplace_back(e.last_write_time(), key);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [t, key] : order) {
    lru_.push_back(key);
    index_[key].second = std::prev(lru_.end());
  }
  evict_locked();
}

std::optional<std::vector<std::uint8_t>> DiskCache::get(const std::string& raw_key) {
  const auto key = cache_key(raw_key);
  std::lock_guard lock(mu_);
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  const auto& entry = it->second.first;
  std::vector<std::uint8_t> bytes;
  bool ok = true;
  try {
    bytes = read_file(entry.file);
    const auto name = entry.file.filename().string();
    ok = name.substr(name.size() - 4 - 64, 64) == sha256_hex(bytes);
  } catch (const Error&) {
    ok = false;
  }
  if (!ok) {
    std::error_code ec;
    fs::remove(entry.file, ec);
    used_ -= entry.size;
    lru_.erase(it->second.second);
    index_.erase(it);
    return std::nullopt;
  }
  std::error_code ec;
  fs::last_write_time(entry.file, fs::file_time_type::clock::now(), ec);
  lru_.splice(lru_.begin(), lru_, it->second.second);
  return bytes;
}

void DiskCache::put(const std::string& raw_key, std::span<const std::uint8_t> bytes) {
  const auto key = cache_key(raw_key);
  const auto file = dir_ / (key + "-" + sha256_hex(bytes) + ".img");
  write_file_atomic(file, bytes);
  std::lock_guard lock(mu_);
  if (auto it = index_.find(key); it != index_.end()) {
    if (it->second.first.file != file) {
      std::error_code ec;
      fs::remove(it->second.first.file, ec);
    }
    used_ -= it->second.first.size;
    lru_.erase(it->second.second);
    index_.erase(it);
  }
  lru_.push_front(key);
  index_[key] = {Entry{file, bytes.size()}, lru_.begin()};
  used_ += bytes.size();
  evict_locked();
}

void DiskCache::evict_locked() {
  while (used_ > budget_ && !lru_.empty()) {
    const auto key = lru_.back();
    lru_.pop_back();
    auto it = index_.find(key);
    std::error_code ec;
    fs::remove(it->second.first.file, ec);
    used_ -= it->second.first.size;
    index_.erase(it);
  }
}

std::uint64_t DiskCache::bytes_used() const {
  std::lock_guard lock(mu_);
  return used_;
}

std::size_t DiskCache::entries() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

// ---- client ----

ImageryClient::ImageryClient(std::shared_ptr<ImageryProvider> provider, std::shared_ptr<DiskCache> disk_cache,
                             std::size_t memory_slots)
    : provider_(std::move(provider)), disk_(std::move(disk_cache)), memory_slots_(memory_slots) {
  if (!provider_) throw Error(ErrorCode::InvalidArgument, "imagery client needs a provider");
}

std::vector<ImageryNode> ImageryClient::search_nodes(const BoundingBox& box, int limit) {
  box.check();
  if (limit < 1 || limit > provider_->max_limit()) {
    throw Error(ErrorCode::InvalidArgument,
                "limit must lie in [1, " + std::to_string(provider_->max_limit()) + "]");
  }
  ++provider_calls_;
  auto nodes = provider_->query(box, limit);
  std::erase_if(nodes, [&](const ImageryNode& n) { return !n.is_panoramic || !box.contains(n.position); });
  std::stable_sort(nodes.begin(), nodes.end(), [](const ImageryNode& a, const ImageryNode& b) {
    if (a.capture_time != b.capture_time) return a.capture_time > b.capture_time;
    return a.id < b.id;
  });
  if (static_cast<int>(nodes.size()) > limit) nodes.resize(limit);
  std::lock_guard lock(mu_);
  for (const auto& n : nodes) known_[n.id] = n;
  return nodes;
}

ImageryNode ImageryClient::get_node(const std::string& id) {
  {
    std::lock_guard lock(mu_);
    if (auto it = known_.find(id); it != known_.end()) return it->second;
  }
  ++provider_calls_;
  auto node = provider_->lookup(id);
  std::lock_guard lock(mu_);
  known_[id] = node;
  return node;
}

ImageryClient::PanoPtr ImageryClient::load(const ImageryNode& node) {
  std::optional<std::vector<std::uint8_t>> bytes;
  if (disk_) bytes = disk_->get(node.id);
  const bool from_disk = bytes.has_value();
  if (from_disk) {
    ++hits_;
  } else {
    ++misses_;
    ++provider_calls_;
    bytes = provider_->download(node);
  }
  Image img = to_rgb(decode_image(*bytes));
  if (img.width() != 2 * img.height()) {
    throw Error(ErrorCode::DecodeError, "node '" + node.id + "' is not a 2:1 equirectangular image (" +
                                            std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                                            ")");
  }
  if (disk_ && !from_disk) disk_->put(node.id, *bytes);
  return std::make_shared<const panorama::Panorama>(std::move(img), node.compass_angle);
}

void ImageryClient::remember(const std::string& id, PanoPtr pano) {
  if (memory_slots_ == 0) return;
  std::erase_if(memory_, [&](const auto& e) { return e.first == id; });
  memory_.emplace_front(id, std::move(pano));
  while (memory_.size() > memory_slots_) memory_.pop_back();
}

std::shared_ptr<const panorama::Panorama> ImageryClient::fetch_panorama(const ImageryNode& node) {
  if (!node.is_panoramic) throw Error(ErrorCode::InvalidArgument, "node '" + node.id + "' is not panoramic");
  std::promise<PanoPtr> promise;
  {
    std::unique_lock lock(mu_);
    for (auto it = memory_.begin(); it != memory_.end(); ++it) {
      if (it->first == node.id && it->second->north_offset() == geo::normalize_heading(node.compass_angle)) {
        memory_.splice(memory_.begin(), memory_, it);
        ++hits_;
        return memory_.front().second;
      }
    }
    if (auto it = in_flight_.find(node.id); it != in_flight_.end()) {
      auto fut = it->second;
      lock.unlock();
      auto pano = fut.get();
      ++hits_;
      return pano;
    }
    in_flight_.emplace(node.id, promise.get_future().share());
  }
  PanoPtr pano;
  try {
    pano = load(node);
  } catch (...) {
    std::lock_guard lock(mu_);
    promise.set_exception(std::current_exception());
    in_flight_.erase(node.id);
    throw;
  }
  std::lock_guard lock(mu_);
  remember(node.id, pano);
  promise.set_value(pano);
  in_flight_.erase(node.id);
  return pano;
}

ClientStats ImageryClient::stats() const { return {hits_.load(), misses_.load(), provider_calls_.load()}; }

}  // namespace streetstage::imagery
