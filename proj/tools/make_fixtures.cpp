// Regenerates the shipped imagery fixtures: a synthetic street rendered into
// equirectangular panoramas, two flat photos, a corrupt file and a small
// reference image.
//
//   make_fixtures <out_dir>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <nlohmann/json.hpp>

#include "streetstage/geo.hpp"
#include "streetstage/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using streetstage::ChannelLayout;
using streetstage::Image;

namespace {

constexpr double kPi = streetstage::geo::kPi;
constexpr double kCameraHeight = 2.5;
constexpr double kRoadHalf = 5.0;
constexpr double kFacade = 8.0;
constexpr double kBlock = 12.0;

struct Rgb {
  double r, g, b;
};

Rgb mix(Rgb a, Rgb b, double t) { return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t}; }

std::uint64_t hash(std::int64_t a, std::int64_t b) {
  std::uint64_t x = static_cast<std::uint64_t>(a) * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(b);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

Rgb sky(double up) {
  return mix({176, 196, 222}, {62, 110, 184}, std::sqrt(std::max(0.0, up)));
}

// Building facade at |x| = kFacade; blocks of kBlock metres along the street.
bool facade(double side, double z, double y, Rgb& out) {
  const auto block = static_cast<std::int64_t>(std::floor(z / kBlock));
  const auto h = hash(block, side > 0 ? 1 : 2);
  const double height = 7.0 + 14.0 * unit(h);
  if (y < 0.0 || y > height) return false;
  static const Rgb palette[] = {{168, 92, 70}, {196, 178, 150}, {120, 124, 132}, {214, 204, 180}, {150, 110, 90}};
  Rgb c = palette[h % 5];
  const double zz = z - block * kBlock;
  if (zz < 0.25 || zz > kBlock - 0.25) c = mix(c, {40, 40, 40}, 0.5);  // seam between buildings
  const double fy = std::fmod(y, 3.0), fz = std::fmod(zz, 2.4);
  if (y > 3.0 && fy > 1.0 && fy < 2.2 && fz > 0.6 && fz < 1.8) c = {58, 72, 92};
  if (y < 3.0 && fz > 0.5 && fz < 1.9 && y > 0.3 && y < 2.4 && (block + static_cast<int>(zz / 2.4)) % 3 == 0) {
    c = {70, 60, 52};
  }
  out = c;
  return true;
}

Rgb ground(double x, double z) {
  const double ax = std::abs(x);
  if (ax > kRoadHalf) {
    Rgb c{158, 156, 150};
    if (std::fmod(std::abs(z), 1.5) < 0.05 || ax < kRoadHalf + 0.2) c = {120, 118, 114};
    return c;
  }
  Rgb c{74, 76, 80};
  if (ax < 0.08 && std::fmod(std::abs(z) + 100.0, 6.0) < 3.0) c = {226, 214, 140};
  if (std::abs(ax - (kRoadHalf - 0.4)) < 0.06) c = {220, 220, 214};
  return c;
}

// World colour seen from (0, cam_z) at kCameraHeight along a unit direction.
Rgb trace(double east, double north, double up, double cam_z) {
  double t_hit = 1e9;
  Rgb c = sky(up);
  if (up < 0.0) {
    const double t = kCameraHeight / -up;
    t_hit = t;
    c = ground(east * t, cam_z + north * t);
  }
  if (std::abs(east) > 1e-9) {
    const double side = east > 0 ? 1.0 : -1.0;
    const double t = kFacade / std::abs(east);
    if (t < t_hit) {
      Rgb wall;
      if (facade(side, cam_z + north * t, kCameraHeight + up * t, wall)) {
        t_hit = t;
        c = wall;
      }
    }
  }
  if (t_hit < 1e9) c = mix(c, sky(0.0), std::min(1.0, t_hit / 220.0));
  return c;
}

Image street_panorama(int width, double compass_deg, double cam_z) {
  const int height = width / 2;
  Image img(width, height, ChannelLayout::rgb);
  const double north_offset = compass_deg * kPi / 180.0;
  for (int row = 0; row < height; ++row) {
    const double pitch = (0.5 - static_cast<double>(row) / height) * kPi;
    for (int col = 0; col < width; ++col) {
      const double yaw = north_offset + static_cast<double>(col) / width * 2.0 * kPi;
      const Rgb c = trace(std::cos(pitch) * std::sin(yaw), std::cos(pitch) * std::cos(yaw), std::sin(pitch), cam_z);
      auto* px = img.pixel(col, row);
      px[0] = static_cast<std::uint8_t>(std::lround(c.r));
      px[1] = static_cast<std::uint8_t>(std::lround(c.g));
      px[2] = static_cast<std::uint8_t>(std::lround(c.b));
    }
  }
  return img;
}

Image flat_photo(int width, int height, std::uint64_t seed) {
  Image img(width, height, ChannelLayout::rgb);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto* px = img.pixel(x, y);
      const auto h = hash(seed, (x / 32) * 1000 + y / 32);
      px[0] = static_cast<std::uint8_t>(80 + h % 100);
      px[1] = static_cast<std::uint8_t>(90 + (h >> 8) % 90);
      px[2] = static_cast<std::uint8_t>(100 + (h >> 16) % 80);
    }
  }
  return img;
}

// Stylised figure: red coat on a light backdrop.
Image reference_figure() {
  Image img(128, 256, ChannelLayout::rgb);
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 128; ++x) {
      auto* px = img.pixel(x, y);
      const double dx = x - 64.0;
      std::uint8_t r = 236, g = 232, b = 224;
      if (std::hypot(dx, y - 40.0) < 18.0) r = 224, g = 184, b = 150;
      else if (y > 60 && y < 170 && std::abs(dx) < 26.0 + (y - 60) * 0.12) r = 190, g = 30, b = 40;
      else if (y >= 170 && y < 240 && std::abs(std::abs(dx) - 10.0) < 7.0) r = 40, g = 40, b = 48;
      px[0] = r, px[1] = g, px[2] = b;
    }
  }
  return img;
}

double lat_at(double base_lat_deg, double north_m) {
  return base_lat_deg + north_m / streetstage::geo::kEarthRadius * 180.0 / kPi;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <out_dir>\n";
    return 2;
  }
  const fs::path out = argv[1];
  const fs::path fixtures = out / "fixtures";
  fs::create_directories(fixtures);
  fs::create_directories(out / "refs");

  constexpr double kLat = 40.0100, kLon = -105.2700;
  struct Pano {
    const char* id;
    int width;
    double compass;
    double cam_z;
    std::int64_t captured_at;
  };
  const Pano panos[] = {{"demo-0001", 4096, 12.5, 0.0, 1690000000000},
                        {"demo-0002", 2048, 187.0, 18.0, 1695000000000},
                        {"demo-0003", 2048, 4.0, -16.0, 1680000000000}};

  json nodes = json::array();
  for (const auto& p : panos) {
    streetstage::write_png(street_panorama(p.width, p.compass, p.cam_z), fixtures / (std::string(p.id) + ".png"));
    nodes.push_back({{"id", p.id},
                     {"lat_deg", lat_at(kLat, p.cam_z)},
                     {"lon_deg", kLon},
                     {"compass_angle_deg", p.compass},
                     {"is_pano", true},
                     {"captured_at", p.captured_at},
                     {"width", p.width},
                     {"height", p.width / 2}});
    std::cout << "wrote " << p.id << "\n";
  }
  for (int i = 1; i <= 2; ++i) {
    const std::string id = "flat-000" + std::to_string(i);
    streetstage::write_png(flat_photo(640, 480, i), fixtures / (id + ".png"));
    nodes.push_back({{"id", id},
                     {"lat_deg", lat_at(kLat, 6.0 * i)},
                     {"lon_deg", kLon + 0.00003 * i},
                     {"compass_angle_deg", 90.0 * i},
                     {"is_pano", false},
                     {"captured_at", 1700000000000 + i},
                     {"width", 640},
                     {"height", 480}});
  }
  // Valid signature, truncated body.
  {
    const auto good = streetstage::encode_png(flat_photo(64, 32, 9));
    const std::span<const std::uint8_t> head(good.data(), 48);
    streetstage::write_file_atomic(fixtures / "corrupt-0001.png", head);
    nodes.push_back({{"id", "corrupt-0001"},
                     {"lat_deg", lat_at(kLat, 40.0)},
                     {"lon_deg", kLon},
                     {"compass_angle_deg", 0.0},
                     {"is_pano", true},
                     {"captured_at", 1600000000000}});
  }

  const std::string text = json{{"nodes", nodes}}.dump(2) + "\n";
  streetstage::write_file_atomic(fixtures / "nodes.json",
                                 {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  streetstage::write_png(reference_figure(), out / "refs" / "red_coat.png");
  std::cout << "wrote " << (fixtures / "nodes.json").string() << "\n";
  return 0;
}
