#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <chrono>
#include <cstring>

#include "streetstage/error.hpp"
#include "streetstage/genbackend.hpp"
#include "streetstage/geo.hpp"
#include "streetstage/image.hpp"
#include "streetstage/panorama.hpp"
#include "streetstage/render.hpp"
#include "streetstage/scene_io.hpp"
#include "streetstage/service.hpp"
#include "streetstage/staging.hpp"

namespace py = pybind11;
using namespace streetstage;
using nlohmann::json;

namespace {

PyObject* g_error = nullptr;

// JSON crosses the boundary as text; the Python side sees dicts and lists.
py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
json from_py(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::array_t<std::uint8_t> to_array(const Image& img) {
  py::array_t<std::uint8_t> out({img.height(), img.width(), img.channels()});
  std::memcpy(out.mutable_data(), img.bytes().data(), img.bytes().size());
  return out;
}

Image from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || (a.shape(2) != 3 && a.shape(2) != 4)) {
    throw Error(ErrorCode::InvalidArgument, "expected an HxWx3 or HxWx4 uint8 array");
  }
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
            a.shape(2) == 3 ? ChannelLayout::rgb : ChannelLayout::rgba);
  std::memcpy(img.bytes().data(), a.data(), img.bytes().size());
  return img;
}

std::string visibility_name(geo::Visibility v) {
  switch (v) {
    case geo::Visibility::on_screen: return "on_screen";
    case geo::Visibility::off_screen: return "off_screen";
    case geo::Visibility::behind_camera: return "behind_camera";
  }
  return "?";
}

py::list diagnostics(const std::vector<staging::Diagnostic>& ds) {
  py::list out;
  for (const auto& d : ds) out.append(py::make_tuple(d.path, d.message));
  return out;
}

// Service plus the blocking wait the CLI does.
struct PyService {
  explicit PyService(service::Config c) : svc(std::move(c)) {}
  service::Service svc;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "streetstage core: projection, staging, rendering and the render queue";

  g_error = PyErr_NewException("streetstage._core.Error", PyExc_RuntimeError, nullptr);
  m.add_object("Error", py::handle(g_error));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const service::SceneRejected& e) {
      py::object inst = py::reinterpret_borrow<py::object>(g_error)(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      inst.attr("diagnostics") = diagnostics(e.diagnostics());
      PyErr_SetObject(g_error, inst.ptr());
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(g_error)(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      inst.attr("diagnostics") = py::list();
      PyErr_SetObject(g_error, inst.ptr());
    }
  });

  // --- geo ---
  py::class_<geo::GeoPoint>(m, "GeoPoint")
      .def(py::init<>())
      .def_static("from_degrees", &geo::GeoPoint::from_degrees, py::arg("lat_deg"), py::arg("lon_deg"))
      .def_static("from_radians", &geo::GeoPoint::from_radians, py::arg("lat"), py::arg("lon"))
      .def_readwrite("latitude", &geo::GeoPoint::latitude)
      .def_readwrite("longitude", &geo::GeoPoint::longitude)
      .def_property_readonly("lat_deg", [](const geo::GeoPoint& p) { return geo::rad_to_deg(p.latitude); })
      .def_property_readonly("lon_deg", [](const geo::GeoPoint& p) { return geo::rad_to_deg(p.longitude); })
      .def("__repr__", [](const geo::GeoPoint& p) {
        return "GeoPoint(" + std::to_string(geo::rad_to_deg(p.latitude)) + ", " +
               std::to_string(geo::rad_to_deg(p.longitude)) + ")";
      });

  py::class_<geo::ScreenSize>(m, "ScreenSize")
      .def(py::init([](int w, int h) { return geo::ScreenSize{w, h}; }), py::arg("width") = 1280,
           py::arg("height") = 720)
      .def_readwrite("width", &geo::ScreenSize::width)
      .def_readwrite("height", &geo::ScreenSize::height);

  // Angles in radians, as in C++.
  py::class_<geo::CameraPose>(m, "CameraPose")
      .def(py::init([](geo::GeoPoint pos, double heading, double pitch, double hfov, double vfov, double h) {
             return geo::CameraPose{pos, heading, pitch, hfov, vfov, h};
           }),
           py::arg("position"), py::arg("heading") = 0.0, py::arg("pitch") = 0.0,
           py::arg("horizontal_fov") = geo::kPi / 2, py::arg("vertical_fov") = geo::kPi / 2,
           py::arg("height_above_ground") = 2.5)
      .def_readwrite("position", &geo::CameraPose::position)
      .def_readwrite("heading", &geo::CameraPose::heading)
      .def_readwrite("pitch", &geo::CameraPose::pitch)
      .def_readwrite("horizontal_fov", &geo::CameraPose::horizontal_fov)
      .def_readwrite("vertical_fov", &geo::CameraPose::vertical_fov)
      .def_readwrite("height_above_ground", &geo::CameraPose::height_above_ground);

  m.def("vertical_fov_for", &geo::vertical_fov_for, py::arg("horizontal_fov"), py::arg("screen"));
  m.def("enu_offset",
        [](const geo::GeoPoint& actor, const geo::GeoPoint& camera) {
          const auto o = geo::enu_offset(actor, camera);
          return py::make_tuple(o.east, o.north);
        },
        py::arg("actor"), py::arg("camera"));
  m.def("offset_to_geo",
        [](const geo::GeoPoint& origin, double east, double north) {
          return geo::offset_to_geo(origin, {east, north});
        },
        py::arg("origin"), py::arg("east"), py::arg("north"));
  m.def("project_actor_point",
        [](const geo::GeoPoint& actor, double subject_height, const geo::CameraPose& camera,
           const geo::ScreenSize& screen) {
          const auto p = geo::project_actor_point(actor, subject_height, camera, screen);
          return py::make_tuple(p.u, p.v, visibility_name(p.visibility));
        },
        py::arg("actor"), py::arg("subject_height"), py::arg("camera"), py::arg("screen"),
        "(u, v, visibility) with visibility one of on_screen, off_screen, behind_camera");
  m.def("unproject_to_ground", &geo::unproject_to_ground, py::arg("u"), py::arg("v"), py::arg("camera"),
        py::arg("screen"));

  // --- scenes ---
  py::class_<staging::Scene>(m, "Scene")
      .def_readwrite("node_id", &staging::Scene::node_id)
      .def_readwrite("scene_prompt", &staging::Scene::scene_prompt)
      .def_readwrite("duration", &staging::Scene::duration)
      .def_readwrite("fps", &staging::Scene::fps)
      .def_readwrite("resolution", &staging::Scene::resolution)
      .def_readwrite("camera_base", &staging::Scene::camera_base)
      .def_property_readonly("actor_ids",
                             [](const staging::Scene& s) {
                               std::vector<std::string> ids;
                               for (const auto& a : s.actors) ids.push_back(a.id);
                               return ids;
                             })
      .def_property_readonly("frame_count", &staging::frame_count)
      .def("to_dict", [](const staging::Scene& s) { return to_py(scene_io::to_json(s)); })
      .def_static("from_dict", [](const py::object& d) {
        auto s = scene_io::scene_from_json(from_py(d));
        staging::normalize(s);
        return s;
      });

  m.def("load_scene", [](const std::filesystem::path& path) {
    auto s = scene_io::load_scene(path);
    staging::normalize(s);
    return s;
  });
  m.def("save_scene", &scene_io::save_scene, py::arg("scene"), py::arg("path"));
  m.def("validate_scene", [](const staging::Scene& s) { return diagnostics(staging::validate_scene(s)); },
        "List of (path, message); empty when the scene is valid.");
  m.def("check_scene",
        [](const staging::Scene& s, const std::filesystem::path& base_dir) {
          return diagnostics(service::check_scene(s, base_dir));
        },
        py::arg("scene"), py::arg("base_dir"));
  m.def("resolve_references", &service::resolve_references, py::arg("scene"), py::arg("base_dir"));
  m.def("camera_at", &staging::camera_at, py::arg("scene"), py::arg("t"));
  m.def("sample_scene",
        [](const staging::Scene& s, double t) { return to_py(service::to_json(staging::sample_scene(s, t), s, t)); },
        py::arg("scene"), py::arg("t"));

  // --- images and panoramas ---
  m.def("read_image", [](const std::filesystem::path& p) { return to_array(read_image(p)); });
  m.def("write_png", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                        const std::filesystem::path& p) { write_png(from_array(a), p); });

  py::class_<panorama::Panorama, std::shared_ptr<panorama::Panorama>>(m, "Panorama")
      .def(py::init([](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                       double north_offset) { return std::make_shared<panorama::Panorama>(from_array(a), north_offset); }),
           py::arg("pixels"), py::arg("north_offset") = 0.0)
      .def_static("load",
                  [](const std::filesystem::path& p, double north_offset) {
                    return std::make_shared<panorama::Panorama>(read_image(p), north_offset);
                  },
                  py::arg("path"), py::arg("north_offset") = 0.0)
      .def_property_readonly("width", &panorama::Panorama::width)
      .def_property_readonly("height", &panorama::Panorama::height)
      .def_property_readonly("north_offset", &panorama::Panorama::north_offset);

  m.def("render_view",
        [](const panorama::Panorama& pano, const geo::CameraPose& camera, const geo::ScreenSize& screen) {
          Image img;
          {
            py::gil_scoped_release nogil;
            img = panorama::render_view(pano, camera, screen);
          }
          return to_array(img);
        },
        py::arg("pano"), py::arg("camera"), py::arg("screen"));

  // --- render inputs, bundles, mock generation ---
  m.def("render_inputs",
        [](const staging::Scene& s, const panorama::Panorama& pano, const std::filesystem::path& out) {
          render::RenderedInputs r;
          {
            py::gil_scoped_release nogil;
            r = render::render_to_directory(s, pano, out);
          }
          return py::make_tuple(r.background, r.masks);
        },
        py::arg("scene"), py::arg("pano"), py::arg("out_dir"), "Returns (background_dir, [mask_dirs]).");
  m.def("read_manifest", [](const std::filesystem::path& dir) {
    const auto mf = render::read_manifest(dir);
    return py::dict(py::arg("count") = mf.count, py::arg("fps") = mf.fps,
                    py::arg("width") = mf.resolution.width, py::arg("height") = mf.resolution.height);
  });
  m.def("read_frame", [](const std::filesystem::path& dir, int k) { return to_array(render::read_frame(dir, k)); });

  py::class_<genbackend::JobBundle>(m, "JobBundle")
      .def_readonly("bundle_id", &genbackend::JobBundle::bundle_id)
      .def_readonly("scene_prompt", &genbackend::JobBundle::scene_prompt)
      .def_property_readonly("mask_count", [](const genbackend::JobBundle& b) { return b.masks.size(); })
      .def("write", [](const genbackend::JobBundle& b, const std::filesystem::path& p) { genbackend::write_bundle(b, p); });

  m.def("build_bundle",
        [](const staging::Scene& s, const std::filesystem::path& background,
           const std::vector<std::filesystem::path>& masks) {
          return genbackend::build_bundle(s, render::RenderedInputs{background, masks});
        },
        py::arg("scene"), py::arg("background"), py::arg("masks"));
  m.def("load_bundle", &genbackend::load_bundle, py::arg("path"));
  m.def("mock_generate",
        [](const genbackend::JobBundle& b, const std::filesystem::path& work_dir, int latency_ms) {
          py::gil_scoped_release nogil;
          return genbackend::mock_generate(b, work_dir, std::chrono::milliseconds(latency_ms)).dir;
        },
        py::arg("bundle"), py::arg("work_dir"), py::arg("latency_ms") = 0,
        "Runs every mask sub-job in order; returns the final frame directory.");

  // --- service ---
  py::class_<PyService>(m, "Service")
      .def(py::init([](const py::object& config, const std::filesystem::path& base_dir) {
             return std::make_unique<PyService>(service::config_from_json(from_py(config), base_dir));
           }),
           py::arg("config") = py::dict(), py::arg("base_dir") = std::filesystem::path("."))
      .def_static("from_file",
                  [](const std::filesystem::path& p) { return std::make_unique<PyService>(service::load_config(p)); })
      .def("search_nodes",
           [](PyService& s, const std::string& bbox, int limit) {
             json out = json::array();
             for (const auto& n : s.svc.search_nodes(service::parse_bbox(bbox), limit)) {
               out.push_back(service::to_json(n));
             }
             return to_py(out);
           },
           py::arg("bbox"), py::arg("limit") = 100, "bbox is 'minLon,minLat,maxLon,maxLat' in degrees")
      .def("view",
           [](PyService& s, const std::string& node, double heading, double pitch, double hfov, int w, int h) {
             Image img;
             {
               py::gil_scoped_release nogil;
               img = s.svc.view(node, heading, pitch, hfov, {w, h});
             }
             return to_array(img);
           },
           py::arg("node_id"), py::arg("heading"), py::arg("pitch"), py::arg("hfov"), py::arg("width") = 1280,
           py::arg("height") = 720)
      .def("new_scene", [](PyService& s, const std::string& node) { return s.svc.new_scene(node); })
      .def("preview",
           [](PyService& s, const staging::Scene& scene, double t) {
             Image img;
             {
               py::gil_scoped_release nogil;
               img = s.svc.preview(scene, t);
             }
             return to_array(img);
           },
           py::arg("scene"), py::arg("t"))
      .def("render", [](PyService& s, const staging::Scene& scene, const std::filesystem::path& work_dir) {
             py::gil_scoped_release nogil;
             return s.svc.render(scene, work_dir);
           },
           py::arg("scene"), py::arg("work_dir"), "Prepares inputs, submits the bundle and returns the job id.")
      .def("job",
           [](PyService& s, const std::string& id) -> py::object {
             const auto j = s.svc.queue().poll(id);
             if (!j) return py::none();
             return to_py(queue::to_json(*j));
           })
      .def("jobs",
           [](PyService& s) {
             json out = json::array();
             for (const auto& j : s.svc.queue().jobs()) out.push_back(queue::to_json(j));
             return to_py(out);
           })
      .def("wait",
           [](PyService& s, const std::string& id, double timeout_s) {
             queue::RenderJob j;
             {
               py::gil_scoped_release nogil;
               j = s.svc.queue().wait(id, std::chrono::milliseconds(static_cast<std::int64_t>(timeout_s * 1000)));
             }
             return to_py(queue::to_json(j));
           },
           py::arg("job_id"), py::arg("timeout_s") = 60.0);
}
