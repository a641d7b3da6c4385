#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <memory>

#include "tiltshift/depth_pointcloud.hpp"
#include "tiltshift/errors.hpp"
#include "tiltshift/lightfield_io.hpp"
#include "tiltshift/parallel.hpp"
#include "tiltshift/plane_interaction.hpp"
#include "tiltshift/refocus.hpp"
#include "tiltshift/synthetic.hpp"

namespace py = pybind11;
using namespace tiltshift;

namespace {

using Dataset = std::shared_ptr<LightFieldDataset>;

template <typename T, int C>
py::array_t<T> to_array(const Raster<T, C>& raster) {
  std::vector<py::ssize_t> shape{raster.height(), raster.width()};
  if (C > 1) shape.push_back(C);
  py::array_t<T> out(shape);
  std::memcpy(out.mutable_data(), raster.data().data(), raster.data().size() * sizeof(T));
  return out;
}

Image image_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) throw Error(ErrorCode::InvalidArgument, "expected an HxWx3 uint8 array");
  Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
  std::memcpy(img.data().data(), arr.data(), img.data().size());
  return img;
}

ImageF float_image_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) throw Error(ErrorCode::InvalidArgument, "expected an HxWx3 float array");
  ImageF img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
  std::memcpy(img.data().data(), arr.data(), img.data().size() * sizeof(float));
  return img;
}

ApertureProfile profile_from(const std::string& name) {
  if (name == "uniform") return ApertureProfile::Uniform;
  if (name == "gaussian") return ApertureProfile::Gaussian;
  throw Error(ErrorCode::InvalidArgument, "profile must be 'uniform' or 'gaussian'");
}

py::tuple refocus_result(const RefocusImage& img) {
  return py::make_tuple(to_array(img.image), to_array(img.coverage));
}

template <typename Fn>
auto without_gil(Fn&& fn) {
  py::gil_scoped_release release;
  return fn();
}

}  // namespace

PYBIND11_MODULE(_tiltshift, m) {
  m.doc() = "Tilt-shift light field refocusing";

  // Module-lifetime handle; the type object is owned by the module dict.
  static PyObject* error_type = py::exception<Error>(m, "TiltshiftError", PyExc_RuntimeError).ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object instance = py::reinterpret_borrow<py::object>(error_type)(e.what());
      instance.attr("code") = to_string(e.code());
      PyErr_SetObject(error_type, instance.ptr());
    }
  });

  m.def("set_thread_count", &set_thread_count, py::arg("threads"));

  py::class_<CameraCalibration>(m, "Calibration")
      .def(py::init<const Mat3&, const Mat3&, const Vec3&>(), py::arg("K"), py::arg("R"), py::arg("t"))
      .def_static("from_intrinsics", &CameraCalibration::from_intrinsics, py::arg("fx"), py::arg("fy"), py::arg("cx"),
                  py::arg("cy"), py::arg("R") = Mat3::Identity(), py::arg("t") = Vec3::Zero())
      .def_property_readonly("K", &CameraCalibration::K)
      .def_property_readonly("R", &CameraCalibration::R)
      .def_property_readonly("t", &CameraCalibration::t)
      .def_property_readonly("center", &CameraCalibration::center)
      .def_property_readonly("optical_axis", &CameraCalibration::optical_axis)
      .def("project", &CameraCalibration::project, py::arg("point"))
      .def("rescaled", &CameraCalibration::rescaled, py::arg("factor"));

  py::class_<RefocusPlane>(m, "Plane")
      .def(py::init<const Vec3&, const Vec3&>(), py::arg("point"), py::arg("normal"))
      .def_property_readonly("point", &RefocusPlane::point)
      .def_property_readonly("normal", &RefocusPlane::normal)
      .def("signed_distance", &RefocusPlane::signed_distance, py::arg("x"))
      .def("flipped", &RefocusPlane::flipped)
      .def("__repr__", [](const RefocusPlane& p) {
        return py::str("Plane(point={}, normal={})")
            .format(py::make_tuple(p.point().x(), p.point().y(), p.point().z()),
                    py::make_tuple(p.normal().x(), p.normal().y(), p.normal().z()));
      });

  m.def("plane_distance", &plane_distance, py::arg("plane"), py::arg("ref_cal"));
  m.def("homography", &homography, py::arg("cal"), py::arg("plane"), py::arg("d"));
  m.def(
      "projection_map",
      [](const CameraCalibration& target, const CameraCalibration& ref, const RefocusPlane& plane) {
        return projection_map(target, ref, plane).P;
      },
      py::arg("target_cal"), py::arg("ref_cal"), py::arg("plane"));
  m.def(
      "apply_projection", [](const Mat3& P, const Vec2& uv) { return apply_projection(ProjectionMap{P}, uv); },
      py::arg("P"), py::arg("uv"));

  py::class_<LightFieldDataset, Dataset>(m, "Dataset")
      .def_property_readonly("grid_rows", &LightFieldDataset::grid_rows)
      .def_property_readonly("grid_cols", &LightFieldDataset::grid_cols)
      .def_property_readonly("width", &LightFieldDataset::width)
      .def_property_readonly("height", &LightFieldDataset::height)
      .def_property_readonly("has_disparity", &LightFieldDataset::has_disparity)
      .def_property_readonly("center", [](const LightFieldDataset& ds) { return py::make_tuple(ds.center().s, ds.center().t); })
      .def("view", [](const LightFieldDataset& ds, int s, int t) { return to_array(ds.view({s, t})); }, py::arg("s"),
           py::arg("t"))
      .def(
          "disparity",
          [](const LightFieldDataset& ds, int s, int t) -> py::object {
            const auto& d = ds.disparity({s, t});
            if (!d) return py::none();
            return to_array(d->values());
          },
          py::arg("s"), py::arg("t"))
      .def("calibration", [](const LightFieldDataset& ds, int s, int t) { return ds.calibration({s, t}); },
           py::arg("s"), py::arg("t"))
      .def("save", [](const LightFieldDataset& ds, const std::filesystem::path& dir) { write_dataset(ds, dir); },
           py::arg("directory"));

  m.def(
      "load_dataset", [](const std::filesystem::path& dir) { return std::make_shared<LightFieldDataset>(load_dataset(dir)); },
      py::arg("directory"));
  m.def(
      "synthetic_plane_dataset",
      [](const Vec3& point, const Vec3& normal, int rows, int cols, int width, int height, double focal,
         double baseline, double jitter_deg, double magnification, std::uint64_t seed) {
        CameraGridOptions opt{rows, cols, width, height, focal, baseline, jitter_deg, seed};
        return without_gil([&] {
          return std::make_shared<LightFieldDataset>(
              render_scene(make_plane_scene(RefocusPlane(point, normal), opt, magnification)));
        });
      },
      py::arg("point") = Vec3(0, 0, 2), py::arg("normal") = Vec3(0, 0, 1), py::arg("rows") = 3, py::arg("cols") = 3,
      py::arg("width") = 64, py::arg("height") = 64, py::arg("focal") = 100.0, py::arg("baseline") = 0.1,
      py::arg("jitter_deg") = 0.0, py::arg("magnification") = 4.0, py::arg("seed") = 1);

  py::class_<Aperture>(m, "Aperture")
      .def_property_readonly("reference", [](const Aperture& a) { return py::make_tuple(a.reference.s, a.reference.t); })
      .def_readonly("radius", &Aperture::radius)
      .def_property_readonly("entries", [](const Aperture& a) {
        py::list out;
        for (const auto& e : a.entries) out.append(py::make_tuple(e.view.s, e.view.t, e.weight));
        return out;
      });

  m.def(
      "make_aperture",
      [](const LightFieldDataset& ds, std::pair<double, double> reference, double radius, const std::string& profile) {
        return make_aperture(ds, {reference.first, reference.second}, radius, profile_from(profile));
      },
      py::arg("dataset"), py::arg("reference"), py::arg("radius"), py::arg("profile") = "uniform");

  m.def(
      "refocus",
      [](const LightFieldDataset& ds, const Aperture& ap, const RefocusPlane& plane,
         std::optional<CameraCalibration> ref_cal) {
        const CameraCalibration cal = ref_cal ? *ref_cal : virtual_calibration(ds, ap.reference);
        return refocus_result(without_gil([&] { return refocus_generalized(ds, ap, plane, cal); }));
      },
      py::arg("dataset"), py::arg("aperture"), py::arg("plane"), py::arg("ref_cal") = py::none(),
      "Generalized refocus through a plane. Returns (image HxWx3 float32, coverage HxW float32).");
  m.def(
      "shift_and_sum",
      [](const LightFieldDataset& ds, const Aperture& ap, double delta) {
        return refocus_result(without_gil([&] { return shift_and_sum(ds, ap, delta); }));
      },
      py::arg("dataset"), py::arg("aperture"), py::arg("delta"));
  m.def(
      "refocus_at_virtual_view",
      [](const LightFieldDataset& ds, std::pair<double, double> ref, double radius, const py::object& focus,
         const std::string& profile) {
        const FocusTarget target = py::isinstance<RefocusPlane>(focus) ? FocusTarget(focus.cast<RefocusPlane>())
                                                                        : FocusTarget(focus.cast<double>());
        return refocus_result(without_gil([&] {
          return refocus_at_virtual_view(ds, {ref.first, ref.second}, radius, target, profile_from(profile));
        }));
      },
      py::arg("dataset"), py::arg("reference"), py::arg("radius"), py::arg("target"), py::arg("profile") = "uniform");
  m.def(
      "oracle_refocus",
      [](const LightFieldDataset& ds, const Aperture& ap, const RefocusPlane& plane, const CameraCalibration& ref_cal) {
        return refocus_result(without_gil([&] { return oracle_refocus(ds, ap, plane, ref_cal); }));
      },
      py::arg("dataset"), py::arg("aperture"), py::arg("plane"), py::arg("ref_cal"));
  m.def(
      "psnr",
      [](const py::array_t<float>& a, const py::array_t<float>& b) {
        return psnr(float_image_from_array(a), float_image_from_array(b));
      },
      py::arg("a"), py::arg("b"));

  m.def("disparity_to_depth", &disparity_to_depth, py::arg("disparity"), py::arg("focal"), py::arg("baseline"));
  m.def("reproject_pixel", &reproject_pixel, py::arg("uv"), py::arg("z"), py::arg("cal"));

  py::class_<PointCloud>(m, "PointCloud")
      .def_property_readonly("points",
                             [](const PointCloud& c) {
                               py::array_t<double> out({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
                               auto w = out.mutable_unchecked<2>();
                               for (std::size_t i = 0; i < c.size(); ++i) {
                                 for (int k = 0; k < 3; ++k) w(i, k) = c.points[i][k];
                               }
                               return out;
                             })
      .def_property_readonly("colors",
                             [](const PointCloud& c) {
                               py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
                               std::memcpy(out.mutable_data(), c.colors.data(), c.size() * 3);
                               return out;
                             })
      .def_property_readonly("normals",
                             [](const PointCloud& c) -> py::object {
                               if (!c.has_normals()) return py::none();
                               py::array_t<double> out({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
                               auto w = out.mutable_unchecked<2>();
                               for (std::size_t i = 0; i < c.size(); ++i) {
                                 for (int k = 0; k < 3; ++k) w(i, k) = c.normals[i][k];
                               }
                               return out;
                             })
      .def("__len__", &PointCloud::size)
      .def("export_ply", [](const PointCloud& c, const std::filesystem::path& path) { export_ply(c, path); },
           py::arg("path"));

  m.def(
      "build_point_cloud",
      [](const LightFieldDataset& ds, std::optional<std::vector<std::pair<int, int>>> views, int stride, int normals) {
        std::vector<ViewIndex> selection;
        if (views) {
          for (const auto& [s, t] : *views) selection.push_back({s, t});
        }
        return without_gil([&] {
          PointCloud cloud = build_point_cloud(ds, selection, stride);
          if (normals > 0) cloud = estimate_normals(std::move(cloud), normals).cloud;
          return cloud;
        });
      },
      py::arg("dataset"), py::arg("views") = py::none(), py::arg("stride") = 1, py::arg("normals") = 0,
      "Point cloud of the selected views (default: grid center); normals > 0 estimates normals with that many neighbours.");

  m.def("plane_from_three_points", &plane_from_three_points, py::arg("a"), py::arg("b"), py::arg("c"),
        py::arg("viewpoint") = Vec3::Zero());
  m.def(
      "plane_from_manual",
      [](double z, double rot_x, double rot_y, double rot_z, const CameraCalibration& ref_cal) {
        return plane_from_manual({z, rot_x, rot_y, rot_z}, ref_cal);
      },
      py::arg("z"), py::arg("rot_x") = 0.0, py::arg("rot_y") = 0.0, py::arg("rot_z") = 0.0, py::arg("ref_cal"));
  m.def(
      "adjust_plane",
      [](const RefocusPlane& plane, double dz, double drot_x, double drot_y, const CameraCalibration& ref_cal) {
        return adjust_plane(plane, {dz, drot_x, drot_y}, ref_cal);
      },
      py::arg("plane"), py::arg("dz") = 0.0, py::arg("drot_x") = 0.0, py::arg("drot_y") = 0.0, py::arg("ref_cal"));
  m.def(
      "plane_from_click",
      [](const LightFieldDataset& ds, std::pair<int, int> view, std::pair<double, double> uv, int k) {
        return without_gil([&] {
          const ViewIndex ref{view.first, view.second};
          const std::vector<ViewIndex> selection{ref};
          const NormalEstimate est = estimate_normals(build_point_cloud(ds, selection), k);
          return plane_from_click(ds, ref, Vec2(uv.first, uv.second), *est.normal_map);
        });
      },
      py::arg("dataset"), py::arg("view"), py::arg("uv"), py::arg("k") = 8);

  m.def("save_image", [](const py::array_t<std::uint8_t>& img, const std::filesystem::path& path) {
    save_image(image_from_array(img), path);
  }, py::arg("image"), py::arg("path"));
  m.def("load_image", [](const std::filesystem::path& path) { return to_array(load_image(path)); }, py::arg("path"));
  m.def("to_8bit", [](const py::array_t<float>& img) { return to_array(to_8bit(float_image_from_array(img))); },
        py::arg("image"));
}
