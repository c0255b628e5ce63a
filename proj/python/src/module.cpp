// SPDX-License-Identifier: Apache-2.0
// Python bindings for the core operations.
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lidarsim/error.hpp"
#include "lidarsim/ingest.hpp"
#include "lidarsim/metrics.hpp"
#include "lidarsim/parallel.hpp"
#include "lidarsim/pipeline.hpp"
#include "lidarsim/raycast.hpp"
#include "lidarsim/raydrop.hpp"
#include "lidarsim/reconstruct.hpp"

namespace py = pybind11;
using namespace lidarsim;

namespace {

using RowsX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

RowsX3 to_rows(const std::vector<Vec3>& v) {
  RowsX3 m(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

std::vector<Vec3> from_rows(const RowsX3& m) {
  std::vector<Vec3> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m.row(i).transpose();
  return v;
}

py::object json_to_py(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Json py_to_json(const py::object& o) {
  return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

template <class T>
py::object optional_array(const std::optional<std::vector<T>>& v) {
  if (!v) return py::none();
  return py::array_t<T>(static_cast<py::ssize_t>(v->size()), v->data());
}

RigidTransform pose_of(const std::optional<Eigen::Matrix4d>& m) {
  return m ? RigidTransform::from_matrix(*m) : RigidTransform{};
}

BeamTable beam_table(const Eigen::VectorXd& azimuth, const Eigen::VectorXd& elevation, double max_range) {
  if (azimuth.size() != elevation.size()) throw DomainError("azimuth and elevation lengths differ");
  BeamTable t;
  t.max_range = max_range;
  for (Eigen::Index i = 0; i < azimuth.size(); ++i) t.rays.push_back({azimuth[i], elevation[i], std::nullopt});
  return t;
}

py::dict frame_to_dict(const SimulatedFrame& f) {
  py::dict d;
  d["cloud"] = f.cloud;
  d["ray_index"] = py::array_t<std::size_t>(static_cast<py::ssize_t>(f.ray_index.size()), f.ray_index.data());
  d["hit"] = py::array_t<std::uint8_t>(static_cast<py::ssize_t>(f.hit.size()), f.hit.data());
  return d;
}

std::vector<RayFeature> features_of(const RowsX3& m) {
  std::vector<RayFeature> f(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) f[static_cast<std::size_t>(i)] = {m(i, 0), m(i, 1), m(i, 2)};
  return f;
}

}  // namespace

PYBIND11_MODULE(_lidarsim, m) {
  m.doc() = "LiDAR point cloud simulation: raycasting, raydrop, reconstruction and metrics";
  m.attr("__version__") = LIDARSIM_VERSION;

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_OSError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<PointCloud>(m, "PointCloud")
      .def(py::init<>())
      .def(py::init([](const RowsX3& xyz, std::optional<std::vector<double>> intensity) {
             PointCloud c;
             c.xyz = from_rows(xyz);
             c.intensity = std::move(intensity);
             c.validate();
             return c;
           }),
           py::arg("xyz"), py::arg("intensity") = py::none())
      .def("__len__", &PointCloud::size)
      .def_property(
          "xyz", [](const PointCloud& c) { return to_rows(c.xyz); },
          [](PointCloud& c, const RowsX3& m) { c.xyz = from_rows(m); })
      .def_property(
          "intensity", [](const PointCloud& c) { return optional_array(c.intensity); },
          [](PointCloud& c, std::optional<std::vector<double>> v) { c.intensity = std::move(v); })
      .def_property(
          "elongation", [](const PointCloud& c) { return optional_array(c.elongation); },
          [](PointCloud& c, std::optional<std::vector<double>> v) { c.elongation = std::move(v); })
      .def_property(
          "beam_id", [](const PointCloud& c) { return optional_array(c.beam_id); },
          [](PointCloud& c, std::optional<std::vector<std::int32_t>> v) { c.beam_id = std::move(v); })
      .def_property(
          "normals",
          [](const PointCloud& c) -> py::object {
            if (!c.normals) return py::none();
            return py::cast(to_rows(*c.normals));
          },
          [](PointCloud& c, const std::optional<RowsX3>& m) {
            if (m) c.normals = from_rows(*m);
            else c.normals.reset();
          })
      .def("validate", &PointCloud::validate)
      .def("__eq__", [](const PointCloud& a, const PointCloud& b) { return a == b; })
      .def("__repr__", [](const PointCloud& c) { return "<PointCloud with " + std::to_string(c.size()) + " points>"; });

  py::class_<RaycastConfig>(m, "RaycastConfig")
      .def(py::init<>())
      .def(py::init([](const py::dict& d) { return raycast_config_from_json(py_to_json(d)); }), py::arg("fields"))
      .def_readwrite("width", &RaycastConfig::width)
      .def_readwrite("height", &RaycastConfig::height)
      .def_readwrite("peak_width", &RaycastConfig::peak_width)
      .def_readwrite("idw_power", &RaycastConfig::idw_power)
      .def_readwrite("azimuth_min", &RaycastConfig::azimuth_min)
      .def_readwrite("azimuth_span", &RaycastConfig::azimuth_span)
      .def_readwrite("elevation_min", &RaycastConfig::elevation_min)
      .def_readwrite("elevation_max", &RaycastConfig::elevation_max)
      .def("validate", &RaycastConfig::validate)
      .def("to_dict", [](const RaycastConfig& c) { return json_to_py(to_json(c)); });

  m.def("set_workers", &set_default_workers, py::arg("workers"), "Default worker count for parallel loops.");

  m.def("read_cloud", &read_cloud, py::arg("path"));
  m.def(
      "write_cloud",
      [](const PointCloud& c, const std::filesystem::path& p, const std::string& format) {
        write_cloud(c, p, parse_cloud_format(format));
      },
      py::arg("cloud"), py::arg("path"), py::arg("format") = "binary");

  m.def(
      "raycast",
      [](const PointCloud& scene, const Eigen::VectorXd& azimuth, const Eigen::VectorXd& elevation,
         const RaycastConfig& config, const std::string& method, std::optional<Eigen::Matrix4d> sensor_pose,
         double max_range) {
        const BeamTable beams = beam_table(azimuth, elevation, max_range);
        const RigidTransform pose = pose_of(sensor_pose);
        if (method != "fpa" && method != "cp") throw DomainError("method must be \"fpa\" or \"cp\"");
        SimulatedFrame f;
        {
          py::gil_scoped_release release;
          f = method == "fpa" ? raycast_fpa(scene, pose, beams, config) : raycast_cp(scene, pose, beams, config);
        }
        return frame_to_dict(f);
      },
      py::arg("scene"), py::arg("azimuth"), py::arg("elevation"), py::arg("config") = RaycastConfig{},
      py::arg("method") = "fpa", py::arg("sensor_pose") = py::none(), py::arg("max_range") = 75.0,
      "Casts one ray per (azimuth, elevation) against a dense scene; returns the simulated cloud "
      "in the sensor frame, the ray index of each point and the per-ray hit flags.");

  m.def(
      "estimate_normals",
      [](const PointCloud& c, std::size_t k) {
        NormalEstimate e = estimate_normals(c, k);
        return py::make_tuple(to_rows(*e.cloud.normals),
                              py::array_t<std::uint8_t>(static_cast<py::ssize_t>(e.valid.size()), e.valid.data()));
      },
      py::arg("cloud"), py::arg("k") = 10);

  m.def("voxel_downsample", &voxel_downsample, py::arg("cloud"), py::arg("voxel"));
  m.def("radius_outlier_removal", &radius_outlier_removal, py::arg("cloud"), py::arg("radius"),
        py::arg("min_neighbors"));

  m.def(
      "icp_align",
      [](const PointCloud& source, const PointCloud& target, std::optional<Eigen::Matrix4d> init) {
        const IcpResult r = icp_align(source, target, pose_of(init));
        py::dict d;
        d["transform"] = r.transform.matrix();
        d["rms"] = r.rms;
        d["iterations"] = r.iterations;
        d["converged"] = r.converged;
        d["point_to_point_fallback"] = r.point_to_point_fallback;
        return d;
      },
      py::arg("source"), py::arg("target"), py::arg("init") = py::none());

  m.def("chamfer", &chamfer, py::arg("p"), py::arg("q"));
  m.def(
      "lpcs",
      [](const PointCloud& sim, const PointCloud& real, const std::vector<std::array<double, 7>>& boxes,
         double voxel, const Vec3& crop_extent) {
        std::vector<OrientedBox3> b;
        for (const auto& x : boxes) b.push_back(OrientedBox3::make(Vec3(x[0], x[1], x[2]), Vec3(x[3], x[4], x[5]), x[6]));
        return lpcs(sim, real, b, DefaultExtractor(voxel, crop_extent));
      },
      py::arg("sim"), py::arg("real"), py::arg("boxes"), py::arg("voxel") = 0.25,
      py::arg("crop_extent") = Vec3(4.0, 4.0, 2.0),
      "Boxes are (cx, cy, cz, length, width, height, yaw) tuples.");

  py::class_<ParamVoxelGrid>(m, "ParamVoxelGrid")
      .def_property_readonly("voxel_count", &ParamVoxelGrid::voxel_count)
      .def_property_readonly("defined_count", &ParamVoxelGrid::defined_count)
      .def_readonly("admitted_sim", &ParamVoxelGrid::admitted_sim)
      .def_readonly("admitted_real", &ParamVoxelGrid::admitted_real)
      .def("ratio", &ParamVoxelGrid::ratio, py::arg("voxel"))
      .def(
          "voxel_of", [](const ParamVoxelGrid& g, double d, double t, double i) { return g.voxel_of({d, t, i}); },
          py::arg("distance"), py::arg("incidence"), py::arg("intensity"));

  m.def(
      "build_param_grid",
      [](const RowsX3& sim, const RowsX3& real, std::size_t min_sim_count, double distance_step,
         double incidence_step_deg, double intensity_step) {
        ParamBins bins;
        bins.distance.step = distance_step;
        bins.incidence.step = deg2rad(incidence_step_deg);
        bins.intensity.step = intensity_step;
        return build_param_grid(features_of(sim), features_of(real), bins, min_sim_count);
      },
      py::arg("sim"), py::arg("real"), py::arg("min_sim_count") = 20, py::arg("distance_step") = 1.0,
      py::arg("incidence_step_deg") = 5.0, py::arg("intensity_step") = 0.05,
      "Features are rows of (distance m, incidence rad, intensity).");

  py::class_<Surrogate>(m, "Surrogate")
      .def_readonly("loss_history", &Surrogate::loss_history)
      .def_readonly("final_loss", &Surrogate::final_loss)
      .def(
          "predict",
          [](const Surrogate& s, const RowsX3& features) {
            return s.predict_batch(features.transpose());
          },
          py::arg("features"))
      .def("to_dict", [](const Surrogate& s) { return json_to_py(to_json(s)); })
      .def_static("from_dict", [](const py::dict& d) { return surrogate_from_json(py_to_json(d)); });

  m.def(
      "train_surrogate",
      [](const ParamVoxelGrid& g, int epochs, std::uint64_t seed) {
        MlpHyperParams h;
        h.epochs = epochs;
        py::gil_scoped_release release;
        return train_surrogate(g, h, seed);
      },
      py::arg("grid"), py::arg("epochs") = 300, py::arg("seed") = 0);

  m.def(
      "run_stage",
      [](const std::string& stage, const std::filesystem::path& config, std::optional<int> workers,
         std::optional<std::uint64_t> seed) {
        PipelineConfig cfg = load_pipeline_config(config);
        if (workers) cfg.workers = *workers;
        if (seed) cfg.seed = *seed;
        StageResult r;
        {
          py::gil_scoped_release release;
          r = run_stage(stage, cfg);
        }
        py::dict d;
        d["stage"] = r.stage;
        d["output_dir"] = r.output_dir;
        d["summary"] = json_to_py(r.summary);
        return d;
      },
      py::arg("stage"), py::arg("config"), py::arg("workers") = py::none(), py::arg("seed") = py::none());
  m.attr("STAGES") = stage_names();
}
