#include "flowcast/datagen.hpp"
#include "flowcast/delaunay.hpp"
#include "flowcast/dataset.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/model.hpp"
#include "flowcast/training.hpp"

#include <nlohmann/json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
namespace fc = flowcast;

namespace {

py::array_t<uint8_t> types_to_numpy(const std::vector<fc::NodeType>& types) {
    py::array_t<uint8_t> out(static_cast<py::ssize_t>(types.size()));
    auto buf = out.mutable_unchecked<1>();
    for (size_t i = 0; i < types.size(); ++i) buf(static_cast<py::ssize_t>(i)) =
        static_cast<uint8_t>(types[i]);
    return out;
}

std::vector<fc::NodeType> types_from_numpy(const py::array_t<uint8_t>& arr) {
    auto buf = arr.unchecked<1>();
    std::vector<fc::NodeType> out(static_cast<size_t>(buf.shape(0)));
    for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
        if (buf(i) > 3) throw fc::DataError("invalid node type code " + std::to_string(buf(i)));
        out[static_cast<size_t>(i)] = static_cast<fc::NodeType>(buf(i));
    }
    return out;
}

py::array_t<uint32_t> edges_to_numpy(const std::vector<fc::Edge>& edges) {
    py::array_t<uint32_t> out({static_cast<py::ssize_t>(edges.size()), py::ssize_t(2)});
    auto buf = out.mutable_unchecked<2>();
    for (size_t i = 0; i < edges.size(); ++i) {
        buf(static_cast<py::ssize_t>(i), 0) = edges[i].a;
        buf(static_cast<py::ssize_t>(i), 1) = edges[i].b;
    }
    return out;
}

std::vector<fc::Edge> edges_from_numpy(const py::array_t<uint32_t>& arr) {
    auto buf = arr.unchecked<2>();
    if (buf.shape(1) != 2) throw fc::DataError("edges must be an (E, 2) array");
    std::vector<fc::Edge> out;
    out.reserve(static_cast<size_t>(buf.shape(0)));
    for (py::ssize_t i = 0; i < buf.shape(0); ++i) out.emplace_back(buf(i, 0), buf(i, 1));
    return out;
}

nlohmann::json json_from_py(const py::dict& d) {
    const auto dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(py::cast<std::string>(dumps(d)));
}

py::object json_to_py(const nlohmann::json& j) {
    const auto loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

fc::ModelConfig model_cfg(const py::dict& d) {
    return fc::model_config_from_json(json_from_py(d));
}

fc::TrainConfig train_cfg(const py::dict& d) {
    return fc::train_config_from_json(json_from_py(d));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "mesh transformer for autoregressive field forecasting on dynamic triangle meshes";

    py::register_exception<fc::FormatError>(m, "FormatError");
    py::register_exception<fc::DataError>(m, "DataError");
    py::register_exception<fc::NumericError>(m, "NumericError");

    py::class_<fc::MeshFrame>(m, "MeshFrame")
        .def(py::init([](const Eigen::MatrixX2d& positions, const py::array_t<uint8_t>& types,
                         const Eigen::MatrixX2d& velocity, const Eigen::MatrixXd& pressure,
                         const py::array_t<uint32_t>& edges) {
                 fc::MeshFrame f;
                 f.positions = positions;
                 f.node_types = types_from_numpy(types);
                 f.velocity = velocity;
                 f.pressure = pressure;
                 f.edges = edges_from_numpy(edges);
                 return f;
             }),
             py::arg("positions"), py::arg("node_types"), py::arg("velocity"),
             py::arg("pressure"), py::arg("edges"))
        .def_readwrite("positions", &fc::MeshFrame::positions)
        .def_readwrite("velocity", &fc::MeshFrame::velocity)
        .def_readwrite("pressure", &fc::MeshFrame::pressure)
        .def_property(
            "node_types", [](const fc::MeshFrame& f) { return types_to_numpy(f.node_types); },
            [](fc::MeshFrame& f, const py::array_t<uint8_t>& a) {
                f.node_types = types_from_numpy(a);
            })
        .def_property(
            "edges", [](const fc::MeshFrame& f) { return edges_to_numpy(f.edges); },
            [](fc::MeshFrame& f, const py::array_t<uint32_t>& a) {
                f.edges = edges_from_numpy(a);
            })
        .def_property_readonly("num_nodes", &fc::MeshFrame::num_nodes);

    py::class_<fc::Trajectory>(m, "Trajectory")
        .def(py::init<>())
        .def_readwrite("frames", &fc::Trajectory::frames)
        .def_readwrite("dt", &fc::Trajectory::dt)
        .def_readwrite("geometry_tag", &fc::Trajectory::geometry_tag)
        .def_readwrite("seed", &fc::Trajectory::seed);

    m.def("load_trajectory", &fc::load_trajectory, py::arg("path"));
    m.def(
        "save_trajectory",
        [](const fc::Trajectory& t, const std::string& path) { fc::save_trajectory(t, path); },
        py::arg("trajectory"), py::arg("path"));
    m.def(
        "validate",
        [](const fc::Trajectory& t) {
            std::vector<std::string> out;
            for (const auto& v : fc::validate_trajectory(t))
                out.push_back("[" + v.invariant + "] " + v.detail);
            return out;
        },
        py::arg("trajectory"), "Invariant violations, empty when the trajectory is well-formed.");
    m.def(
        "validate_frame",
        [](const fc::MeshFrame& f) {
            std::vector<std::string> out;
            for (const auto& v : fc::validate_frame(f))
                out.push_back("[" + v.invariant + "] " + v.detail);
            return out;
        },
        py::arg("frame"));

    m.def(
        "delaunay",
        [](const Eigen::MatrixX2d& points,
           const std::optional<Eigen::MatrixX2d>& boundary) {
            std::vector<fc::Vec2> pts(static_cast<size_t>(points.rows()));
            for (Eigen::Index i = 0; i < points.rows(); ++i) pts[static_cast<size_t>(i)] =
                points.row(i).transpose();
            fc::Triangulation tri;
            if (boundary) {
                std::vector<fc::Vec2> poly(static_cast<size_t>(boundary->rows()));
                for (Eigen::Index i = 0; i < boundary->rows(); ++i)
                    poly[static_cast<size_t>(i)] = boundary->row(i).transpose();
                tri = fc::delaunay_triangulate(pts, poly);
            } else {
                tri = fc::delaunay_triangulate(pts);
            }
            py::array_t<uint32_t> triangles(
                {static_cast<py::ssize_t>(tri.triangles.size()), py::ssize_t(3)});
            auto tb = triangles.mutable_unchecked<2>();
            for (size_t i = 0; i < tri.triangles.size(); ++i)
                for (int c = 0; c < 3; ++c)
                    tb(static_cast<py::ssize_t>(i), c) = tri.triangles[i][static_cast<size_t>(c)];
            return py::make_tuple(triangles, edges_to_numpy(tri.edges));
        },
        py::arg("points"), py::arg("boundary") = std::nullopt,
        "Delaunay triangulation (Bowyer-Watson); returns (triangles, edges).");

    m.def(
        "same_size_kmeans",
        [](const Eigen::MatrixX2d& positions, uint32_t target_size, uint64_t seed) {
            auto a = fc::same_size_kmeans(positions, target_size, seed);
            py::array_t<uint32_t> out(static_cast<py::ssize_t>(a.assignment.size()));
            auto buf = out.mutable_unchecked<1>();
            for (size_t i = 0; i < a.assignment.size(); ++i)
                buf(static_cast<py::ssize_t>(i)) = a.assignment[i];
            return out;
        },
        py::arg("positions"), py::arg("target_size"), py::arg("seed") = 0,
        "Balanced k-means assignment (cluster sizes differ by at most one).");

    m.def(
        "cluster_barycenters",
        [](const Eigen::MatrixX2d& positions, const py::array_t<uint32_t>& assignment) {
            fc::ClusterAssignment a;
            auto buf = assignment.unchecked<1>();
            uint32_t k = 0;
            for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
                a.assignment.push_back(buf(i));
                k = std::max(k, buf(i) + 1);
            }
            a.num_clusters = k;
            a.sizes.assign(k, 0);
            for (auto c : a.assignment) a.sizes[c] += 1;
            a.rebuild_members();
            return fc::cluster_barycenters(positions, a);
        },
        py::arg("positions"), py::arg("assignment"));

    m.def(
        "positional_encoding",
        [](const fc::Vec2& x) { return fc::positional_encoding(x); }, py::arg("xy"),
        "28-entry spectral encoding [cos(2^i pi x), sin(2^i pi x)] for i in -3..3.");

    m.def("k_number", &fc::k_number, py::arg("weights"), py::arg("threshold") = 0.9);

    m.def(
        "downsample_frame",
        [](const fc::MeshFrame& f, double keep, uint64_t seed) {
            return fc::downsample_frame(f, keep, seed);
        },
        py::arg("frame"), py::arg("keep_fraction"), py::arg("seed") = 0);

    m.def(
        "poisson_disk_downsample",
        [](const Eigen::MatrixX2d& points, double radius, uint64_t seed) {
            std::vector<fc::Vec2> pts(static_cast<size_t>(points.rows()));
            for (Eigen::Index i = 0; i < points.rows(); ++i)
                pts[static_cast<size_t>(i)] = points.row(i).transpose();
            return fc::poisson_disk_downsample(pts, radius, seed);
        },
        py::arg("points"), py::arg("radius"), py::arg("seed") = 0);

    m.def(
        "taylor_green",
        [](const fc::Vec2& x, double t, double amplitude, double viscosity) {
            fc::TaylorGreenFlow flow;
            flow.amplitude = amplitude;
            flow.viscosity = viscosity;
            return py::make_tuple(flow.velocity(x, t), flow.pressure(x, t));
        },
        py::arg("xy"), py::arg("t") = 0.0, py::arg("amplitude") = 1.0,
        py::arg("viscosity") = 0.01, "Analytic Taylor-Green velocity and pressure.");

    m.def(
        "generate_dataset",
        [](const std::string& out_dir, const std::string& family, int n_traj, int steps,
           int nodes, double dt, uint64_t seed) {
            fc::GenConfig cfg;
            cfg.family = fc::flow_family_from_string(family);
            cfg.n_traj = n_traj;
            cfg.steps = steps;
            cfg.nodes = nodes;
            cfg.dt = dt;
            cfg.seed = seed;
            auto manifest = fc::generate_dataset(cfg, out_dir);
            return py::make_tuple(manifest.train, manifest.valid, manifest.test);
        },
        py::arg("out_dir"), py::arg("family") = "taylor-green", py::arg("n_traj") = 2,
        py::arg("steps") = 10, py::arg("nodes") = 50, py::arg("dt") = 0.05, py::arg("seed") = 0,
        "Writes trajectories plus manifest.json; returns the split ids.");

    m.def(
        "precompute_clusters",
        [](const std::string& data_dir, uint32_t size, uint64_t seed) {
            auto manifest = fc::load_manifest(data_dir);
            for (const auto& id : manifest.all_ids()) {
                const auto path = fc::trajectory_path(data_dir, id);
                auto traj = fc::load_trajectory(path);
                fc::precompute_clusters(traj, size, seed,
                                        fc::cluster_cache_path(path, size, seed));
            }
        },
        py::arg("data_dir"), py::arg("size") = 10, py::arg("seed") = 0);

    m.def(
        "compute_stats",
        [](const std::string& data_dir) {
            auto manifest = fc::load_manifest(data_dir);
            std::vector<fc::Trajectory> trajs;
            std::vector<const fc::Trajectory*> ptrs;
            for (const auto& id : manifest.train)
                trajs.push_back(fc::load_trajectory(fc::trajectory_path(data_dir, id)));
            for (const auto& t : trajs) ptrs.push_back(&t);
            auto stats = fc::compute_norm_stats(ptrs);
            fc::save_norm_stats(stats, fc::stats_path(data_dir));
            return py::make_tuple(stats.v_std, stats.p_std);
        },
        py::arg("data_dir"), "Computes and stores train-split normalization statistics.");

    m.def(
        "train",
        [](const std::string& data_dir, const std::string& out_ckpt, const py::dict& model_config,
           const py::dict& train_config, uint64_t cluster_seed, const py::object& log) {
            auto mcfg = model_cfg(model_config);
            auto tcfg = train_cfg(train_config);
            auto manifest = fc::load_manifest(data_dir);
            mcfg.pressure_channels = static_cast<int>(manifest.pressure_channels);
            auto split = fc::load_split(data_dir, manifest.train, true,
                                        static_cast<uint32_t>(mcfg.cluster_size), cluster_seed);
            auto stats = fc::load_norm_stats(fc::stats_path(data_dir));
            fc::TrainData data;
            for (size_t i = 0; i < split.trajectories.size(); ++i) {
                data.trajectories.push_back(&split.trajectories[i]);
                data.clusters.push_back(&split.clusters[i]);
            }
            fc::TrainLogSink sink = nullptr;
            if (!log.is_none())
                sink = [log](const fc::TrainLogEntry& e) {
                    log(py::dict(py::arg("step") = e.step, py::arg("loss") = e.loss,
                                 py::arg("loss_v") = e.loss_v, py::arg("loss_p") = e.loss_p,
                                 py::arg("wall_ms") = e.wall_ms));
                };
            auto ckpt = fc::train(data, mcfg, tcfg, stats, std::nullopt, sink, out_ckpt);
            return ckpt.step;
        },
        py::arg("data_dir"), py::arg("out_ckpt"), py::arg("model_config") = py::dict(),
        py::arg("train_config") = py::dict(), py::arg("cluster_seed") = 0,
        py::arg("log") = py::none());

    m.def(
        "evaluate",
        [](const std::string& data_dir, const std::string& ckpt_path,
           const std::vector<int>& horizons, const std::string& split_name,
           const std::string& ablation, double downsample, uint64_t order_seed,
           uint64_t cluster_seed) {
            auto ckpt = fc::load_checkpoint(ckpt_path);
            if (!ablation.empty())
                ckpt.model_config.attention_mode = fc::attention_mode_from_string(ablation);
            auto model = fc::model_from_checkpoint<double>(ckpt);
            auto manifest = fc::load_manifest(data_dir);
            std::vector<std::string> ids;
            if (split_name == "heldout") {
                ids = manifest.valid;
                ids.insert(ids.end(), manifest.test.begin(), manifest.test.end());
            } else {
                ids = manifest.split(split_name);
            }
            auto split = fc::load_split(data_dir, ids, false, 0, 0);
            std::vector<fc::EvalItem> items;
            for (const auto& t : split.trajectories) items.push_back({&t, nullptr});
            fc::EvalOptions opts;
            opts.horizons = horizons;
            opts.order_seed = order_seed;
            opts.downsample = downsample;
            opts.cluster_seed = cluster_seed;
            return json_to_py(fc::eval_report_to_json(fc::evaluate(model, items, opts)));
        },
        py::arg("data_dir"), py::arg("ckpt"), py::arg("horizons") = std::vector<int>{1, 10},
        py::arg("split") = "test", py::arg("ablation") = "", py::arg("downsample") = 0.0,
        py::arg("order_seed") = 0, py::arg("cluster_seed") = 0);

    m.def(
        "gradcheck",
        [](uint64_t seed, int samples, int horizon) {
            fc::ModelConfig cfg;
            cfg.hidden = 8;
            cfg.token_width = 16;
            cfg.heads = 1;
            cfg.gnn_layers = 1;
            cfg.attn_blocks = 1;
            cfg.cluster_size = 4;
            auto setup = fc::make_gradcheck_setup(seed);
            auto params = fc::ModelParams<double>::init(cfg, fc::Rng::mix(seed, 1));
            fc::Rng rng(fc::Rng::mix(seed, 2));
            fc::nn::init_linear(params.head.layers.back(), rng);
            auto report = fc::finite_difference_check(params, cfg, setup.trajectory,
                                                      setup.clusters, setup.stats, horizon, 0.1,
                                                      samples, 1e-5, fc::Rng::mix(seed, 3),
                                                      fc::Rng::mix(seed, 4));
            return report.max_rel_error;
        },
        py::arg("seed") = 0, py::arg("samples") = 200, py::arg("horizon") = 2,
        "Max relative error between analytic and finite-difference gradients.");

    py::class_<fc::Model<double>>(m, "Model")
        .def_static(
            "load",
            [](const std::string& path) {
                return fc::model_from_checkpoint<double>(fc::load_checkpoint(path));
            },
            py::arg("ckpt"))
        .def_static(
            "init",
            [](const py::dict& config, uint64_t seed) {
                return fc::Model<double>::init(model_cfg(config), seed);
            },
            py::arg("config") = py::dict(), py::arg("seed") = 0,
            "Freshly initialized model (identity normalization stats).")
        .def_property_readonly(
            "config",
            [](const fc::Model<double>& m_) { return json_to_py(fc::model_config_to_json(m_.config)); })
        .def(
            "forward_step",
            [](const fc::Model<double>& m_, const fc::MeshFrame& frame, uint64_t order_seed,
               uint64_t cluster_seed, bool record_attention) {
                auto asg = fc::same_size_kmeans(
                    frame.positions, static_cast<uint32_t>(m_.config.cluster_size), cluster_seed);
                auto geom = fc::make_cluster_geometry(frame.positions, asg, frame.edges);
                fc::AttentionRecord record;
                auto pred = m_.forward_step(frame, asg, geom, order_seed,
                                            record_attention ? &record : nullptr);
                py::object attention = py::none();
                if (record_attention) {
                    py::list blocks;
                    for (const auto& block : record.blocks) {
                        py::list heads;
                        for (const auto& head : block) heads.append(Eigen::MatrixXd(head));
                        blocks.append(heads);
                    }
                    attention = blocks;
                }
                return py::make_tuple(pred, attention);
            },
            py::arg("frame"), py::arg("order_seed") = 0, py::arg("cluster_seed") = 0,
            py::arg("record_attention") = false,
            "Predicts the next frame; returns (frame, attention or None).")
        .def(
            "rollout",
            [](const fc::Model<double>& m_, const fc::Trajectory& traj, int steps, int start,
               uint64_t order_seed, uint64_t cluster_seed) {
                std::vector<const fc::MeshFrame*> geometry;
                for (int h = 1; h <= steps; ++h)
                    geometry.push_back(&traj.frames.at(static_cast<size_t>(start + h)));
                return m_.rollout(traj.frames.at(static_cast<size_t>(start)), geometry, steps,
                                  order_seed, nullptr, cluster_seed);
            },
            py::arg("trajectory"), py::arg("steps"), py::arg("start") = 0,
            py::arg("order_seed") = 0, py::arg("cluster_seed") = 0);

    m.def(
        "n_rmse",
        [](const std::vector<fc::MeshFrame>& predicted, const std::vector<fc::MeshFrame>& truth,
           double v_std, double p_std, const std::vector<int>& horizons) {
            fc::NormStats stats;
            stats.v_std = v_std;
            stats.p_std = p_std;
            stats.p_mean = Eigen::VectorXd::Zero(
                predicted.empty() ? 1 : predicted.front().pressure_channels());
            std::vector<const fc::MeshFrame*> p, t;
            for (const auto& f : predicted) p.push_back(&f);
            for (const auto& f : truth) t.push_back(&f);
            return fc::n_rmse(p, t, stats, horizons);
        },
        py::arg("predicted"), py::arg("truth"), py::arg("v_std"), py::arg("p_std"),
        py::arg("horizons"));
}
