#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

#include "cunet/checkpoint.hpp"
#include "cunet/config.hpp"
#include "cunet/data.hpp"
#include "cunet/errors.hpp"
#include "cunet/gradcheck_suite.hpp"
#include "cunet/log.hpp"
#include "cunet/lws.hpp"
#include "cunet/metrics.hpp"
#include "cunet/model.hpp"
#include "cunet/ops.hpp"
#include "cunet/train.hpp"

namespace py = pybind11;
using namespace cunet;

namespace {

template <class T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

Shape shape4(const py::buffer_info& b) {
    if (b.ndim != 4) throw ContractError("expected a 4-D array (n, c, h, w)");
    return {static_cast<std::size_t>(b.shape[0]), static_cast<std::size_t>(b.shape[1]),
            static_cast<std::size_t>(b.shape[2]), static_cast<std::size_t>(b.shape[3])};
}

Tensor to_tensor(const Array<double>& a) {
    const auto b = a.request();
    const double* p = static_cast<const double*>(b.ptr);
    return Tensor(shape4(b), std::vector<double>(p, p + b.size));
}

py::array_t<double> to_numpy(const Tensor& t) {
    const Shape& s = t.shape();
    py::array_t<double> out({s.n, s.c, s.h, s.w});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

// Accepts (h, w) or (n, h, w).
template <class G>
G to_grid(const Array<typename G::value_type>& a) {
    const auto b = a.request();
    if (b.ndim != 2 && b.ndim != 3) throw ContractError("expected a 2-D or 3-D array");
    const std::size_t n = b.ndim == 3 ? b.shape[0] : 1;
    const auto* p = static_cast<const typename G::value_type*>(b.ptr);
    return G(n, b.shape[b.ndim - 2], b.shape[b.ndim - 1], std::vector<typename G::value_type>(p, p + b.size));
}

template <class G>
py::array_t<typename G::value_type> grid_to_numpy(const G& g, bool squeeze) {
    std::vector<py::ssize_t> dims{static_cast<py::ssize_t>(g.height()), static_cast<py::ssize_t>(g.width())};
    if (!squeeze || g.batch() != 1) dims.insert(dims.begin(), g.batch());
    py::array_t<typename G::value_type> out(dims);
    std::copy(g.values().begin(), g.values().end(), out.mutable_data());
    return out;
}

EmptyPolicy policy_from(const std::string& s) {
    if (s == "one") return EmptyPolicy::kOne;
    if (s == "undefined") return EmptyPolicy::kUndefined;
    throw ConfigError("empty policy must be 'one' or 'undefined', got '" + s + "'");
}

KeyValues kv_from(const py::dict& d) {
    KeyValues kv;
    for (const auto& [k, v] : d) kv.set(py::str(k), py::str(v));
    return kv;
}

VolumeSample make_sample(const std::string& id, const Array<float>& image, const Array<std::uint8_t>& labels,
                         const Array<std::uint8_t>& brain) {
    const auto b = image.request();
    if (b.ndim != 3 || b.shape[0] != static_cast<py::ssize_t>(kModalities))
        throw ContractError("image must have shape (4, h, w)");
    VolumeSample s(id, b.shape[1], b.shape[2]);
    const float* p = static_cast<const float*>(b.ptr);
    s.image.assign(p, p + b.size);
    s.labels = to_grid<LabelMap>(labels);
    s.brain_mask = to_grid<Mask>(brain);
    s.validate();
    return s;
}

}  // namespace

PYBIND11_MODULE(_cunet, m) {
    m.doc() = "Cascaded U-Net segmentation with label-weighted sampling";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<DegenerateBatchError>(m, "DegenerateBatchError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def("set_log_level", [](const std::string& level) {
        static const std::map<std::string, LogLevel> levels{{"debug", LogLevel::kDebug}, {"info", LogLevel::kInfo},
                                                            {"warn", LogLevel::kWarn},   {"error", LogLevel::kError},
                                                            {"off", LogLevel::kOff}};
        const auto it = levels.find(level);
        if (it == levels.end()) throw ConfigError("unknown log level '" + level + "'");
        set_log_level(it->second);
    });

    // ---- data
    py::class_<VolumeSample>(m, "Sample")
        .def(py::init(&make_sample), py::arg("id"), py::arg("image"), py::arg("labels"), py::arg("brain_mask"))
        .def_readonly("id", &VolumeSample::id)
        .def_property_readonly("image",
                               [](const VolumeSample& s) {
                                   py::array_t<float> out({kModalities, s.height, s.width});
                                   std::copy(s.image.begin(), s.image.end(), out.mutable_data());
                                   return out;
                               })
        .def_property_readonly("labels", [](const VolumeSample& s) { return grid_to_numpy(s.labels, true); })
        .def_property_readonly("brain_mask", [](const VolumeSample& s) { return grid_to_numpy(s.brain_mask, true); })
        .def("has_tumor", &VolumeSample::has_tumor)
        .def("encode", [](const VolumeSample& s) { return py::bytes(encode_sample(s)); })
        .def_static("decode", [](const py::bytes& b) { return decode_sample(std::string(b)); })
        .def("__eq__", [](const VolumeSample& a, const VolumeSample& b) { return a == b; })
        .def("__repr__", [](const VolumeSample& s) {
            return "Sample('" + s.id + "', " + std::to_string(s.height) + "x" + std::to_string(s.width) + ")";
        });

    m.def(
        "generate_phantoms",
        [](std::size_t count, std::size_t size, double q_tumor, std::uint64_t seed) {
            return generate_phantoms(count, {size, q_tumor}, seed);
        },
        py::arg("count"), py::arg("size") = 64, py::arg("q_tumor") = 0.7, py::arg("seed") = 0);
    m.def("normalize_intensity", &normalize_intensity);
    m.def("extract_nonbrain_mask", [](const VolumeSample& s) { return grid_to_numpy(extract_nonbrain_mask(s), true); });
    m.def("transform", &transform, py::arg("sample"), py::arg("quarter_turns"), py::arg("flip"));
    m.def("write_sample", &write_sample);
    m.def("read_sample", &read_sample);
    m.def(
        "read_split",
        [](const std::string& dir, const std::string& split) {
            for (SplitKind k : {SplitKind::kTrain, SplitKind::kVal, SplitKind::kTest})
                if (split_name(k) == split) return read_split(dir, k);
            throw ConfigError("split must be train, val or test, got '" + split + "'");
        },
        py::arg("dir"), py::arg("split"));

    // ---- sampling and loss
    m.def(
        "partition_regions",
        [](const Array<std::uint8_t>& labels, const Array<std::uint8_t>& brain, std::size_t width) {
            const bool squeeze = labels.ndim() == 2;
            const RegionPartition p = partition_regions(to_grid<LabelMap>(labels), to_grid<Mask>(brain), width);
            return py::make_tuple(grid_to_numpy(p.s1, squeeze), grid_to_numpy(p.s2, squeeze),
                                  grid_to_numpy(p.s3, squeeze), grid_to_numpy(p.s4, squeeze));
        },
        py::arg("labels"), py::arg("brain_mask"), py::arg("contour_width") = 4);
    m.def("compute_p2", &compute_p2, py::arg("beta"), py::arg("p3"), py::arg("n_s3"), py::arg("n_s2"));
    m.def(
        "sample_weights",
        [](const Array<std::uint8_t>& labels, const Array<std::uint8_t>& brain, std::size_t width, double p1,
           std::optional<double> p2, double p3, double p4, double alpha, double beta, std::uint64_t seed) {
            const RegionPartition part = partition_regions(to_grid<LabelMap>(labels), to_grid<Mask>(brain), width);
            SamplingConfig cfg;
            cfg.p1 = p1;
            cfg.p2 = p2;
            cfg.p3 = p3;
            cfg.p4 = p4;
            cfg.alpha = alpha;
            cfg.beta = beta;
            std::mt19937_64 rng(seed);
            return grid_to_numpy(sample_matrix(part, resolve_sampling(cfg, part), rng), labels.ndim() == 2);
        },
        py::arg("labels"), py::arg("brain_mask"), py::arg("contour_width") = 4, py::arg("p1") = 0.0,
        py::arg("p2") = py::none(), py::arg("p3") = 1.0, py::arg("p4") = 1.0, py::arg("alpha") = 1.0,
        py::arg("beta") = 1.5, py::arg("seed") = 0);
    m.def(
        "weighted_cross_entropy",
        [](const Array<double>& probs, const Array<double>& target, const Array<double>& weights) {
            return weighted_cross_entropy(to_tensor(probs), to_tensor(target), to_grid<WeightMap>(weights)).item();
        },
        py::arg("probs"), py::arg("target"), py::arg("weights"));

    // ---- tensor ops
    m.def(
        "conv2d",
        [](const Array<double>& x, const Array<double>& k, std::optional<Array<double>> bias, std::size_t stride,
           std::size_t pad) {
            Tensor b;
            if (bias) {
                const auto bb = bias->request();
                const double* p = static_cast<const double*>(bb.ptr);
                b = Tensor(Shape{static_cast<std::size_t>(bb.size), 1, 1, 1}, std::vector<double>(p, p + bb.size));
            }
            return to_numpy(conv2d(to_tensor(x), to_tensor(k), b, stride, pad));
        },
        py::arg("x"), py::arg("kernel"), py::arg("bias") = py::none(), py::arg("stride") = 1, py::arg("pad") = 0);
    m.def(
        "conv_transpose2d",
        [](const Array<double>& x, const Array<double>& k, std::size_t stride) {
            return to_numpy(conv_transpose2d(to_tensor(x), to_tensor(k), stride));
        },
        py::arg("x"), py::arg("kernel"), py::arg("stride") = 2);
    m.def("softmax_channels", [](const Array<double>& x) { return to_numpy(softmax_channels(to_tensor(x))); });

    // ---- metrics
    auto metric = [&m](const char* name, Metric (*fn)(const Mask&, const Mask&, EmptyPolicy)) {
        m.def(
            name,
            [fn](const Array<std::uint8_t>& p, const Array<std::uint8_t>& t, const std::string& empty) {
                return fn(to_grid<Mask>(p), to_grid<Mask>(t), policy_from(empty));
            },
            py::arg("pred"), py::arg("truth"), py::arg("empty") = "one");
    };
    metric("dice", &dice);
    metric("sensitivity", &sensitivity);
    metric("specificity", &specificity);

    // ---- model
    py::class_<CUNet>(m, "CUNet")
        .def(py::init([](std::size_t depth, std::size_t base_channels, std::size_t in_channels, std::uint64_t seed,
                         bool between_net_connections) {
                 CUNetConfig c;
                 c.depth = depth;
                 c.base_channels = base_channels;
                 c.in_channels = in_channels;
                 c.seed = seed;
                 c.validate();
                 return CUNet(c, between_net_connections);
             }),
             py::arg("depth") = 4, py::arg("base_channels") = 16, py::arg("in_channels") = 4, py::arg("seed") = 0,
             py::arg("between_net_connections") = true)
        .def_property_readonly("config", [](const CUNet& n) { return model_config_to_kv(n.config()).values(); })
        .def_property_readonly("parameter_count", [](const CUNet& n) { return n.params().scalar_count(); })
        .def_property_readonly("aux_head_count", &CUNet::aux_head_count)
        .def(
            "forward",
            [](const CUNet& n, const Array<double>& x) {
                NoGradGuard guard;
                const CascadeOutputs out = n.forward(to_tensor(x));
                py::list aux;
                for (const auto& a : out.aux) aux.append(to_numpy(a));
                py::dict d;
                d["branch1"] = to_numpy(out.branch1);
                d["branch2"] = to_numpy(out.branch2);
                d["aux"] = aux;
                return d;
            },
            py::arg("x"))
        .def("save", [](const CUNet& n, const std::string& path) { save_checkpoint(path, n.params()); })
        .def("load", [](CUNet& n, const std::string& path) { load_checkpoint_into(path, n.params()); })
        .def("checkpoint_bytes", [](const CUNet& n) { return py::bytes(encode_checkpoint(n.params())); });

    m.def(
        "train",
        [](CUNet& model, const std::vector<VolumeSample>& train, const std::vector<VolumeSample>& val,
           const py::dict& options) {
            const KeyValues kv = kv_from(options);
            kv.require_known(train_config_keys());
            Trainer trainer(model, train_config_from(kv));
            TrainState st;
            {
                py::gil_scoped_release release;
                st = trainer.fit(train, val);
            }
            py::list history;
            for (const auto& r : st.history)
                history.append(py::dict(py::arg("epoch") = r.epoch, py::arg("lr") = r.lr, py::arg("omega") = r.omega,
                                        py::arg("train_loss") = r.train_loss, py::arg("val_loss") = r.val_loss,
                                        py::arg("steps") = r.steps, py::arg("skipped") = r.skipped));
            return py::dict(py::arg("epochs") = st.epoch, py::arg("best_epoch") = st.best_epoch,
                            py::arg("best_val") = st.best_val, py::arg("stopped_early") = st.stopped_early,
                            py::arg("history") = history);
        },
        py::arg("model"), py::arg("train"), py::arg("val"), py::arg("options") = py::dict());
    m.def("train_config_keys", &train_config_keys);
    m.def(
        "predict", [](const CUNet& model, const VolumeSample& s) { return grid_to_numpy(predict(model, s), true); },
        py::arg("model"), py::arg("sample"));
    m.def(
        "evaluate_json",
        [](const CUNet& model, const std::vector<VolumeSample>& cases, const std::string& empty) {
            return report_json(evaluate(model, cases, policy_from(empty)));
        },
        py::arg("model"), py::arg("cases"), py::arg("empty") = "one");

    // ---- gradient check
    m.def(
        "gradcheck",
        [](std::size_t seeds, double step, std::uint64_t first_seed) {
            py::list out;
            for (const auto& r : run_gradcheck_suite(seeds, step, first_seed))
                out.append(py::dict(py::arg("op") = r.name, py::arg("max_rel_error") = r.max_rel_error,
                                    py::arg("coords") = r.coords, py::arg("kinks_skipped") = r.kinks_skipped,
                                    py::arg("seeds") = r.seeds));
            return out;
        },
        py::arg("seeds") = 1, py::arg("step") = 1e-5, py::arg("first_seed") = 0);

}
