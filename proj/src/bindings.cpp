#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "negtome/harness.hpp"
#include "negtome/io.hpp"
#include "negtome/joint.hpp"
#include "negtome/kernel.hpp"
#include "negtome/metrics.hpp"

namespace py = pybind11;
using namespace negtome;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a, int64_t want_rank, const char* name) {
    if (a.ndim() != want_rank) {
        throw DimensionError(std::string(name) + " must have rank " + std::to_string(want_rank) +
                             ", got " + std::to_string(a.ndim()));
    }
    std::vector<int64_t> shape(static_cast<size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    std::vector<float> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

std::optional<MaskVector> to_mask(const std::optional<FloatArray>& mask) {
    if (!mask) return std::nullopt;
    if (mask->ndim() != 1) throw DimensionError("mask must be a 1-d array");
    MaskVector mv;
    mv.weights.assign(mask->data(), mask->data() + mask->size());
    return mv;
}

AssetStore to_store(const std::vector<FloatArray>& assets) {
    AssetStore store;
    for (size_t i = 0; i < assets.size(); ++i) {
        store.assets.push_back(
            {ReferenceTokens(to_tensor(assets[i], 2, "asset")), "asset" + std::to_string(i)});
    }
    return store;
}

MergeConfig merge_config_from(double alpha, std::pair<int64_t, int64_t> window,
                              const std::string& schedule) {
    MergeConfig cfg;
    cfg.alpha = static_cast<float>(alpha);
    cfg.t_hi = window.first;
    cfg.t_lo = window.second;
    if (schedule == "constant") cfg.schedule = ScheduleKind::Constant;
    else if (schedule == "linear-decay") cfg.schedule = ScheduleKind::LinearDecay;
    else throw ConfigError("schedule must be constant | linear-decay");
    validate_merge_config(cfg);
    return cfg;
}

} // namespace

PYBIND11_MODULE(_negtome, m) {
    m.doc() = "negative token merging: adversarial feature guidance kernels";

    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<IndexError>(m, "TokenIndexError", PyExc_IndexError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<IoError>(m, "TensorIoError", PyExc_OSError);

    m.def(
        "merge",
        [](const FloatArray& src, const FloatArray& ref, double alpha, double tau, double epsilon,
           const std::optional<FloatArray>& mask) {
            const FeatureBatch s(to_tensor(src, 3, "src"));
            const ReferenceTokens r(to_tensor(ref, 2, "ref"), to_mask(mask));
            return from_tensor(merge(s, r, static_cast<float>(alpha), static_cast<float>(tau),
                                     static_cast<float>(epsilon))
                                   .tokens);
        },
        py::arg("src"), py::arg("ref"), py::arg("alpha"), py::arg("tau") = 0.7,
        py::arg("epsilon") = 1e-6, py::arg("mask") = py::none(),
        "Push each source token away from its best-matching reference token.\n"
        "src is (B, N, D), ref is (N_ref, D); negative alpha interpolates instead.");

    m.def(
        "merge_detailed",
        [](const FloatArray& src, const FloatArray& ref, double alpha, double tau, double epsilon,
           const std::optional<FloatArray>& mask) {
            const FeatureBatch s(to_tensor(src, 3, "src"));
            const ReferenceTokens r(to_tensor(ref, 2, "ref"), to_mask(mask));
            MergeResult res = merge_detailed(s, r, static_cast<float>(alpha),
                                             static_cast<float>(tau), static_cast<float>(epsilon));
            py::dict out;
            out["merged"] = from_tensor(res.merged.tokens);
            out["target_index"] = py::cast(res.match.target_index);
            out["max_similarity"] = py::cast(res.match.max_sim);
            std::vector<bool> gate(res.match.gate.begin(), res.match.gate.end());
            out["gate"] = py::cast(gate);
            return out;
        },
        py::arg("src"), py::arg("ref"), py::arg("alpha"), py::arg("tau") = 0.7,
        py::arg("epsilon") = 1e-6, py::arg("mask") = py::none(),
        "merge() plus per-token match indices, similarities and gate bits.");

    m.def(
        "cosine_similarity",
        [](const FloatArray& src, const FloatArray& ref) {
            const FeatureBatch s(to_tensor(src, 3, "src"));
            const ReferenceTokens r(to_tensor(ref, 2, "ref"));
            return from_tensor(cosine_similarity(s, r).values);
        },
        py::arg("src"), py::arg("ref"),
        "Row-normalized token similarities, (B*N, N_ref).");

    m.def(
        "alpha_at",
        [](int64_t t, double alpha, std::pair<int64_t, int64_t> t_window,
           const std::string& schedule) {
            return alpha_at(merge_config_from(alpha, t_window, schedule), t);
        },
        py::arg("t"), py::arg("alpha"), py::arg("t_window") = std::pair<int64_t, int64_t>(1000, 600),
        py::arg("schedule") = "constant",
        "Merge strength at timestep t for the given window and schedule.");

    m.def(
        "split_joint",
        [](const FloatArray& joint, int64_t n_text) {
            JointTokens jt = split_joint(to_tensor(joint, 3, "joint"), n_text);
            py::object text = jt.text ? py::object(from_tensor(*jt.text)) : py::none();
            return py::make_tuple(text, from_tensor(jt.img));
        },
        py::arg("joint"), py::arg("n_text"),
        "Split a text-first joint sequence into (text, img) parts.");

    m.def(
        "merge_joint",
        [](const FloatArray& joint, int64_t n_text, const FloatArray& ref, double alpha,
           double tau, double epsilon, const std::optional<FloatArray>& mask) {
            JointTokens jt = split_joint(to_tensor(joint, 3, "joint"), n_text);
            const ReferenceTokens r(to_tensor(ref, 2, "ref"), to_mask(mask));
            return from_tensor(merge_joint(jt, r, static_cast<float>(alpha),
                                           static_cast<float>(tau), static_cast<float>(epsilon)));
        },
        py::arg("joint"), py::arg("n_text"), py::arg("ref"), py::arg("alpha"),
        py::arg("tau") = 0.7, py::arg("epsilon") = 1e-6, py::arg("mask") = py::none(),
        "Apply the merge to the image part of a joint text+image sequence;\n"
        "text positions pass through bit-identically.");

    m.def(
        "resize_mask",
        [](const FloatArray& grid, int64_t n_tokens) {
            const MaskVector mv = resize_mask(to_tensor(grid, 2, "grid"), n_tokens);
            py::array_t<float> out(static_cast<py::ssize_t>(mv.weights.size()));
            std::copy(mv.weights.begin(), mv.weights.end(), out.mutable_data());
            return out;
        },
        py::arg("grid"), py::arg("n_tokens"),
        "Area-average a 2-d mask grid onto a flattened square token grid.");

    m.def(
        "pairwise_diversity",
        [](const FloatArray& vectors) {
            if (vectors.ndim() != 2) throw InputError("expected a (n, len) array of vectors");
            std::vector<std::vector<float>> vs;
            for (py::ssize_t i = 0; i < vectors.shape(0); ++i) {
                const float* p = vectors.data() + i * vectors.shape(1);
                vs.emplace_back(p, p + vectors.shape(1));
            }
            const DiversityReport r = pairwise_diversity(vs);
            py::dict out;
            out["mean_pairwise_similarity"] = r.mean_pairwise_similarity;
            out["diversity"] = r.diversity;
            out["pair_matrix"] = from_tensor(r.pair_matrix);
            return out;
        },
        py::arg("vectors"),
        "1 - mean pairwise cosine similarity over rows of a (n, len) array.");

    m.def(
        "entropy_score",
        [](const std::vector<int64_t>& counts) { return entropy_score(counts); },
        py::arg("counts"), "Shannon entropy in nats of a count vector.");

    m.def(
        "max_ref_similarity",
        [](const FloatArray& feature, const std::vector<FloatArray>& assets,
           std::optional<int64_t> exclude) {
            if (feature.ndim() != 1) throw InputError("feature must be a 1-d array");
            const std::vector<float> f(feature.data(), feature.data() + feature.size());
            return max_ref_similarity(f, to_store(assets), exclude);
        },
        py::arg("feature"), py::arg("assets"), py::arg("exclude") = py::none(),
        "Max cosine similarity of a flattened feature vector to flattened assets.");

    m.def(
        "select_reference_rag",
        [](const FloatArray& src, const std::vector<FloatArray>& assets) {
            const auto [idx, score] = select_reference_rag(to_tensor(src, 2, "src"),
                                                           to_store(assets));
            return py::make_tuple(idx, score);
        },
        py::arg("src"), py::arg("assets"),
        "Best-matching asset by mean per-token max similarity; returns (index, score).");

    m.def(
        "timestep_sequence",
        [](int64_t steps) { return timestep_sequence(steps); },
        py::arg("steps"), "Descending timesteps mapped into [0, 1000].");

    m.def(
        "simulate",
        [](const std::string& config_json, uint64_t seed) {
            const ExperimentConfig cfg =
                parse_experiment_config(nlohmann::json::parse(config_json));
            AssetStore store;
            const AssetStore* store_ptr = nullptr;
            if (cfg.assets_path) {
                store = load_asset_store(*cfg.assets_path);
                store_ptr = &store;
            }
            const ToyModel model = init_model(cfg.model_seed, cfg.dims);
            RunConfig rc = cfg.run;
            rc.seed = seed;
            return from_tensor(run(model, rc, store_ptr));
        },
        py::arg("config_json"), py::arg("seed"),
        "Run the toy denoiser for one seed of an experiment config (JSON string);\n"
        "returns the final (B, N, D) features.");

    m.def(
        "read_tensor",
        [](const std::string& path) { return from_tensor(read_tensor(path)); },
        py::arg("path"), "Read a .ntf tensor file.");

    m.def(
        "write_tensor",
        [](const std::string& path, const FloatArray& array) {
            if (array.ndim() != 2 && array.ndim() != 3) {
                throw DimensionError("tensor files hold rank-2 or rank-3 arrays");
            }
            write_tensor(path, to_tensor(array, array.ndim(), "array"));
        },
        py::arg("path"), py::arg("array"), "Write a .ntf tensor file (f32, rank 2 or 3).");
}
