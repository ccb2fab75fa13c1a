// negtome CLI: merge kernel, toy-harness simulation, alpha sweeps, metrics.
// Exit codes: 0 success, 1 runtime error, 2 usage error. Errors print a
// single JSON line to stderr.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "negtome/harness.hpp"
#include "negtome/io.hpp"
#include "negtome/kernel.hpp"
#include "negtome/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace negtome;

namespace {

constexpr const char* kDiversityProxy =
    "cosine similarity over flattened features; not a learned perceptual metric";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Tensor item_slice(const Tensor& t, int64_t item) {
    const int64_t n = t.extent(1);
    const int64_t d = t.extent(2);
    return Tensor({n, d}, std::vector<float>(t.data() + item * n * d,
                                             t.data() + (item + 1) * n * d));
}

// feature files of a directory in deterministic order
std::vector<fs::path> feature_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ntf") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InputError("no .ntf feature files in " + dir.string());
    return files;
}

// every feature file flattened to one vector per batch item
struct FeatureItem {
    std::string file;
    int64_t item;
    std::vector<float> flat;
    Tensor tokens; // N x D view used for nearest-asset classification
};

std::vector<FeatureItem> load_features(const fs::path& dir) {
    std::vector<FeatureItem> out;
    for (const fs::path& p : feature_files(dir)) {
        const Tensor t = read_tensor(p);
        if (t.rank() == 2) {
            out.push_back({p.filename().string(), 0,
                           std::vector<float>(t.data(), t.data() + t.size()), t});
        } else {
            for (int64_t i = 0; i < t.extent(0); ++i) {
                Tensor tok = item_slice(t, i);
                out.push_back({p.filename().string(), i,
                               std::vector<float>(tok.data(), tok.data() + tok.size()),
                               std::move(tok)});
            }
        }
    }
    return out;
}

ExperimentConfig load_config_checked(const std::string& path) {
    ExperimentConfig cfg = load_experiment_config(path);
    return cfg;
}

AssetStore load_store_for(const ExperimentConfig& cfg, const fs::path& config_path) {
    if (!cfg.assets_path) return {};
    fs::path p = *cfg.assets_path;
    if (p.is_relative()) p = config_path.parent_path() / p;
    return load_asset_store(p);
}

int cmd_merge(const std::string& src_path, const std::string& ref_path,
              const std::string& out_path, const std::string& mask_path, double alpha,
              double tau, double epsilon) {
    const Tensor src_t = read_tensor(src_path);
    if (src_t.rank() != 3) {
        throw DimensionError("--src must be a rank-3 B x N x D tensor, got " +
                             shape_to_string(src_t.shape()));
    }
    Tensor ref_t = read_tensor(ref_path);
    if (ref_t.rank() != 2) {
        throw DimensionError("--ref must be a rank-2 N_ref x D tensor, got " +
                             shape_to_string(ref_t.shape()));
    }
    std::optional<MaskVector> mask;
    if (!mask_path.empty()) {
        const Tensor grid = read_tensor(mask_path);
        if (grid.size() == ref_t.extent(0)) {
            MaskVector mv;
            mv.weights.assign(grid.data(), grid.data() + grid.size());
            mask = std::move(mv);
        } else {
            mask = resize_mask(grid, ref_t.extent(0)); // token grid assumed square
        }
    }
    const FeatureBatch src(src_t);
    const ReferenceTokens ref(std::move(ref_t), std::move(mask));
    MergeResult r = merge_detailed(src, ref, static_cast<float>(alpha),
                                   static_cast<float>(tau), static_cast<float>(epsilon));
    write_tensor(out_path, r.merged.tokens);

    int64_t gated = 0;
    double sim_sum = 0.0;
    for (size_t i = 0; i < r.match.gate.size(); ++i) {
        gated += r.match.gate[i];
        sim_sum += static_cast<double>(r.match.max_sim[i]);
    }
    const auto tokens = static_cast<int64_t>(r.match.gate.size());
    json stats{
        {"alpha", alpha},
        {"tau", tau},
        {"tokens", tokens},
        {"gated", gated},
        {"gate_fraction", static_cast<double>(gated) / static_cast<double>(tokens)},
        {"mean_max_similarity", sim_sum / static_cast<double>(tokens)},
        {"masked", ref.mask.has_value()},
    };
    std::cout << stats.dump() << "\n";
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 const std::string& timing_path) {
    const ExperimentConfig cfg = load_config_checked(config_path);
    const AssetStore store = load_store_for(cfg, config_path);
    const AssetStore* store_ptr = store.empty() ? nullptr : &store;

    fs::create_directories(out_dir);
    const ToyModel model = init_model(cfg.model_seed, cfg.dims);

    json outputs = json::array();
    json timings = json::array();
    for (uint64_t seed : cfg.seeds) {
        RunConfig rc = cfg.run;
        rc.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor final_state = run(model, rc, store_ptr);
        const auto t1 = std::chrono::steady_clock::now();
        const std::string name = "final_s" + std::to_string(seed) + ".ntf";
        write_tensor(fs::path(out_dir) / name, final_state);
        outputs.push_back({{"seed", seed}, {"file", name}});
        timings.push_back(
            {{"seed", seed},
             {"seconds", std::chrono::duration<double>(t1 - t0).count()}});
    }

    json manifest{
        {"config", experiment_config_to_json(cfg)},
        {"outputs", outputs},
        {"proxy_note", kDiversityProxy},
    };
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    if (!mf) throw IoError("cannot write manifest.json");

    // wall-clock goes to a separate opt-in file so the output directory
    // stays byte-reproducible
    if (!timing_path.empty()) {
        std::ofstream tf(timing_path);
        tf << json{{"runs", timings}}.dump(2) << "\n";
    }
    return 0;
}

int cmd_interp(const std::string& config_path, const std::string& alphas_arg,
               const std::string& out_dir) {
    const ExperimentConfig cfg = load_config_checked(config_path);
    const AssetStore store = load_store_for(cfg, config_path);
    const AssetStore* store_ptr = store.empty() ? nullptr : &store;

    std::vector<double> alphas;
    {
        std::string token;
        std::istringstream ss(alphas_arg);
        while (std::getline(ss, token, ',')) {
            try {
                alphas.push_back(std::stod(token));
            } catch (const std::exception&) {
                throw ConfigError("bad alpha value \"" + token + "\" in --alphas");
            }
        }
        if (alphas.empty()) throw ConfigError("--alphas list is empty");
    }

    fs::create_directories(out_dir);
    const ToyModel model = init_model(cfg.model_seed, cfg.dims);
    std::ofstream csv(fs::path(out_dir) / "interp.csv");
    if (!csv) throw IoError("cannot write interp.csv");
    csv << "alpha,seed,diversity,max_ref_similarity\n";

    const int64_t item_len = cfg.dims.n_tokens * cfg.dims.d_model;
    for (double alpha : alphas) {
        for (uint64_t seed : cfg.seeds) {
            RunConfig rc = cfg.run;
            rc.seed = seed;
            rc.merge.alpha = static_cast<float>(alpha);
            const Tensor final_state = run(model, rc, store_ptr);

            std::vector<std::vector<float>> items;
            for (int64_t i = 0; i < rc.batch; ++i) {
                items.emplace_back(final_state.data() + i * item_len,
                                   final_state.data() + (i + 1) * item_len);
            }
            std::string diversity = "";
            if (rc.batch >= 2) diversity = fmt_double(pairwise_diversity(items).diversity);
            std::string ref_sim = "";
            if (store_ptr) {
                double mean = 0.0;
                for (const auto& f : items) mean += max_ref_similarity(f, store);
                ref_sim = fmt_double(mean / static_cast<double>(items.size()));
            }
            csv << fmt_double(alpha) << "," << seed << "," << diversity << "," << ref_sim << "\n";
        }
    }
    return 0;
}

std::string classify_by_store(const Tensor& tokens, const AssetStore& store) {
    const auto [idx, score] = select_reference_rag(tokens, store);
    (void)score;
    const std::string& label = store.assets[static_cast<size_t>(idx)].label;
    return label.empty() ? "asset" + std::to_string(idx) : label;
}

int cmd_metrics(const std::string& features_dir, const std::string& mode,
                const std::string& out_path, const std::string& csv_path,
                const std::string& assets_dir, const std::string& labels_path,
                std::optional<int64_t> exclude) {
    const std::vector<FeatureItem> features = load_features(features_dir);
    json report;
    std::vector<std::pair<std::string, std::string>> csv_rows;

    if (mode == "diversity") {
        std::vector<std::vector<float>> vecs;
        for (const auto& f : features) vecs.push_back(f.flat);
        const DiversityReport r = pairwise_diversity(vecs);
        report = json{
            {"metric", "diversity"},
            {"proxy", kDiversityProxy},
            {"n_vectors", vecs.size()},
            {"mean_pairwise_similarity", r.mean_pairwise_similarity},
            {"diversity", r.diversity},
        };
        csv_rows.emplace_back("diversity", fmt_double(r.diversity));
        csv_rows.emplace_back("mean_pairwise_similarity", fmt_double(r.mean_pairwise_similarity));
    } else if (mode == "entropy") {
        // category -> subcategory -> count; labels come from a label file or
        // from nearest-asset classification
        std::map<std::string, std::map<std::string, int64_t>> counts;
        if (!labels_path.empty()) {
            std::ifstream in(labels_path);
            if (!in) throw IoError("cannot open " + labels_path);
            json lj;
            try {
                in >> lj;
            } catch (const json::exception& e) {
                throw ConfigError(labels_path + ": " + std::string(e.what()));
            }
            if (!lj.is_object() || !lj.contains("items") || !lj.at("items").is_array()) {
                throw ConfigError("labels file must contain an \"items\" array");
            }
            std::map<std::string, std::pair<std::string, std::string>> by_file;
            for (const auto& item : lj.at("items")) {
                if (!item.contains("file") || !item.contains("label")) {
                    throw ConfigError("label entries need \"file\" and \"label\"");
                }
                const std::string cat =
                    item.contains("category") ? item.at("category").get<std::string>() : "all";
                by_file[item.at("file").get<std::string>()] = {
                    item.at("label").get<std::string>(), cat};
            }
            for (const auto& f : features) {
                const auto it = by_file.find(f.file);
                if (it == by_file.end()) {
                    throw ConfigError("no label for feature file \"" + f.file + "\"");
                }
                counts[it->second.second][it->second.first] += 1;
            }
        } else if (!assets_dir.empty()) {
            const AssetStore store = load_asset_store(assets_dir);
            for (const auto& f : features) {
                counts["all"][classify_by_store(f.tokens, store)] += 1;
            }
        } else {
            throw ConfigError("entropy mode needs --labels or --assets");
        }

        json per_cat = json::object();
        json count_json = json::object();
        double mean_entropy = 0.0;
        std::vector<int64_t> pooled;
        for (const auto& [cat, sub] : counts) {
            std::vector<int64_t> c;
            json cj = json::object();
            for (const auto& [label, k] : sub) {
                c.push_back(k);
                pooled.push_back(k);
                cj[label] = k;
            }
            const double e = entropy_score(c);
            per_cat[cat] = e;
            count_json[cat] = cj;
            mean_entropy += e;
            csv_rows.emplace_back("entropy_" + cat, fmt_double(e));
        }
        mean_entropy /= static_cast<double>(counts.size());
        const double pooled_entropy = entropy_score(pooled);
        report = json{
            {"metric", "entropy"},
            {"log_base", "e"},
            {"counts", count_json},
            {"per_category_entropy", per_cat},
            {"mean_per_category_entropy", mean_entropy},
            {"pooled_entropy", pooled_entropy},
        };
        csv_rows.emplace_back("mean_per_category_entropy", fmt_double(mean_entropy));
        csv_rows.emplace_back("pooled_entropy", fmt_double(pooled_entropy));
    } else if (mode == "copyright") {
        if (assets_dir.empty()) throw ConfigError("copyright mode needs --assets");
        const AssetStore store = load_asset_store(assets_dir);
        json per_item = json::array();
        double mean = 0.0;
        double worst = -2.0;
        for (const auto& f : features) {
            const double s = max_ref_similarity(f.flat, store, exclude);
            per_item.push_back({{"file", f.file}, {"item", f.item}, {"max_similarity", s}});
            csv_rows.emplace_back(f.file + ":" + std::to_string(f.item), fmt_double(s));
            mean += s;
            worst = std::max(worst, s);
        }
        mean /= static_cast<double>(features.size());
        report = json{
            {"metric", "copyright"},
            {"proxy", kDiversityProxy},
            {"mean_max_similarity", mean},
            {"highest_max_similarity", worst},
            {"per_item", per_item},
        };
        if (exclude) report["excluded_asset"] = *exclude;
        csv_rows.emplace_back("mean_max_similarity", fmt_double(mean));
    }

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    out << report.dump(2) << "\n";

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw IoError("cannot write " + csv_path);
        csv << "metric,value\n";
        for (const auto& [k, v] : csv_rows) csv << k << "," << v << "\n";
    }
    return 0;
}

const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
    if (dynamic_cast<const IndexError*>(&e)) return "index";
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    if (dynamic_cast<const InputError*>(&e)) return "input";
    if (dynamic_cast<const IoError*>(&e)) return "io";
    return "internal";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"negative token merging: kernel, toy harness, metrics"};
    app.require_subcommand(1);

    // merge
    auto* merge_cmd = app.add_subcommand("merge", "apply the merge kernel to tensor files");
    std::string src_path, ref_path, out_path, mask_path;
    double alpha = 0.0, tau = 0.7, epsilon = 1e-6;
    merge_cmd->add_option("--src", src_path, "source features, rank-3 .ntf")->required();
    merge_cmd->add_option("--ref", ref_path, "reference tokens, rank-2 .ntf")->required();
    merge_cmd->add_option("--out", out_path, "output .ntf")->required();
    merge_cmd->add_option("--alpha", alpha, "merge strength, negative interpolates")->required();
    merge_cmd->add_option("--tau", tau, "match threshold")->capture_default_str();
    merge_cmd->add_option("--epsilon", epsilon, "mask bias epsilon")->capture_default_str();
    merge_cmd->add_option("--mask", mask_path, "reference mask .ntf (grid or flat)");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "run the toy denoiser per seed");
    std::string config_path, sim_out, timing_path;
    sim_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    sim_cmd->add_option("--out", sim_out, "output directory")->required();
    sim_cmd->add_option("--timing", timing_path, "write wall-clock JSON to this file");

    // interp
    auto* interp_cmd = app.add_subcommand("interp", "sweep alpha and emit a CSV");
    std::string interp_config, alphas_arg, interp_out;
    interp_cmd->add_option("--config", interp_config, "experiment config JSON")->required();
    interp_cmd->add_option("--alphas", alphas_arg, "comma-separated alpha grid")->required();
    interp_cmd->add_option("--out", interp_out, "output directory")->required();

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "report metrics over feature files");
    std::string features_dir, mode, metrics_out, csv_path, assets_dir, labels_path;
    int64_t exclude_idx = -1;
    metrics_cmd->add_option("--features", features_dir, "directory of .ntf files")->required();
    metrics_cmd->add_option("--mode", mode, "diversity | entropy | copyright")
        ->required()
        ->check(CLI::IsMember({"diversity", "entropy", "copyright"}));
    metrics_cmd->add_option("--out", metrics_out, "report JSON path")->required();
    metrics_cmd->add_option("--csv", csv_path, "also write a plot-ready CSV");
    metrics_cmd->add_option("--assets", assets_dir, "asset store directory");
    metrics_cmd->add_option("--labels", labels_path, "labels JSON file");
    metrics_cmd->add_option("--exclude", exclude_idx, "asset index to exclude");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", {{"type", "usage"}, {"message", e.what()}}}}.dump() << "\n";
        return 2;
    }

    try {
        if (merge_cmd->parsed()) {
            return cmd_merge(src_path, ref_path, out_path, mask_path, alpha, tau, epsilon);
        }
        if (sim_cmd->parsed()) return cmd_simulate(config_path, sim_out, timing_path);
        if (interp_cmd->parsed()) return cmd_interp(interp_config, alphas_arg, interp_out);
        if (metrics_cmd->parsed()) {
            std::optional<int64_t> excl;
            if (exclude_idx >= 0) excl = exclude_idx;
            return cmd_metrics(features_dir, mode, metrics_out, csv_path, assets_dir,
                               labels_path, excl);
        }
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"type", error_kind(e)}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 1;
    }
    return 0;
}
