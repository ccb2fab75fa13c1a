#include "negtome/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace negtome {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'F', '1'};

void append_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

uint64_t read_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

[[noreturn]] void format_fail(const std::string& what, size_t offset) {
    std::ostringstream os;
    os << what << " at offset " << offset;
    throw FormatError(os.str());
}

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
        }
    }
}

int64_t require_int(const nlohmann::json& j, const std::string& key, int64_t min_value) {
    if (!j.contains(key)) throw ConfigError("missing required key \"" + key + "\"");
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError("\"" + key + "\" must be an integer");
    const int64_t n = v.get<int64_t>();
    if (n < min_value) {
        throw ConfigError("\"" + key + "\" must be >= " + std::to_string(min_value));
    }
    return n;
}

double require_finite_number(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("\"" + key + "\" must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError("\"" + key + "\" must be finite");
    return d;
}

} // namespace

std::vector<uint8_t> serialize_tensor(const Tensor& t) {
    std::vector<uint8_t> out;
    out.reserve(6 + 8 * static_cast<size_t>(t.rank()) + 4 * static_cast<size_t>(t.size()));
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(0); // dtype f32
    out.push_back(static_cast<uint8_t>(t.rank()));
    for (int64_t e : t.shape()) append_u64(out, static_cast<uint64_t>(e));
    const size_t payload = static_cast<size_t>(t.size()) * 4;
    const size_t base = out.size();
    out.resize(base + payload);
    std::memcpy(out.data() + base, t.data(), payload);
    return out;
}

Tensor parse_tensor(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        format_fail("bad magic, expected \"NTF1\"", 0);
    }
    if (bytes.size() < 5) format_fail("truncated header, missing dtype", 4);
    if (bytes[4] != 0) format_fail("unsupported dtype " + std::to_string(bytes[4]), 4);
    if (bytes.size() < 6) format_fail("truncated header, missing rank", 5);
    const uint8_t rank = bytes[5];
    if (rank != 2 && rank != 3) format_fail("unsupported rank " + std::to_string(rank), 5);
    const size_t extent_bytes = 8 * static_cast<size_t>(rank);
    if (bytes.size() < 6 + extent_bytes) format_fail("truncated extents", 6);
    std::vector<int64_t> shape(rank);
    uint64_t count = 1;
    for (int i = 0; i < rank; ++i) {
        const uint64_t e = read_u64(bytes.data() + 6 + 8 * static_cast<size_t>(i));
        if (e < 1 || e > (1ULL << 32)) {
            format_fail("invalid extent " + std::to_string(e), 6 + 8 * static_cast<size_t>(i));
        }
        shape[static_cast<size_t>(i)] = static_cast<int64_t>(e);
        count *= e;
    }
    const size_t payload_offset = 6 + extent_bytes;
    const size_t expected = static_cast<size_t>(count) * 4;
    const size_t actual = bytes.size() - payload_offset;
    if (actual != expected) {
        std::ostringstream os;
        os << "payload length " << actual << " does not match expected " << expected;
        format_fail(os.str(), payload_offset);
    }
    std::vector<float> data(count);
    std::memcpy(data.data(), bytes.data() + payload_offset, expected);
    return Tensor(std::move(shape), std::move(data));
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on " + path.string());
    try {
        return parse_tensor(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    const std::vector<uint8_t> bytes = serialize_tensor(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on " + path.string());
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    reject_unknown_keys(j,
                        {"batch", "steps", "tokens", "features", "hidden", "blocks", "model_seed",
                         "seeds", "ref_mode", "block_range", "cfg_like_scale", "merge", "assets",
                         "output"},
                        "experiment config");

    ExperimentConfig cfg;
    cfg.run.batch = require_int(j, "batch", 1);
    cfg.run.steps = require_int(j, "steps", 1);
    cfg.dims.n_tokens = require_int(j, "tokens", 1);
    cfg.dims.d_model = require_int(j, "features", 1);
    cfg.dims.d_hidden = j.contains("hidden") ? require_int(j, "hidden", 1) : 4 * cfg.dims.d_model;
    cfg.dims.n_blocks = j.contains("blocks") ? require_int(j, "blocks", 1) : 4;
    if (j.contains("model_seed")) {
        if (!j.at("model_seed").is_number_unsigned() && !j.at("model_seed").is_number_integer()) {
            throw ConfigError("\"model_seed\" must be an integer");
        }
        cfg.model_seed = j.at("model_seed").get<uint64_t>();
    }

    if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty()) {
        throw ConfigError("\"seeds\" must be a non-empty array of integers");
    }
    for (const auto& s : j.at("seeds")) {
        if (!s.is_number_integer() && !s.is_number_unsigned()) {
            throw ConfigError("\"seeds\" must contain only integers");
        }
        cfg.seeds.push_back(s.get<uint64_t>());
    }

    if (!j.contains("ref_mode") || !j.at("ref_mode").is_string()) {
        throw ConfigError("\"ref_mode\" must be a string");
    }
    const std::string mode = j.at("ref_mode").get<std::string>();
    if (mode == "none") cfg.run.ref_mode = RefMode::None;
    else if (mode == "first-in-batch") cfg.run.ref_mode = RefMode::FirstInBatch;
    else if (mode == "all-pairs") cfg.run.ref_mode = RefMode::AllPairs;
    else if (mode == "external-asset") cfg.run.ref_mode = RefMode::ExternalAsset;
    else {
        throw ConfigError("\"ref_mode\" must be one of none | first-in-batch | all-pairs | "
                          "external-asset, got \"" + mode + "\"");
    }

    cfg.run.block_lo = 0;
    cfg.run.block_hi = cfg.dims.n_blocks - 1;
    if (j.contains("block_range")) {
        const auto& br = j.at("block_range");
        if (!br.is_array() || (br.size() != 0 && br.size() != 2)) {
            throw ConfigError("\"block_range\" must be [] or [lo, hi]");
        }
        if (br.empty()) {
            cfg.run.block_lo = 0;
            cfg.run.block_hi = -1;
        } else {
            if (!br[0].is_number_integer() || !br[1].is_number_integer()) {
                throw ConfigError("\"block_range\" entries must be integers");
            }
            cfg.run.block_lo = br[0].get<int64_t>();
            cfg.run.block_hi = br[1].get<int64_t>();
            if (cfg.run.block_lo > cfg.run.block_hi || cfg.run.block_lo < 0 ||
                cfg.run.block_hi >= cfg.dims.n_blocks) {
                throw ConfigError("\"block_range\" must satisfy 0 <= lo <= hi < blocks");
            }
        }
    }

    if (j.contains("cfg_like_scale") && !j.at("cfg_like_scale").is_null()) {
        cfg.run.cfg_like_scale = require_finite_number(j.at("cfg_like_scale"), "cfg_like_scale");
    }

    if (j.contains("merge")) {
        const auto& m = j.at("merge");
        if (!m.is_object()) throw ConfigError("\"merge\" must be an object");
        reject_unknown_keys(m, {"alpha", "tau", "epsilon", "t_window", "schedule"}, "merge config");
        if (m.contains("alpha")) {
            cfg.run.merge.alpha = static_cast<float>(require_finite_number(m.at("alpha"), "alpha"));
        }
        if (m.contains("tau")) {
            cfg.run.merge.tau = static_cast<float>(require_finite_number(m.at("tau"), "tau"));
        }
        if (m.contains("epsilon")) {
            cfg.run.merge.epsilon =
                static_cast<float>(require_finite_number(m.at("epsilon"), "epsilon"));
        }
        if (m.contains("t_window")) {
            const auto& w = m.at("t_window");
            if (!w.is_array() || w.size() != 2 || !w[0].is_number_integer() ||
                !w[1].is_number_integer()) {
                throw ConfigError("\"t_window\" must be [t_hi, t_lo]");
            }
            cfg.run.merge.t_hi = w[0].get<int64_t>();
            cfg.run.merge.t_lo = w[1].get<int64_t>();
        }
        if (m.contains("schedule")) {
            if (!m.at("schedule").is_string()) throw ConfigError("\"schedule\" must be a string");
            const std::string sk = m.at("schedule").get<std::string>();
            if (sk == "constant") cfg.run.merge.schedule = ScheduleKind::Constant;
            else if (sk == "linear-decay") cfg.run.merge.schedule = ScheduleKind::LinearDecay;
            else throw ConfigError("\"schedule\" must be constant | linear-decay, got \"" + sk + "\"");
        }
    }
    validate_merge_config(cfg.run.merge);

    if (j.contains("assets")) {
        if (!j.at("assets").is_string()) throw ConfigError("\"assets\" must be a string path");
        cfg.assets_path = j.at("assets").get<std::string>();
    }
    if (j.contains("output")) {
        if (!j.at("output").is_string()) throw ConfigError("\"output\" must be a string path");
        cfg.output_dir = j.at("output").get<std::string>();
    }
    if (cfg.run.ref_mode == RefMode::ExternalAsset && !cfg.assets_path) {
        throw ConfigError("ref_mode \"external-asset\" requires \"assets\"");
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_experiment_config(j);
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["batch"] = cfg.run.batch;
    j["steps"] = cfg.run.steps;
    j["tokens"] = cfg.dims.n_tokens;
    j["features"] = cfg.dims.d_model;
    j["hidden"] = cfg.dims.d_hidden;
    j["blocks"] = cfg.dims.n_blocks;
    j["model_seed"] = cfg.model_seed;
    j["seeds"] = cfg.seeds;
    switch (cfg.run.ref_mode) {
        case RefMode::None: j["ref_mode"] = "none"; break;
        case RefMode::FirstInBatch: j["ref_mode"] = "first-in-batch"; break;
        case RefMode::AllPairs: j["ref_mode"] = "all-pairs"; break;
        case RefMode::ExternalAsset: j["ref_mode"] = "external-asset"; break;
    }
    if (cfg.run.block_lo > cfg.run.block_hi) {
        j["block_range"] = nlohmann::json::array();
    } else {
        j["block_range"] = {cfg.run.block_lo, cfg.run.block_hi};
    }
    if (cfg.run.cfg_like_scale) j["cfg_like_scale"] = *cfg.run.cfg_like_scale;
    j["merge"] = {
        {"alpha", cfg.run.merge.alpha},
        {"tau", cfg.run.merge.tau},
        {"epsilon", cfg.run.merge.epsilon},
        {"t_window", {cfg.run.merge.t_hi, cfg.run.merge.t_lo}},
        {"schedule", cfg.run.merge.schedule == ScheduleKind::Constant ? "constant" : "linear-decay"},
    };
    if (cfg.assets_path) j["assets"] = *cfg.assets_path;
    if (cfg.output_dir) j["output"] = *cfg.output_dir;
    return j;
}

AssetStore load_asset_store(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(manifest_path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("assets") || !j.at("assets").is_array()) {
        throw ConfigError(manifest_path.string() + ": manifest must contain an \"assets\" array");
    }
    reject_unknown_keys(j, {"assets"}, "asset manifest");
    AssetStore store;
    for (const auto& entry : j.at("assets")) {
        if (!entry.is_object() || !entry.contains("tokens") || !entry.at("tokens").is_string()) {
            throw ConfigError("asset entries must be objects with a \"tokens\" file");
        }
        reject_unknown_keys(entry, {"tokens", "mask", "label"}, "asset entry");
        Asset a;
        Tensor tokens = read_tensor(dir / entry.at("tokens").get<std::string>());
        if (tokens.rank() != 2) {
            throw ConfigError("asset tokens must be rank-2 N_ref x D, got " +
                              shape_to_string(tokens.shape()));
        }
        std::optional<MaskVector> mask;
        if (entry.contains("mask")) {
            if (!entry.at("mask").is_string()) throw ConfigError("asset \"mask\" must be a file path");
            const Tensor grid = read_tensor(dir / entry.at("mask").get<std::string>());
            mask = resize_mask(grid, tokens.extent(0));
        }
        if (entry.contains("label")) {
            if (!entry.at("label").is_string()) throw ConfigError("asset \"label\" must be a string");
            a.label = entry.at("label").get<std::string>();
        }
        a.ref = ReferenceTokens(std::move(tokens), std::move(mask));
        store.assets.push_back(std::move(a));
    }
    return store;
}

} // namespace negtome
