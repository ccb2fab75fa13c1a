#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "negtome/io.hpp"

using namespace negtome;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CmdResult run_cmd(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(NEGTOME_CLI_PATH) + " " + args + " > " + out.string() +
                            " 2> " + err.string();
    const int rc = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

fs::path make_temp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("negtome_cli_test_" + std::to_string(::getpid()) +
                                              "_" + std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

void write_config(const fs::path& p, const json& extra = {}) {
    json cfg{
        {"batch", 3},  {"steps", 4},
        {"tokens", 16}, {"features", 8},
        {"seeds", {1, 2}}, {"ref_mode", "first-in-batch"},
        {"merge", {{"alpha", 0.8}, {"tau", 0.0}}},
    };
    for (auto it = extra.begin(); it != extra.end(); ++it) cfg[it.key()] = it.value();
    std::ofstream out(p);
    out << cfg.dump();
}

} // namespace

TEST_CASE("merge command reproduces the worked example") {
    const fs::path dir = make_temp_dir();
    write_tensor(dir / "src.ntf", Tensor({1, 1, 2}, {0.6f, 0.8f}));
    write_tensor(dir / "ref.ntf", Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f}));

    CmdResult r = run_cmd("merge --src " + (dir / "src.ntf").string() + " --ref " +
                              (dir / "ref.ntf").string() + " --alpha 0.5 --out " +
                              (dir / "out.ntf").string(),
                          dir);
    REQUIRE(r.exit_code == 0);
    const Tensor out = read_tensor(dir / "out.ntf");
    CHECK(out(0, 0, 0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(out(0, 0, 1) == doctest::Approx(0.7).epsilon(1e-6));

    const json stats = json::parse(r.out);
    CHECK(stats.at("tokens") == 1);
    CHECK(stats.at("gated") == 1);
    fs::remove_all(dir);
}

TEST_CASE("merge command with alpha 0 copies the input payload") {
    const fs::path dir = make_temp_dir();
    Tensor src({2, 3, 4});
    for (int64_t i = 0; i < src.size(); ++i) src.data()[i] = static_cast<float>(i) * 0.25f - 2.0f;
    write_tensor(dir / "src.ntf", src);
    write_tensor(dir / "ref.ntf", Tensor({2, 4}, std::vector<float>(8, 0.5f)));

    CmdResult r = run_cmd("merge --src " + (dir / "src.ntf").string() + " --ref " +
                              (dir / "ref.ntf").string() + " --alpha 0 --out " +
                              (dir / "out.ntf").string(),
                          dir);
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(dir / "out.ntf") == slurp(dir / "src.ntf"));
    fs::remove_all(dir);
}

TEST_CASE("merge command usage and runtime errors") {
    const fs::path dir = make_temp_dir();
    write_tensor(dir / "src.ntf", Tensor({1, 1, 2}, {0.6f, 0.8f}));

    SUBCASE("missing --ref is a usage error") {
        CmdResult r = run_cmd("merge --src " + (dir / "src.ntf").string() + " --alpha 0.5 --out " +
                                  (dir / "o.ntf").string(),
                              dir);
        CHECK(r.exit_code == 2);
        CHECK(json::parse(r.err).at("error").at("type") == "usage");
    }
    SUBCASE("corrupt magic is a format error") {
        std::ofstream bad(dir / "bad.ntf", std::ios::binary);
        bad << "XXXXjunk";
        bad.close();
        CmdResult r = run_cmd("merge --src " + (dir / "src.ntf").string() + " --ref " +
                                  (dir / "bad.ntf").string() + " --alpha 0.5 --out " +
                                  (dir / "o.ntf").string(),
                              dir);
        CHECK(r.exit_code == 1);
        const json e = json::parse(r.err);
        CHECK(e.at("error").at("type") == "format");
        CHECK(std::string(e.at("error").at("message")).find("offset 0") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("simulate writes per-seed outputs and a manifest") {
    const fs::path dir = make_temp_dir();
    write_config(dir / "run.json");
    CmdResult r = run_cmd(
        "simulate --config " + (dir / "run.json").string() + " --out " + (dir / "out").string(),
        dir);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(dir / "out" / "final_s1.ntf"));
    CHECK(fs::exists(dir / "out" / "final_s2.ntf"));
    const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
    CHECK(manifest.at("outputs").size() == 2);
    CHECK(manifest.at("config").at("batch") == 3);
    const Tensor t = read_tensor(dir / "out" / "final_s1.ntf");
    CHECK(t.shape() == std::vector<int64_t>{3, 16, 8});

    SUBCASE("second run is byte-identical") {
        run_cmd("simulate --config " + (dir / "run.json").string() + " --out " +
                    (dir / "out2").string(),
                dir);
        CHECK(slurp(dir / "out" / "final_s1.ntf") == slurp(dir / "out2" / "final_s1.ntf"));
        CHECK(slurp(dir / "out" / "final_s2.ntf") == slurp(dir / "out2" / "final_s2.ntf"));
        CHECK(slurp(dir / "out" / "manifest.json") == slurp(dir / "out2" / "manifest.json"));
    }
    SUBCASE("invalid config exits 1") {
        std::ofstream bad(dir / "bad.json");
        bad << R"({"batch": 2, "steps": 1, "tokens": 4, "features": 2, "seeds": [1],)"
            << R"( "ref_mode": "none", "bogus_key": 1})";
        bad.close();
        CmdResult rr = run_cmd("simulate --config " + (dir / "bad.json").string() + " --out " +
                                   (dir / "x").string(),
                               dir);
        CHECK(rr.exit_code == 1);
        CHECK(json::parse(rr.err).at("error").at("type") == "config");
    }
    fs::remove_all(dir);
}

TEST_CASE("interp emits one CSV row per alpha and seed") {
    const fs::path dir = make_temp_dir();
    write_config(dir / "run.json");
    CmdResult r = run_cmd("interp --config " + (dir / "run.json").string() +
                              " --alphas -0.5,0,0.5 --out " + (dir / "sweep").string(),
                          dir);
    REQUIRE(r.exit_code == 0);
    std::ifstream csv(dir / "sweep" / "interp.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "alpha,seed,diversity,max_ref_similarity");
    std::vector<std::string> rows;
    while (std::getline(csv, line)) rows.push_back(line);
    REQUIRE(rows.size() == 6); // 3 alphas x 2 seeds
    CHECK(rows[0].rfind("-0.5,1,", 0) == 0);
    CHECK(rows[2].rfind("0,1,", 0) == 0);
    CHECK(rows[5].rfind("0.5,2,", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("metrics diversity of two identical feature files is zero") {
    const fs::path dir = make_temp_dir();
    fs::create_directories(dir / "feat");
    Tensor t({4, 6}, std::vector<float>(24, 0.0f));
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = 0.1f * static_cast<float>(i % 7) - 0.3f;
    write_tensor(dir / "feat" / "a.ntf", t);
    write_tensor(dir / "feat" / "b.ntf", t);

    CmdResult r = run_cmd("metrics --features " + (dir / "feat").string() +
                              " --mode diversity --out " + (dir / "rep.json").string(),
                          dir);
    REQUIRE(r.exit_code == 0);
    const json rep = json::parse(slurp(dir / "rep.json"));
    CHECK(rep.at("diversity") == 0.0);
    CHECK(rep.at("metric") == "diversity");
    CHECK(rep.contains("proxy"));
    fs::remove_all(dir);
}

TEST_CASE("metrics entropy from a labels file reports both averaging orders") {
    const fs::path dir = make_temp_dir();
    fs::create_directories(dir / "feat");
    for (int i = 0; i < 4; ++i) {
        Tensor t({2, 3}, std::vector<float>(6, static_cast<float>(i + 1)));
        write_tensor(dir / "feat" / ("f" + std::to_string(i) + ".ntf"), t);
    }
    {
        std::ofstream lf(dir / "labels.json");
        lf << R"({"items": [
            {"file": "f0.ntf", "label": "a", "category": "c1"},
            {"file": "f1.ntf", "label": "b", "category": "c1"},
            {"file": "f2.ntf", "label": "a", "category": "c2"},
            {"file": "f3.ntf", "label": "a", "category": "c2"}
        ]})";
    }
    CmdResult r = run_cmd("metrics --features " + (dir / "feat").string() +
                              " --mode entropy --labels " + (dir / "labels.json").string() +
                              " --out " + (dir / "rep.json").string() + " --csv " +
                              (dir / "rep.csv").string(),
                          dir);
    REQUIRE(r.exit_code == 0);
    const json rep = json::parse(slurp(dir / "rep.json"));
    CHECK(rep.at("log_base") == "e");
    CHECK(rep.at("per_category_entropy").at("c1") == doctest::Approx(0.6931471805599453));
    CHECK(rep.at("per_category_entropy").at("c2") == doctest::Approx(0.0));
    CHECK(rep.at("mean_per_category_entropy") == doctest::Approx(0.34657359027997264));
    // pooled over the (category, label) cells c1/a:1, c1/b:1, c2/a:2
    CHECK(rep.at("pooled_entropy") == doctest::Approx(1.0397207708399179));
    CHECK(slurp(dir / "rep.csv").rfind("metric,value\n", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("metrics copyright reports per-item max similarity") {
    const fs::path dir = make_temp_dir();
    fs::create_directories(dir / "feat");
    fs::create_directories(dir / "store");
    Tensor feat({2, 4}, {1.0f, 0.0f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f});
    write_tensor(dir / "feat" / "f.ntf", feat);
    write_tensor(dir / "store" / "a.ntf", feat); // bit-equal asset
    write_tensor(dir / "store" / "b.ntf", Tensor({2, 4}, std::vector<float>(8, 0.25f)));
    {
        std::ofstream mf(dir / "store" / "manifest.json");
        mf << R"({"assets": [{"tokens": "a.ntf", "label": "x"}, {"tokens": "b.ntf"}]})";
    }
    CmdResult r = run_cmd("metrics --features " + (dir / "feat").string() +
                              " --mode copyright --assets " + (dir / "store").string() +
                              " --out " + (dir / "rep.json").string(),
                          dir);
    REQUIRE(r.exit_code == 0);
    const json rep = json::parse(slurp(dir / "rep.json"));
    CHECK(rep.at("mean_max_similarity") == doctest::Approx(1.0));

    CmdResult r2 = run_cmd("metrics --features " + (dir / "feat").string() +
                               " --mode copyright --assets " + (dir / "store").string() +
                               " --exclude 0 --out " + (dir / "rep2.json").string(),
                           dir);
    REQUIRE(r2.exit_code == 0);
    const json rep2 = json::parse(slurp(dir / "rep2.json"));
    CHECK(rep2.at("mean_max_similarity").get<double>() < 1.0);
    fs::remove_all(dir);
}

TEST_CASE("metrics rejects an unknown mode as usage error") {
    const fs::path dir = make_temp_dir();
    CmdResult r = run_cmd("metrics --features x --mode bogus --out y", dir);
    CHECK(r.exit_code == 2);
    fs::remove_all(dir);
}
