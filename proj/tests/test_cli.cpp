#include "doctest.h"

#include "hjmcal/calibration.hpp"
#include "hjmcal/io.hpp"
#include "hjmcal/neural_net.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace hjmcal;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path root = fs::temp_directory_path() / "hjmcal_cli_tests";

int run(const std::string& args) {
    const std::string cmd = std::string(HJMCAL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> data_lines(const fs::path& p) {
    std::vector<std::string> out;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

std::string dir(const std::string& name) {
    const fs::path d = root / name;
    fs::remove_all(d);
    return d.string();
}

}  // namespace

TEST_CASE("generate writes datasets of the requested shape") {
    const std::string out = dir("gen");
    REQUIRE(run("generate --mode grid --n-train 100 --n-test 10 --seed 4 --out " + out) == 0);
    const auto train = data_lines(fs::path(out) / "train.csv");
    const auto test = data_lines(fs::path(out) / "test.csv");
    REQUIRE(train.size() == 101);
    REQUIRE(test.size() == 11);
    CHECK(std::count(train[0].begin(), train[0].end(), ',') == 69);
    CHECK(std::count(test[5].begin(), test[5].end(), ',') == 69);
    CHECK(slurp(fs::path(out) / "train.csv").find("seed=4") != std::string::npos);
    CHECK(fs::exists(fs::path(out) / "test_observations.csv"));
    CHECK(fs::exists(fs::path(out) / "test_bidask.csv"));

    const std::string again = dir("gen_again");
    REQUIRE(run("generate --mode grid --n-train 100 --n-test 10 --seed 4 --out " + again) == 0);
    // The output directory is part of the recorded configuration, so compare data rows.
    CHECK(data_lines(fs::path(out) / "train.csv") == data_lines(fs::path(again) / "train.csv"));
    CHECK(data_lines(fs::path(out) / "test.csv") == data_lines(fs::path(again) / "test.csv"));

    const std::string wider = dir("gen_box");
    REQUIRE(run("generate --n-train 5 --n-test 2 --seed 4 --box-upper 0.6 0.8 9 34.7 -1 1.2 5 --out " + wider) == 0);
    const json m1 = json::parse(slurp(fs::path(out) / "manifest.json"));
    const json m2 = json::parse(slurp(fs::path(wider) / "manifest.json"));
    CHECK(m1["pricing_hash"] != m2["pricing_hash"]);
    CHECK(m1["seed"] == 4);
}

TEST_CASE("same seed and directory give byte-identical outputs") {
    const std::string a = dir("det_a");
    auto pipeline = [&]() {
        REQUIRE(run("generate --n-train 60 --n-test 5 --seed 8 --out " + a) == 0);
        REQUIRE(run("train --dataset " + a + "/train.csv --test " + a + "/test.csv --epochs 3 --seed 8 --out " + a) == 0);
        REQUIRE(run("calibrate --weights " + a + "/weights.json --observations " + a +
                    "/test_observations.csv --epochs 30 --seed 8 --out " + a) == 0);
        std::string all;
        for (const char* f : {"train.csv", "test.csv", "manifest.json", "weights.json", "train_loss.csv",
                              "train_report.json", "results.json"})
            all += slurp(fs::path(a) / f) + "\n--\n";
        return all;
    };
    const std::string first = pipeline();
    const std::string second = pipeline();
    CHECK(first == second);
}

TEST_CASE("train reports the parameter count") {
    const std::string g = dir("train_grid");
    REQUIRE(run("generate --n-train 40 --n-test 4 --seed 2 --out " + g) == 0);
    REQUIRE(run("train --dataset " + g + "/train.csv --epochs 2 --seed 2 --out " + g) == 0);
    CHECK(json::parse(slurp(fs::path(g) / "train_report.json"))["parameter_count"] == 4053);
    CHECK(nn::load_network((fs::path(g) / "weights.json").string()).parameter_count() == 4053);
    CHECK(json::parse(slurp(fs::path(g) / "weights.json"))["parameter_count"] == 4053);

    const std::string p = dir("train_point");
    REQUIRE(run("generate --mode pointwise --n-train 40 --n-test 4 --seed 2 --out " + p) == 0);
    REQUIRE(run("train --dataset " + p + "/train.csv --test " + p + "/test.csv --epochs 2 --seed 2 --out " + p) == 0);
    CHECK(json::parse(slurp(fs::path(p) / "train_report.json"))["parameter_count"] == 2191);

    CHECK(run("train --dataset " + g + "/train.csv --epochs 0 --out " + g) != 0);
    CHECK(run("train --dataset " + g + "/train.csv --mode pointwise --out " + g) != 0);
    CHECK(run("train --dataset " + g + "/missing.csv --out " + g) != 0);
}

TEST_CASE("calibrate") {
    const std::string d = dir("calib");
    REQUIRE(run("generate --n-train 40 --n-test 3 --seed 6 --out " + d) == 0);
    REQUIRE(run("train --dataset " + d + "/train.csv --epochs 2 --seed 6 --out " + d) == 0);
    const fs::path base(d);

    SUBCASE("net-generated observations at the start point give zero loss") {
        nn::Network net = nn::load_network((base / "weights.json").string());
        net.biases.back().array() += 5.0;  // barely trained; keep outputs positive
        nn::save_network(net, (base / "shifted.json").string());
        const calib::ThetaBox box;
        const auto x = calib::to_vector(box.midpoint());
        calib::GridSample s{box.midpoint(),
                            calib::unflatten(nn::forward(net, Eigen::Map<const Eigen::VectorXd>(x.data(), 7)), 7, 9)};
        io::write_observations((base / "net_obs.csv").string(), calib::grid_to_observations(s, calib::ContractGrid{}),
                               "");
        REQUIRE(run("calibrate --weights " + d + "/shifted.json --observations " + d +
                    "/net_obs.csv --epochs 20 --out " + d + "/zero") == 0);
        const auto doc = io::read_results((base / "zero" / "results.json").string());
        REQUIRE(doc.runs.size() == 1);
        CHECK(doc.runs[0].result.final_loss == 0.0);
        CHECK(doc.runs[0].result.theta_hat == box.midpoint());
    }
    SUBCASE("exact mode estimates lie in the box") {
        REQUIRE(run("calibrate --weights " + d + "/weights.json --observations " + d +
                    "/test_observations.csv --epochs 50 --out " + d + "/exact") == 0);
        const json doc = json::parse(slurp(base / "exact" / "results.json"));
        const auto& th = doc["runs"][0]["theta_hat"];
        CHECK(th.size() == 7);
        const calib::ThetaBox box;
        const ModelParams p{th["a"], th["b"], th["k"], th["alpha0"], th["alpha1"], th["alpha2"], th["alpha3"]};
        CHECK(box.contains(p));
        CHECK(doc["config"]["epochs"] == "50");
    }
    SUBCASE("bid-ask mode emits mismatch grids and report tables") {
        REQUIRE(run("calibrate --weights " + d + "/weights.json --observations " + d +
                    "/test_bidask.csv --mode bidask --epochs 50 --out " + d + "/ba") == 0);
        const auto doc = io::read_results((base / "ba" / "results.json").string());
        REQUIRE(doc.runs.size() == 1);
        CHECK(doc.runs[0].result.mismatch_before.has_value());
        CHECK(doc.runs[0].result.mismatch_after.has_value());
        REQUIRE(run("report --results " + d + "/ba/results.json --out " + d + "/ba_report") == 0);
        CHECK(fs::exists(base / "ba_report" / "mismatch_before.csv"));
        CHECK(fs::exists(base / "ba_report" / "mismatch_after.csv"));
        CHECK(run("calibrate --weights " + d + "/weights.json --observations " + d +
                  "/test_bidask.csv --mode exact --out " + d + "/wrong") != 0);
    }
    SUBCASE("batch calibration over a dataset") {
        REQUIRE(run("calibrate --weights " + d + "/weights.json --dataset " + d +
                    "/test.csv --epochs 10 --out " + d + "/batch") == 0);
        const auto doc = io::read_results((base / "batch" / "results.json").string());
        CHECK(doc.runs.size() == 3);
        CHECK(doc.runs[0].truth.has_value());
        CHECK(doc.runs[0].result.param_rel_err.has_value());
    }
}

TEST_CASE("report tables") {
    const std::string d = dir("report");
    io::ResultsDocument doc;
    doc.mode = "exact";
    doc.network_mode = "grid";
    doc.taus = calib::ContractGrid{}.taus;
    doc.strikes = calib::ContractGrid{}.strikes;
    calib::CalibrationResult r;
    r.theta_hat = calib::ThetaBox{}.midpoint();
    r.price_rel_err = calib::PriceGrid::Zero(7, 9);
    r.fit_rel_err = calib::PriceGrid::Zero(7, 9);
    r.param_rel_err = calib::ParamVector{};
    doc.runs.push_back({r, r.theta_hat});
    doc.runs.push_back({r, r.theta_hat});
    fs::create_directories(d);
    io::write_results(d + "/results.json", doc);
    REQUIRE(run("report --results " + d + "/results.json --out " + d) == 0);

    for (const char* f : {"price_error_mean.csv", "price_error_max.csv", "fit_error_mean.csv", "fit_error_max.csv"}) {
        const auto lines = data_lines(fs::path(d) / f);
        REQUIRE(lines.size() == 8);
        CHECK(lines[0].rfind("tau,K=31.6,", 0) == 0);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 9);
            CHECK(lines[i].substr(lines[i].find(',')) == ",0,0,0,0,0,0,0,0,0");
        }
    }
    const auto params = data_lines(fs::path(d) / "param_errors.csv");
    REQUIRE(params.size() == 8);
    const char* names[] = {"a", "b", "k", "alpha0", "alpha1", "alpha2", "alpha3"};
    for (int i = 0; i < 7; ++i) CHECK(params[static_cast<std::size_t>(i + 1)] == std::string(names[i]) + ",0,0");
    CHECK_FALSE(fs::exists(fs::path(d) / "mismatch_before.csv"));
}

TEST_CASE("verify command") {
    CHECK(run("verify --suite linear-embed --seed 2") == 0);
    CHECK(run("verify --suite unknown") != 0);
    const std::string d = dir("verify");
    REQUIRE(run("verify --suite adjoint --out " + d) == 0);
    const json doc = json::parse(slurp(fs::path(d) / "verify.json"));
    CHECK(doc["passed"] == true);
}

TEST_CASE("configuration files and environment") {
    const std::string d = dir("config");
    fs::create_directories(d);
    std::ofstream(d + "/ok.toml") << "[generate]\nseed = 7\nn-test = 3\n";
    std::ofstream(d + "/bad.toml") << "[generate]\nseed = 7\ncolour = 3\n";
    REQUIRE(run("generate --n-train 4 --config " + d + "/ok.toml --out " + d + "/a") == 0);
    CHECK(data_lines(fs::path(d) / "a" / "test.csv").size() == 4);
    CHECK(json::parse(slurp(fs::path(d) / "a" / "manifest.json"))["seed"] == 7);
    CHECK(run("generate --n-train 4 --config " + d + "/bad.toml --out " + d + "/b") != 0);
    CHECK_FALSE(fs::exists(fs::path(d) / "b"));

    REQUIRE(run("generate --n-train 4 --n-test 3 --seed 7 --out " + d + "/flag") == 0);
    CHECK(data_lines(fs::path(d) / "flag" / "train.csv") == data_lines(fs::path(d) / "a" / "train.csv"));

    const std::string env_out = d + "/from_env";
    const std::string cmd = "HJMCAL_OUT_DIR=" + env_out + " " + std::string(HJMCAL_CLI_PATH) +
                            " generate --n-train 3 --n-test 1 >/dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(fs::path(env_out) / "manifest.json"));
}
