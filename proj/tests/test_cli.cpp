#include "injflow/geometry.hpp"
#include "injflow/network.hpp"
#include "injflow/subnet.hpp"

#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace injflow;
namespace fs = std::filesystem;

namespace {

struct Run {
    int exit_code = -1;
    std::string err;
};

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("injflow_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Run run_cli(const fs::path& cwd, const std::string& args)
{
    const fs::path err = cwd / "stderr.txt";
    const std::string cmd = "cd '" + cwd.string() + "' && '" + std::string(INJFLOW_CLI_PATH) + "' " + args +
                            " > stdout.txt 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Run r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = testing::slurp(err.string());
    return r;
}

nlohmann::json read_json(const fs::path& path)
{
    return nlohmann::json::parse(testing::slurp(path.string()));
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& path)
{
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Vec vec(std::initializer_list<double> v)
{
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out(i++) = x;
    }
    return out;
}

} // namespace

TEST_CASE("output directory defaults to ./out")
{
    const auto dir = scratch("default_out");
    const auto r = run_cli(dir, "run projection-bench --trials 3 --seed 1");
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(dir / "out" / "summary.json"));
    CHECK(fs::exists(dir / "out" / "instances.csv"));
    const auto summary = read_json(dir / "out" / "summary.json");
    CHECK(summary["preset"] == "projection-bench");
    CHECK(summary["seed"] == 1);
    CHECK(summary.contains("wall_time"));
    for (const auto& [key, value] : summary["metrics"].items()) {
        if (value.is_number()) {
            CHECK(std::isfinite(value.get<double>()));
        }
    }
}

TEST_CASE("malformed config is a usage error with a position")
{
    const auto dir = scratch("bad_config");
    std::ofstream(dir / "bad.json") << "{\n  \"trials\": ,\n}\n";
    const auto r = run_cli(dir, "run projection-bench --config bad.json");
    CHECK(r.exit_code == 2);
    const auto record = nlohmann::json::parse(r.err);
    CHECK(record["error"] == "invalid-config");
    CHECK(record["line"] == 2);
    CHECK(record.contains("column"));
}

TEST_CASE("usage errors exit with status 2")
{
    const auto dir = scratch("usage");
    CHECK(run_cli(dir, "run no-such-preset").exit_code == 2);
    CHECK(run_cli(dir, "run projection-bench --format xml").exit_code == 2);
    CHECK(run_cli(dir, "run gap-visualization --trials 3").exit_code == 2);
    CHECK(run_cli(dir, "gap --checkpoint a --target b --w-samples c --exact --sliced").exit_code == 2);
    std::ofstream(dir / "cfg.json") << R"({"trials": "many"})";
    CHECK(run_cli(dir, "run projection-bench --config cfg.json").exit_code == 2);
}

TEST_CASE("flags override config values")
{
    const auto dir = scratch("override");
    std::ofstream(dir / "cfg.json") << R"({"trials": 7, "tie_trials": 2})";
    REQUIRE(run_cli(dir, "run projection-bench --config cfg.json --trials 3").exit_code == 0);
    const auto summary = read_json(dir / "out" / "summary.json");
    CHECK(summary["metrics"]["trials"] == 3);
    CHECK(summary["metrics"]["tie_trials"] == 2);
    CHECK(read_csv_rows(dir / "out" / "instances.csv").size() == 3);
}

TEST_CASE("json tables carry the same numbers as csv")
{
    const auto dir = scratch("formats");
    REQUIRE(run_cli(dir, "run projection-bench --trials 6 --seed 4 --out c").exit_code == 0);
    REQUIRE(run_cli(dir, "run projection-bench --trials 6 --seed 4 --out j --format json").exit_code == 0);
    for (const char* stem : {"instances", "ties", "regions"}) {
        const auto csv = read_csv_rows(dir / "c" / (std::string(stem) + ".csv"));
        const auto js = read_json(dir / "j" / (std::string(stem) + ".json"));
        REQUIRE(js["rows"].size() == csv.size());
        for (std::size_t i = 0; i < csv.size(); ++i) {
            REQUIRE(js["rows"][i].size() == csv[i].size());
            for (std::size_t k = 0; k < csv[i].size(); ++k) {
                CHECK(js["rows"][i][k].get<double>() == csv[i][k]);
            }
        }
    }
}

TEST_CASE("quick presets are deterministic")
{
    const auto dir = scratch("determinism");
    const std::string small_gap = R"({"k_samples": 40, "w_samples": 120})";
    std::ofstream(dir / "gap.json") << small_gap;
    for (const std::string out : {"a", "b"}) {
        REQUIRE(run_cli(dir, "run projection-bench --trials 10 --seed 9 --out p" + out).exit_code == 0);
        REQUIRE(run_cli(dir, "run gap-visualization --seed 9 --config gap.json --out g" + out).exit_code == 0);
    }
    for (const char* prefix : {"p", "g"}) {
        for (const auto& entry : fs::directory_iterator(dir / (std::string(prefix) + "a"))) {
            const auto name = entry.path().filename();
            const auto other = dir / (std::string(prefix) + "b") / name;
            if (name == "summary.json") {
                auto a = read_json(entry.path());
                auto b = read_json(other);
                a.erase("wall_time");
                b.erase("wall_time");
                CHECK(a == b);
            } else {
                CHECK(testing::slurp(entry.path().string()) == testing::slurp(other.string()));
            }
        }
    }
}

TEST_CASE("project writes preimages and range points")
{
    const auto dir = scratch("project");
    Rng rng(3);
    const auto net = testing::random_supported_network(rng);
    save_checkpoint(net, (dir / "net.json").string());
    const Mat x = rng.normal_matrix(net.in_dim(), 5);
    geometry::write_csv((dir / "queries.csv").string(), net.forward(x));
    REQUIRE(run_cli(dir, "project --checkpoint net.json --input queries.csv").exit_code == 0);
    std::ifstream in(dir / "out" / "projection.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("query0,", 0) == 0);
    CHECK(header.find("preimage0") != std::string::npos);
    CHECK(header.find("rangepoint0") != std::string::npos);
    CHECK(header.substr(header.size() - 17) == "residual,tie_flag");
    const auto rows = read_csv_rows(dir / "out" / "projection.csv");
    REQUIRE(rows.size() == 5);
    const auto m = static_cast<std::size_t>(net.out_dim());
    const auto n = static_cast<std::size_t>(net.in_dim());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(rows[j][m + i] - x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) <= 1e-8);
        }
        CHECK(rows[j][2 * m + n] <= 1e-8);
    }
}

TEST_CASE("gap reports an interval and a bound check")
{
    const auto dir = scratch("gap");
    std::vector<ExpansiveLayer> exp;
    exp.push_back(ExpansiveLayer::zero_pad(1, 2));
    std::vector<FlowBlock> flows;
    flows.emplace_back(2);
    save_checkpoint(InjectiveNetwork(FlowBlock(1), std::move(exp), std::move(flows)), (dir / "net.json").string());
    Mat target = Mat::Zero(2, 30);
    target.row(0) = Vec::LinSpaced(30, -1, 1).transpose();
    target.row(1) = (0.05 + 0.1 * target.row(0).array().square()).matrix();
    geometry::write_csv((dir / "target.csv").string(), target);
    geometry::write_csv((dir / "w.csv").string(), Vec::LinSpaced(200, -1.5, 1.5).transpose());
    REQUIRE(run_cli(dir, "gap --checkpoint net.json --target target.csv --w-samples w.csv --out gap.json --exact")
                .exit_code == 0);
    const auto result = read_json(dir / "gap.json");
    CHECK(result["lower"].get<double>() <= result["upper"].get<double>());
    CHECK(result["upper"].get<double>() <= 0.15 + 1e-12);
    CHECK(result["lower"].get<double>() >= 0.05 - 1e-12);
    CHECK(result.contains("w2_exact"));
    CHECK(result["bound_check"]["passed"] == true);
    REQUIRE(run_cli(dir, "gap --checkpoint net.json --target target.csv --w-samples w.csv --out s.json --sliced")
                .exit_code == 0);
    CHECK(read_json(dir / "s.json").contains("w2_sliced"));
}

TEST_CASE("numeric failures exit with status 1 and a stage")
{
    const auto dir = scratch("numeric");
    std::vector<ExpansiveLayer> exp;
    exp.push_back(ExpansiveLayer::zero_pad(1, 2));
    std::vector<FlowBlock> flows;
    FlowBlock t1(2);
    t1.push_back(std::make_unique<CouplingLayer>(2, 1, false, AffineSubnet::zeros(1, 1),
                                                 std::make_unique<AffineSubnet>(Mat::Constant(1, 1, 1e308), vec({0}))));
    flows.push_back(std::move(t1));
    save_checkpoint(InjectiveNetwork(FlowBlock(1), std::move(exp), std::move(flows)), (dir / "net.json").string());
    geometry::write_csv((dir / "q.csv").string(), Mat(vec({1.0, 1e10})));
    const auto r = run_cli(dir, "project --checkpoint net.json --input q.csv");
    CHECK(r.exit_code == 1);
    const auto record = nlohmann::json::parse(r.err);
    CHECK(record["error"] == "numeric-error");
    CHECK(record["stage"] == 2);
}
