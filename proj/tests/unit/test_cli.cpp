#include "support.hpp"

#include "aircast/cli.hpp"
#include "aircast/io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace aircast;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "synth": {"n_stations": 3, "n_lat": 6, "n_lon": 6, "resolution": 0.25, "days": 14,
            "met_channels": ["T2M", "U10M", "V10M"], "ems_channels": ["NOx", "SO2"]},
  "model": {"d_model": 8, "temb_dim": 4, "mlp_hidden": 12, "resnet_depth": 1, "resnet_width": 4},
  "train": {"epochs": 1, "batch_size": 8},
  "ablation": {"forecast_steps": 2, "block_hours": 48, "holdout_every": 3}
})";

int cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "aircast");
    return run_cli(args);
}

// Runs the real binary; stderr goes to `err`.
int spawn(const std::string& args, const fs::path& err)
{
    const std::string cmd = std::string("\"") + AIRCAST_CLI_PATH + "\" " + args + " 2> \"" + err.string() + "\" > /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_tree(const fs::path& a, const fs::path& b, const std::vector<std::string>& skip)
{
    auto keep = [&](std::vector<std::string> files) {
        std::erase_if(files, [&](const std::string& f) {
            return std::find(skip.begin(), skip.end(), fs::path(f).filename().string()) != skip.end();
        });
        return files;
    };
    const auto fa = keep(test::list_files(a));
    const auto fb = keep(test::list_files(b));
    if (fa != fb || fa.empty()) {
        return false;
    }
    for (const auto& f : fa) {
        if (test::slurp(a / f) != test::slurp(b / f)) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("cli")
{
    test::TempDir dir;
    write_text_file(dir / "cfg.json", kTinyConfig);
    const std::string cfg = (dir / "cfg.json").string();
    REQUIRE(cli({"synth", "--config", cfg, "--seed", "7", "--out", (dir / "d1").string()}) == 0);
    const std::string data = (dir / "d1").string();

    SUBCASE("synth twice is byte-identical")
    {
        REQUIRE(cli({"synth", "--config", cfg, "--seed", "7", "--out", (dir / "d2").string()}) == 0);
        CHECK(same_tree(dir / "d1", dir / "d2", {"run.log"}));
        REQUIRE(cli({"synth", "--config", cfg, "--seed", "8", "--out", (dir / "d3").string()}) == 0);
        CHECK_FALSE(same_tree(dir / "d1", dir / "d3", {"run.log"}));
    }
    SUBCASE("forecast without a checkpoint")
    {
        const int code = spawn("forecast --data " + data + " --checkpoint " + (dir / "none").string() + " --out "
                                   + (dir / "f").string(),
                               dir / "err.txt");
        CHECK(code == 1);
        const std::string err = test::slurp(dir / "err.txt");
        const auto json_start = err.find("{\"error\"");
        REQUIRE(json_start != std::string::npos);
        const auto j = nlohmann::json::parse(err.substr(json_start));
        CHECK(j["error"]["kind"] == "missing_artifact");
        CHECK(j["error"]["message"].get<std::string>().find("none") != std::string::npos);
    }
    SUBCASE("usage errors exit with 2")
    {
        CHECK(spawn("synth --out " + (dir / "x").string() + " --bogus 1", dir / "e1.txt") == 2);
        CHECK(spawn("launch --out " + (dir / "x").string(), dir / "e2.txt") == 2);
        CHECK(spawn("synth", dir / "e3.txt") == 2);
        CHECK(test::slurp(dir / "e1.txt").find("\"usage\"") != std::string::npos);
    }
    SUBCASE("bad config values exit with 1")
    {
        write_text_file(dir / "bad.json", R"({"synth": {"n_lat": 2}})");
        CHECK(spawn("synth --config " + (dir / "bad.json").string() + " --out " + (dir / "x").string(), dir / "e.txt")
              == 1);
        write_text_file(dir / "unknown.json", R"({"colour": "blue"})");
        CHECK(cli({"synth", "--config", (dir / "unknown.json").string(), "--out", (dir / "y").string()}) == 1);
    }
    SUBCASE("flags override the config file, which overrides defaults")
    {
        write_text_file(dir / "p.json", R"({"seed": 3, "stride": 12, "train": {"epochs": 1, "lr": 0.002}})");
        REQUIRE(cli({"train", "--config", (dir / "p.json").string(), "--seed", "5", "--data", data, "--out",
                     (dir / "t").string()})
                == 0);
        const auto rc = nlohmann::json::parse(test::slurp(dir / "t" / "run_config.json"));
        CHECK(rc["seed"] == 5);
        CHECK(rc["stride"] == 12);
        CHECK(rc["train"]["lr"] == 0.002);
        CHECK(rc["train"]["batch_size"] == 16);
        CHECK_FALSE(rc.contains("out"));
        CHECK(fs::exists(dir / "t" / "checkpoint" / "model.json"));
        CHECK(fs::exists(dir / "t" / "train_report.json"));
    }
    SUBCASE("ablate writes one report per requested arm")
    {
        REQUIRE(cli({"ablate", "--config", cfg, "--data", data, "--arms", "ALL,STN_ONLY", "--out", (dir / "a").string()})
                == 0);
        std::vector<std::string> reports;
        for (const auto& f : test::list_files(dir / "a")) {
            if (f.rfind("report_", 0) == 0) {
                reports.push_back(f);
            }
        }
        CHECK(reports == std::vector<std::string>{"report_ALL.json", "report_STN_ONLY.json"});
    }
    SUBCASE("train, forecast, evaluate, plot, then rerun from the embedded config")
    {
        REQUIRE(cli({"train", "--config", cfg, "--data", data, "--out", (dir / "t6").string()}) == 0);
        REQUIRE(cli({"train-interp", "--config", cfg, "--data", data, "--out", (dir / "ti").string()}) == 0);
        REQUIRE(cli({"forecast", "--data", data, "--checkpoint", (dir / "t6" / "checkpoint").string(),
                     "--interp-checkpoint", (dir / "ti" / "checkpoint").string(), "--init-every", "48", "--out",
                     (dir / "f").string()})
                == 0);
        const auto bundles = read_forecast_csv(dir / "f" / "forecast.csv");
        REQUIRE(!bundles.empty());
        CHECK(bundles[0].lead_hours.size() == 72);
        REQUIRE(cli({"evaluate", "--data", data, "--forecast", (dir / "f" / "forecast.csv").string(), "--out",
                     (dir / "e").string()})
                == 0);
        REQUIRE(cli({"plot", "--report", (dir / "e" / "report.json").string(), "--out", (dir / "p").string()}) == 0);
        CHECK(fs::exists(dir / "p" / "RMSE.svg"));

        for (const std::string run : {"t6", "f", "e"}) {
            const fs::path again = dir / (run + "_again");
            REQUIRE(cli({"x", "--config", (dir / run / "run_config.json").string(), "--out", again.string()}) != 0);
            const auto rc = nlohmann::json::parse(test::slurp(dir / run / "run_config.json"));
            REQUIRE(cli({rc["command"].get<std::string>(), "--config", (dir / run / "run_config.json").string(), "--out",
                         again.string()})
                    == 0);
            CHECK(same_tree(dir / run, again, {"run.log", "timing.json"}));
        }
    }
}
