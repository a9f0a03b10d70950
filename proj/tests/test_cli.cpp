#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string cli_path() { return TFR_CLI_PATH; }

int run(const std::string& args) {
    std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("version flag and usage errors") {
    CHECK(run("--version") == 0);
    CHECK(run("definitely-not-a-command") != 0);
    // missing required option is an error
    CHECK(run("ingest") != 0);
}

TEST_CASE("synth output is deterministic for a fixed seed") {
    fs::path d = fresh_dir("tfr_cli_synth");
    REQUIRE(run("synth --countries 6 --years 30 --seed 5 --out " + (d / "a.csv").string()) == 0);
    REQUIRE(run("synth --countries 6 --years 30 --seed 5 --out " + (d / "b.csv").string()) == 0);
    REQUIRE(run("synth --countries 6 --years 30 --seed 6 --out " + (d / "c.csv").string()) == 0);
    CHECK(slurp(d / "a.csv") == slurp(d / "b.csv"));
    CHECK(slurp(d / "a.csv") != slurp(d / "c.csv"));
}

TEST_CASE("pipeline smoke run produces the expected artifacts") {
    fs::path d = fresh_dir("tfr_cli_pipe");
    std::string raw = (d / "raw.csv").string();
    std::string panel = (d / "panel.csv").string();
    REQUIRE(run("synth --countries 8 --years 45 --seed 12 --out " + raw) == 0);
    REQUIRE(run("ingest --raw " + raw + " --panel " + panel + " --diagnostics " +
                (d / "diag.csv").string()) == 0);
    CHECK(fs::exists(panel));

    std::ofstream(d / "cfg.txt") << "hidden_dim=8\nn_layers=1\nmax_epochs=3\nbatch_size=16\n"
                                 << "l_enc=12\nl_pred=5\ne_decay=2\nd_emb=2\ncutoff_year=2009\n"
                                 << "validation_origin_years=3\n";
    std::string models = (d / "models").string();
    REQUIRE(run("train --panel " + panel + " --config " + (d / "cfg.txt").string() + " --members 2 --out " +
                models) == 0);
    CHECK(fs::exists(fs::path(models) / "member_00.ckpt"));
    CHECK(fs::exists(fs::path(models) / "manifest.json"));

    std::string evald = (d / "eval").string();
    REQUIRE(run("evaluate --panel " + panel + " --models " + models + " --cutoff 2009 --out " + evald) == 0);
    std::string scores = slurp(fs::path(evald) / "scores.csv");
    CHECK(scores.rfind("country,model,rmse,smape,rmsse,crps,coverage90,mpiw90,mis90\n", 0) == 0);
    CHECK(scores.find("drift") != std::string::npos);
    CHECK(scores.find("neural") != std::string::npos);

    std::string fc = (d / "forecast.csv").string();
    REQUIRE(run("forecast --panel " + panel + " --models " + models + " --end-year 2035 --out " + fc) == 0);
    std::string body = slurp(fc);
    CHECK(body.rfind("country_code,year,model,q05,q10,q50,q90,q95\n", 0) == 0);
    CHECK(body.find("2035") != std::string::npos);
}
