#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

const fs::path kDir = fs::temp_directory_path() / "swingcert_cli_test";

struct Run {
    int code;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run cli(const std::string& args) {
    fs::create_directories(kDir);
    const fs::path err = kDir / "stderr.txt";
    const std::string cmd = std::string(SWINGCERT_CLI) + " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

const std::string kConfig = std::string(SWINGCERT_DATA_DIR) + "/case_study.json";

}  // namespace

TEST_CASE("case-study subcommand writes four artifacts", "[cli]") {
    const fs::path out = kDir / "run1";
    fs::remove_all(out);
    const Run r = cli("case-study --out " + out.string());
    CHECK(r.code == 0);
    for (const char* f : {"trajectory.csv", "certificate.json", "envelope.dat", "report.json"}) {
        CHECK(fs::exists(out / f));
    }
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report["passed"] == true);
}

TEST_CASE("missing config is an input error", "[cli]") {
    CHECK(cli("certify --config missing.json --out " + (kDir / "c.json").string()).code == 2);
}

TEST_CASE("usage errors exit with 2", "[cli]") {
    CHECK(cli("").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("verify --config " + kConfig).code == 2);  // no --out
}

TEST_CASE("verify rejects a schedule outside the DoS budget", "[cli]") {
    const fs::path sched = kDir / "bad_schedule.json";
    fs::create_directories(kDir);
    std::ofstream(sched) << R"({"kappa": 1, "tau": 2, "intervals": [[0, 10]]})";
    const Run r = cli("verify --config " + kConfig + " --dos " + sched.string() + " --out " + (kDir / "v").string());
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("schedule violates DoS budget at t=10"));
}

TEST_CASE("verify with a generated schedule passes", "[cli]") {
    const fs::path out = kDir / "verify";
    const Run r = cli("verify --config " + kConfig + " --dos-generate 2,3,random,7 --t-end 40 --record-every 10 --out " +
                      out.string());
    CHECK(r.code == 0);
    CHECK(fs::exists(out / "report.json"));
}

TEST_CASE("certify writes the certificate report", "[cli]") {
    const fs::path out = kDir / "cert" / "certificate.json";
    const Run r = cli("certify --config " + kConfig + " --kappa 10 --tau 1.5 --out " + out.string());
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    CHECK(j["certificate"]["kappa"] == 10.0);
    CHECK(j["certificate"]["c"].get<double>() > 0.0);
    CHECK(j.contains("reference_comparison"));

    // The published pair is not a certificate under these bounds.
    CHECK(cli("certify --config " + kConfig + " --eps1 0.025 --eps2 0.03 --out " + out.string()).code == 1);
}

TEST_CASE("simulate leaves its inputs untouched", "[cli]") {
    const std::string before = slurp(kConfig);
    const fs::path out = kDir / "sim";
    const Run r = cli("simulate --config " + kConfig + " --dos-generate 10,1.5,greedy,0 --t-end 5 --out " + out.string());
    CHECK(r.code == 0);
    CHECK(slurp(kConfig) == before);
    const std::string csv = slurp(out / "trajectory.csv");
    CHECK(csv.rfind("t,delta_1,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5001 + 1);
}

TEST_CASE("bad thread cap is an input error", "[cli]") {
    const std::string cmd = "SWINGCERT_THREADS=abc " + std::string(SWINGCERT_CLI) + " certify --config " + kConfig +
                            " --out " + (kDir / "t.json").string() + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 2);
}
