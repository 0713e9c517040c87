#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"

using namespace testutil;
namespace fs = std::filesystem;

namespace {

const std::string kCli = GRAMMCMC_CLI_PATH;

int run(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = kCli + " " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::path("cli-scratch") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string unescape(const std::string& text) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\\' || i + 1 == text.size()) {
            out.push_back(text[i]);
            continue;
        }
        switch (text[++i]) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case '\\': out.push_back('\\'); break;
            case '"': out.push_back('"'); break;
            default: out.push_back(text[i]);
        }
    }
    return out;
}

bool reparses(const std::shared_ptr<const Grammar>& g, const std::string& raw) {
    const auto state = recognizer_init(g).try_advance_all(raw);
    return state && state->complete();
}

std::string g1_args() {
    return "--grammar " + fixture_path("g1.ebnf") + " --lm-table " + fixture_path("m1_g1.json");
}

std::string xml_args() {
    return "--grammar " + fixture_path("xmlish.ebnf") + " --lm-uniform";
}

}  // namespace

TEST_CASE("sample writes valid, deterministic output") {
    const fs::path dir = fresh_dir("sample");
    const std::string out1 = (dir / "a").string(), out2 = (dir / "b").string();
    const std::string args =
        "sample " + xml_args() + " --method gcd --n 40 --seed 42 --max-tokens 256 --out ";

    REQUIRE(run(args + out1) == 0);
    REQUIRE(run(args + out2) == 0);

    auto g = load_grammar("xmlish.ebnf");
    const auto lines = read_lines(out1 + "/samples.txt");
    REQUIRE(lines.size() == 40);
    for (const std::string& line : lines) CHECK(reparses(g, unescape(line)));

    CHECK(read_file(out1 + "/samples.txt") == read_file(out2 + "/samples.txt"));
    CHECK(read_file(out1 + "/traces.jsonl") == read_file(out2 + "/traces.jsonl"));
    CHECK(!read_file(out1 + "/meta.json").empty());
}

TEST_CASE("mcmc sample traces feed the eval report") {
    const fs::path dir = fresh_dir("eval");
    std::vector<std::string> run_dirs;
    for (int k : {1, 5}) {
        for (int r = 0; r < 2; ++r) {
            const std::string out = (dir / ("run-k" + std::to_string(k) + "-" + std::to_string(r)))
                                        .string();
            REQUIRE(run("sample " + g1_args() + " --method mcmc-restart --k " + std::to_string(k) +
                        " --n 60 --max-tokens 8 --seed " + std::to_string(100 + 60 * r) +
                        " --out " + out) == 0);
            run_dirs.push_back(out);
        }
    }
    // a gcd baseline enables the reduction-ratio rows
    for (int r = 0; r < 2; ++r) {
        const std::string out = (dir / ("gcd-" + std::to_string(r))).string();
        REQUIRE(run("sample " + g1_args() + " --method gcd --n 60 --max-tokens 8 --seed " +
                    std::to_string(900 + 60 * r) + " --out " + out) == 0);
        run_dirs.push_back(out);
    }

    std::string all;
    for (const auto& d : run_dirs) all += " " + d;
    const std::string csv = (dir / "report.csv").string();
    REQUIRE(run("eval --with-target --runs" + all + " --out " + csv, (dir / "log").string()) == 0);

    const auto lines = read_lines(csv);
    REQUIRE(lines.size() > 1);
    CHECK(lines[0] == "benchmark,method,kind,k,metric,value,ci_low,ci_high,n_runs");
    bool has_lm = false, has_target = false, has_ratio = false;
    for (const auto& line : lines) {
        if (line.find(",kl_to_lm,") != std::string::npos) has_lm = true;
        if (line.find(",kl_to_target,") != std::string::npos) has_target = true;
        if (line.find(",kl_reduction_vs_gcd,") != std::string::npos) has_ratio = true;
    }
    CHECK(has_lm);
    CHECK(has_target);
    CHECK(has_ratio);

    // a single run per k is insufficient
    REQUIRE(run("eval --runs " + run_dirs[0]) == 2);
}

TEST_CASE("rejection method flags partial output") {
    const fs::path dir = fresh_dir("rejection");
    const std::string out = (dir / "run").string();
    // acceptance is ~5.3% per attempt; 3 attempts per chain leaves most chains empty
    const int code = run("sample " + g1_args() +
                         " --method rejection --max-attempts 3 --n 30 --seed 42 --out " + out);
    CHECK(code == 2);
    CHECK(read_lines(out + "/samples.txt").size() < 30);

    auto g = load_grammar("g1.ebnf");
    for (const std::string& line : read_lines(out + "/samples.txt"))
        CHECK(reparses(g, unescape(line)));
}

TEST_CASE("oracle verdicts and negative control") {
    const fs::path dir = fresh_dir("oracle");
    const std::string log = (dir / "log.txt").string();
    REQUIRE(run("oracle " + g1_args() + " --max-tokens 4", log) == 0);
    const std::string text = read_file(log);
    CHECK(text.find("PASS stationarity kind=uniform") != std::string::npos);
    CHECK(text.find("PASS stationarity kind=priority") != std::string::npos);
    CHECK(text.find("PASS stationarity kind=restart") != std::string::npos);
    CHECK(text.find("PASS detailed-balance kind=restart") != std::string::npos);
    CHECK(text.find("FAIL") == std::string::npos);

    // deliberately corrupted acceptance probabilities must be detected
    const std::string bad_log = (dir / "bad.txt").string();
    CHECK(run("oracle " + g1_args() + " --max-tokens 4 --corrupt-alpha 0.9", bad_log) == 3);
    CHECK(read_file(bad_log).find("FAIL stationarity") != std::string::npos);

    // dumps
    const std::string lang = (dir / "lang.txt").string();
    REQUIRE(run("oracle " + g1_args() + " --max-tokens 4 --dump-language " + lang +
                " --dump-matrix " + (dir / "mat").string(),
                log) == 0);
    auto lang_lines = read_lines(lang);
    CHECK(lang_lines == std::vector<std::string>{"00", "11"});
    CHECK(fs::exists(dir / "mat-restart.txt"));
}

TEST_CASE("corpus emits deduplicated re-parsing seeds deterministically") {
    const fs::path dir = fresh_dir("corpus");
    const std::string out1 = (dir / "s1").string(), out2 = (dir / "s2").string();
    const std::string args = "corpus " + xml_args() +
                             " --method gcd --n 30 --seed 42 --max-tokens 256 --ext xml ";
    REQUIRE(run(args + "--out-dir " + out1) == 0);
    REQUIRE(run(args + "--out-dir " + out2) == 0);

    auto g = load_grammar("xmlish.ebnf");
    std::size_t count = 0;
    for (const auto& entry : fs::directory_iterator(out1)) {
        ++count;
        CHECK(entry.path().extension() == ".xml");
        CHECK(reparses(g, read_file(entry.path().string())));
        CHECK(read_file(entry.path().string()) ==
              read_file((fs::path(out2) / entry.path().filename()).string()));
    }
    CHECK(count == 30);  // hex ids make collisions vanishingly rare
    CHECK(fs::exists(out1 + "/seed-0001.xml"));

    // n=0 leaves an empty directory and succeeds with a warning
    const std::string empty = (dir / "empty").string();
    REQUIRE(run("corpus " + xml_args() + " --method gcd --n 0 --out-dir " + empty) == 0);
    CHECK(fs::is_empty(empty));
}

TEST_CASE("duplicate-heavy corpus drops repeats") {
    const fs::path dir = fresh_dir("dups");
    const std::string out = (dir / "seeds").string();
    const std::string log = (dir / "log").string();
    // G1 has two words, so 20 samples collapse to at most 2 seeds
    REQUIRE(run("corpus " + g1_args() + " --method gcd --n 20 --seed 42 --out-dir " + out, log) ==
            0);
    std::size_t count = 0;
    for (const auto& entry : fs::directory_iterator(out)) {
        (void)entry;
        ++count;
    }
    CHECK(count == 2);
    CHECK(read_file(log).find("dropped 18 duplicates") != std::string::npos);
}

TEST_CASE("config errors exit with status 1") {
    CHECK(run("sample --grammar /nonexistent.ebnf --lm-uniform") == 1);
    CHECK(run("sample " + g1_args() + " --method warp-drive") == 1);
    CHECK(run("sample --grammar " + fixture_path("g1.ebnf") + " --lm-table " +
              fixture_path("m1_g1.json") + " --lm-uniform") == 1);
    CHECK(run("bogus-subcommand") == 1);
    CHECK(run("--help") == 0);
}

TEST_CASE("flat config files apply, flags win") {
    const fs::path dir = fresh_dir("config");
    const std::string cfg = (dir / "run.cfg").string();
    {
        std::ofstream out(cfg);
        out << "n=7\nseed=11\nmethod=gcd\n";
    }
    const std::string out1 = (dir / "fromcfg").string();
    REQUIRE(run("sample " + g1_args() + " --config " + cfg + " --out " + out1) == 0);
    CHECK(read_lines(out1 + "/samples.txt").size() == 7);

    // the command line overrides the file
    const std::string out2 = (dir / "override").string();
    REQUIRE(run("sample " + g1_args() + " --config " + cfg + " --n 3 --out " + out2) == 0);
    CHECK(read_lines(out2 + "/samples.txt").size() == 3);
}

TEST_CASE("environment variables override defaults") {
    const fs::path dir = fresh_dir("env");
    const std::string out1 = (dir / "a").string(), out2 = (dir / "b").string();
    const std::string base = "sample " + g1_args() + " --method gcd --n 5 --out ";
    const std::string cmd1 = "GRAMMCMC_SEED=7 " + kCli + " " + base + out1 + " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd1.c_str())) == 0);
    REQUIRE(run(base + out2 + " --seed 7") == 0);
    CHECK(read_file(out1 + "/samples.txt") == read_file(out2 + "/samples.txt"));
}
