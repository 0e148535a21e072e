#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "mpssm/graph.hpp"

using namespace mpssm;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(MPSSM_CLI_PATH) + " " + args + " > cli_out.txt 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

int count_lines(const std::string& path) {
    std::ifstream f(path);
    int n = 0;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST_CASE("unknown subcommand and bad flags exit with a usage error") {
    CHECK(run("frobnicate") == 1);
    CHECK(run("train") == 1);  // missing required --data
}

TEST_CASE("gen-data writes the requested number of records") {
    CHECK(run("gen-data --task diameter --count 24 --n-lo 8 --n-hi 12 --seed 4 "
              "--out cli_data.jsonl") == 0);
    CHECK(count_lines("cli_data.jsonl") == 24);

    // Determinism: a re-run produces byte-identical output.
    CHECK(run("gen-data --task diameter --count 24 --n-lo 8 --n-hi 12 --seed 4 "
              "--out cli_data2.jsonl") == 0);
    CHECK(slurp("cli_data.jsonl") == slurp("cli_data2.jsonl"));
    std::remove("cli_data2.jsonl");
}

TEST_CASE("train / eval round trip on a tiny run") {
    REQUIRE(run("gen-data --task diameter --count 16 --n-lo 8 --n-hi 10 --seed 6 "
                "--out cli_train.jsonl") == 0);
    std::ofstream cfg("cli_config.json");
    cfg << R"({"train.epochs": 2, "model.hidden": 4, "model.k": 2, "model.blocks": 1})";
    cfg.close();
    CHECK(run("train --data cli_train.jsonl --task diameter --config cli_config.json "
              "--set train.seed=3 --out cli_model.json --history cli_history.jsonl") == 0);
    CHECK(count_lines("cli_history.jsonl") == 2);
    CHECK(run("eval --data cli_train.jsonl --model cli_model.json --split test") == 0);
    const std::string out = slurp("cli_out.txt");
    CHECK(out.find("log10_mse") != std::string::npos);

    // Unknown config keys are usage errors.
    CHECK(run("train --data cli_train.jsonl --set nonsense.key=1 --out x.json") == 1);
    std::remove("cli_train.jsonl");
    std::remove("cli_config.json");
    std::remove("cli_model.json");
    std::remove("cli_history.jsonl");
}

TEST_CASE("jacobian subcommand dumps a CSV matrix") {
    save_graph(gen_path(5), "cli_graph.txt");
    CHECK(run("jacobian --graph cli_graph.txt --delta 2 --c 3 --out cli_sens.csv") == 0);
    CHECK(count_lines("cli_sens.csv") == 5);
    const std::string out = slurp("cli_out.txt");
    CHECK(out.find("s_global") != std::string::npos);
    std::remove("cli_graph.txt");
    std::remove("cli_sens.csv");
}

TEST_CASE("bench subcommand emits CSV rows") {
    CHECK(run("bench --n 16 --c 4 --k 2 --k 8 --reps 1 --out cli_bench.csv") == 0);
    const std::string csv = slurp("cli_bench.csv");
    CHECK(csv.find("k,sequential_ms,fast_ms,max_output_dev") != std::string::npos);
    CHECK(count_lines("cli_bench.csv") == 3);
    std::remove("cli_bench.csv");
    std::remove("cli_data.jsonl");
    std::remove("cli_out.txt");
}
