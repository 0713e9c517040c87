// Timing comparison of the OpenMP kernels against their serial references:
// batch chain execution and transition-matrix construction.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <omp.h>

#include "grammcmc/eval.hpp"

using namespace grammcmc;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

template <typename F>
double time_run(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    const std::string fixtures = GRAMMCMC_FIXTURES_DIR;
    std::size_t n_chains = argc > 1 ? std::stoul(argv[1]) : 20000;

    auto g = std::make_shared<const Grammar>(parse_ebnf(read_file(fixtures + "/gexpr.ebnf")));
    std::vector<std::string> chars;
    for (char c : g->terminals()) chars.emplace_back(1, c);

    std::istringstream corpus_in(read_file(fixtures + "/corpus_gexpr.txt"));
    std::vector<std::string> corpus;
    std::string line;
    while (std::getline(corpus_in, line)) corpus.push_back(line);
    const NgramLm m = train_ngram(corpus, 2, 0.5, chars);

    std::printf("threads available: %d\n", omp_get_max_threads());

    ChainParams params;
    params.kind = ProposalKind::priority;
    params.k = 10;
    params.max_tokens = 8;
    params.rng_seed = 42;

    std::vector<ChainTrace> serial_traces, parallel_traces;
    const double t_serial =
        time_run([&] { serial_traces = run_chain_batch_serial(params, n_chains, m, g); });
    const double t_parallel =
        time_run([&] { parallel_traces = run_chain_batch(params, n_chains, m, g); });

    bool identical = serial_traces.size() == parallel_traces.size();
    for (std::size_t i = 0; identical && i < serial_traces.size(); ++i)
        identical = serial_traces[i].final_state() == parallel_traces[i].final_state();

    std::printf("chain batch (%zu chains, k=%u):\n", n_chains, params.k);
    std::printf("  serial    %8.3f s\n", t_serial);
    std::printf("  parallel  %8.3f s   speedup %.2fx   results %s\n", t_parallel,
                t_serial / t_parallel, identical ? "identical" : "DIFFER");

    const ExactTarget target = exact_target(g, m, 10);
    TransitionMatrix ser, par;
    const double m_serial = time_run(
        [&] { ser = exact_transition_matrix(ProposalKind::priority, target, m, g, false); });
    const double m_parallel = time_run(
        [&] { par = exact_transition_matrix(ProposalKind::priority, target, m, g, true); });

    std::printf("transition matrix (%zu states):\n", target.support.size());
    std::printf("  serial    %8.3f s\n", m_serial);
    std::printf("  parallel  %8.3f s   speedup %.2fx   results %s\n", m_parallel,
                m_serial / m_parallel, ser.p == par.p ? "identical" : "DIFFER");
    return 0;
}
