#include "grammcmc/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "grammcmc/eval.hpp"
#include "grammcmc/trace.hpp"

namespace fs = std::filesystem;

namespace grammcmc {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// ---------------------------------------------------------------------------
// engine assembly

struct LmConfig {
    std::string table_path;
    std::string ngram_path;
    std::size_t ngram_order = 2;
    double ngram_alpha = 0.5;
    bool uniform = false;
    std::string remote_url;
    int remote_timeout_ms = 2000;

    void add_options(CLI::App& cmd) {
        cmd.add_option("--lm-table", table_path, "table model JSON file");
        cmd.add_option("--lm-ngram", ngram_path, "n-gram training corpus (one sequence per line)");
        cmd.add_option("--ngram-order", ngram_order, "n-gram order")->capture_default_str();
        cmd.add_option("--ngram-alpha", ngram_alpha, "add-alpha smoothing")->capture_default_str();
        cmd.add_flag("--lm-uniform", uniform, "uniform model over the grammar characters");
        cmd.add_option("--lm-remote", remote_url, "base URL of a remote model server");
        cmd.add_option("--remote-timeout-ms", remote_timeout_ms, "remote request timeout")
            ->capture_default_str();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        if (!table_path.empty()) {
            j["type"] = "table";
            j["path"] = table_path;
        } else if (!ngram_path.empty()) {
            j["type"] = "ngram";
            j["path"] = ngram_path;
            j["order"] = ngram_order;
            j["alpha"] = ngram_alpha;
        } else if (!remote_url.empty()) {
            j["type"] = "remote";
            j["url"] = remote_url;
            j["timeout_ms"] = remote_timeout_ms;
        } else {
            j["type"] = "uniform";
        }
        return j;
    }

    static LmConfig from_json(const nlohmann::json& j) {
        LmConfig c;
        const std::string type = j.at("type").get<std::string>();
        if (type == "table") {
            c.table_path = j.at("path").get<std::string>();
        } else if (type == "ngram") {
            c.ngram_path = j.at("path").get<std::string>();
            c.ngram_order = j.at("order").get<std::size_t>();
            c.ngram_alpha = j.at("alpha").get<double>();
        } else if (type == "remote") {
            c.remote_url = j.at("url").get<std::string>();
            c.remote_timeout_ms = j.at("timeout_ms").get<int>();
        } else if (type == "uniform") {
            c.uniform = true;
        } else {
            throw ConfigError("unknown model type \"" + type + "\" in run metadata");
        }
        return c;
    }
};

struct Engine {
    std::shared_ptr<const Grammar> grammar;
    std::shared_ptr<const LanguageModel> lm;
    std::string benchmark;  // grammar file stem
};

Engine build_engine(const std::string& grammar_path, const LmConfig& lm) {
    Engine e;
    e.grammar = std::make_shared<const Grammar>(parse_ebnf(read_file(grammar_path)));
    e.benchmark = fs::path(grammar_path).stem().string();

    std::vector<std::string> grammar_chars;
    for (char c : e.grammar->terminals()) grammar_chars.emplace_back(1, c);

    const int sources = (!lm.table_path.empty()) + (!lm.ngram_path.empty()) +
                        (!lm.remote_url.empty()) + (lm.uniform ? 1 : 0);
    if (sources != 1)
        throw ConfigError("pick exactly one of --lm-table, --lm-ngram, --lm-uniform, --lm-remote");

    if (!lm.table_path.empty()) {
        e.lm = std::make_shared<TableLm>(TableLm::from_json_file(lm.table_path, grammar_chars));
    } else if (!lm.ngram_path.empty()) {
        e.lm = std::make_shared<NgramLm>(
            train_ngram(read_lines(lm.ngram_path), lm.ngram_order, lm.ngram_alpha, grammar_chars));
    } else if (!lm.remote_url.empty()) {
        e.lm = std::make_shared<RemoteLm>(make_vocabulary(std::move(grammar_chars)), lm.remote_url,
                                          lm.remote_timeout_ms);
    } else {
        e.lm = std::make_shared<UniformLm>(make_vocabulary(std::move(grammar_chars)));
    }
    validate_char_closure(e.lm->vocab(), *e.grammar);
    return e;
}

// ---------------------------------------------------------------------------
// sample / corpus

struct SampleOptions {
    std::string grammar_path;
    LmConfig lm;
    std::string method = "mcmc-restart";
    std::uint32_t k = 10;
    std::size_t n_samples = 100;
    std::size_t max_tokens = 512;
    std::uint64_t seed = 42;
    std::size_t max_attempts = 1000;
    int threads = 0;
};

void add_sample_options(CLI::App& cmd, SampleOptions& opt) {
    cmd.add_option("--grammar", opt.grammar_path, "grammar file (.ebnf)")->required();
    opt.lm.add_options(cmd);
    cmd.add_option("--method", opt.method,
                   "gcd | rejection | mcmc-uniform | mcmc-priority | mcmc-restart")
        ->capture_default_str();
    cmd.add_option("--k", opt.k, "chain length for mcmc-* methods")->capture_default_str();
    cmd.add_option("--n", opt.n_samples, "number of samples (independent chains)")
        ->capture_default_str();
    cmd.add_option("--max-tokens", opt.max_tokens, "content-token cap per sequence")
        ->capture_default_str()
        ->envname("GRAMMCMC_MAX_TOKENS");
    cmd.add_option("--seed", opt.seed, "base seed; chain i uses seed+i")
        ->capture_default_str()
        ->envname("GRAMMCMC_SEED");
    cmd.add_option("--max-attempts", opt.max_attempts, "rejection sampling attempt cap per chain")
        ->capture_default_str();
    cmd.add_option("--threads", opt.threads, "worker threads (0 = all logical CPUs)")
        ->capture_default_str()
        ->envname("GRAMMCMC_THREADS");
}

std::optional<ProposalKind> method_kind(const std::string& method) {
    if (method.rfind("mcmc-", 0) == 0) {
        return proposal_kind_from_name(method.substr(5));
    }
    return std::nullopt;
}

struct SampleRun {
    std::vector<ChainTrace> traces;      // one per successful chain
    std::vector<std::uint64_t> chain_ids;
    std::size_t failed = 0;              // rejection chains that exhausted their attempts
    std::size_t total_attempts = 0;      // rejection telemetry
};

SampleRun generate(const SampleOptions& opt, const Engine& engine) {
    if (opt.threads > 0) omp_set_num_threads(opt.threads);

    SampleRun run;
    if (opt.method == "rejection") {
        std::vector<std::optional<RejectionResult>> results(opt.n_samples);
        std::vector<std::size_t> attempts(opt.n_samples, opt.max_attempts);
        std::exception_ptr failure = nullptr;
#pragma omp parallel
        {
            // thread-local grammar copy, for the same reason as run_chain_batch
            const auto local_g = std::make_shared<const Grammar>(*engine.grammar);
#pragma omp for schedule(dynamic)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(opt.n_samples); ++i) {
                try {
                    RngStream rng = chain_stream(opt.seed + static_cast<std::uint64_t>(i),
                                                 ChainSubstream::gcd);
                    results[static_cast<std::size_t>(i)] = rejection_sample(
                        *engine.lm, local_g, rng, opt.max_attempts, opt.max_tokens);
                    attempts[static_cast<std::size_t>(i)] =
                        results[static_cast<std::size_t>(i)]->attempts;
                } catch (const Exhausted&) {
                    // chain stays empty; reported as partial output
                } catch (...) {
#pragma omp critical
                    if (!failure) failure = std::current_exception();
                }
            }
        }
        if (failure) std::rethrow_exception(failure);

        for (std::size_t i = 0; i < opt.n_samples; ++i) {
            run.total_attempts += attempts[i];
            if (!results[i]) {
                ++run.failed;
                continue;
            }
            ChainTrace t;
            t.params.rng_seed = opt.seed + i;
            t.params.max_tokens = opt.max_tokens;
            t.states.push_back(std::move(results[i]->seq));
            run.traces.push_back(std::move(t));
            run.chain_ids.push_back(i);
        }
        return run;
    }

    ChainParams params;
    params.max_tokens = opt.max_tokens;
    params.rng_seed = opt.seed;
    if (opt.method == "gcd") {
        params.kind = ProposalKind::restart;
        params.k = 0;
    } else if (auto kind = method_kind(opt.method)) {
        params.kind = *kind;
        params.k = opt.k;
    } else {
        throw ConfigError("unknown method \"" + opt.method + "\"");
    }

    run.traces = run_chain_batch(params, opt.n_samples, *engine.lm, engine.grammar, true);
    run.chain_ids.resize(run.traces.size());
    for (std::size_t i = 0; i < run.chain_ids.size(); ++i) run.chain_ids[i] = i;
    return run;
}

void write_meta(const fs::path& dir, const SampleOptions& opt, const Engine& engine) {
    nlohmann::json meta;
    meta["benchmark"] = engine.benchmark;
    meta["grammar"] = opt.grammar_path;
    meta["lm"] = opt.lm.to_json();
    meta["method"] = opt.method;
    const auto kind = method_kind(opt.method);
    meta["kind"] = kind ? proposal_kind_name(*kind) : "";
    meta["k"] = opt.method == "gcd" || opt.method == "rejection" ? 0 : opt.k;
    meta["n_samples"] = opt.n_samples;
    meta["max_tokens"] = opt.max_tokens;
    meta["seed"] = opt.seed;
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << "\n";
}

int cmd_sample(const SampleOptions& opt, const std::string& out_dir) {
    const Engine engine = build_engine(opt.grammar_path, opt.lm);
    const SampleRun run = generate(opt, engine);
    const Vocabulary& v = engine.lm->vocab();

    fs::create_directories(out_dir);
    write_meta(out_dir, opt, engine);

    std::ofstream samples(fs::path(out_dir) / "samples.txt");
    for (const ChainTrace& t : run.traces)
        samples << escape_text(sequence_text(v, t.final_state())) << "\n";

    std::ofstream traces(fs::path(out_dir) / "traces.jsonl");
    for (std::size_t i = 0; i < run.traces.size(); ++i)
        write_trace_jsonl(traces, v, run.traces[i], run.chain_ids[i]);

    std::uint64_t cap_rejected = 0, accepted = 0, steps = 0;
    GcdTelemetry gcd;
    for (const ChainTrace& t : run.traces) {
        cap_rejected += t.cap_rejected;
        accepted += t.accepted_count;
        steps += t.params.k;
        gcd.steps += t.gcd.steps;
        gcd.tokens_considered += t.gcd.tokens_considered;
        gcd.tokens_masked_out += t.gcd.tokens_masked_out;
    }
    std::cout << "wrote " << run.traces.size() << " samples to " << out_dir << "\n";
    if (gcd.tokens_considered > 0)
        std::cout << "decoding steps " << gcd.steps << ", masked-out tokens "
                  << gcd.tokens_masked_out << " of " << gcd.tokens_considered << " considered ("
                  << static_cast<double>(gcd.tokens_masked_out) / gcd.tokens_considered * 100.0
                  << "%)\n";
    if (steps > 0)
        std::cout << "acceptance rate " << (steps ? static_cast<double>(accepted) / steps : 0.0)
                  << ", cap-rejected proposals " << cap_rejected << "\n";
    if (opt.method == "rejection")
        std::cout << "rejection acceptance rate "
                  << static_cast<double>(run.traces.size()) / run.total_attempts << " over "
                  << run.total_attempts << " attempts\n";

    if (run.failed > 0) {
        std::cerr << run.failed << " of " << opt.n_samples
                  << " chains exhausted their attempts; output is partial\n";
        return 2;
    }
    return 0;
}

int cmd_corpus(const SampleOptions& opt, const std::string& out_dir, const std::string& ext) {
    const Engine engine = build_engine(opt.grammar_path, opt.lm);
    const SampleRun run = generate(opt, engine);
    const Vocabulary& v = engine.lm->vocab();

    fs::create_directories(out_dir);
    if (opt.n_samples == 0)
        std::cerr << "warning: n=0 requested; the seed directory is empty\n";

    std::set<std::string> seen;
    std::size_t kept = 0, dropped = 0;
    for (const ChainTrace& t : run.traces) {
        std::string raw = sequence_text(v, t.final_state());
        if (!seen.insert(raw).second) {
            ++dropped;
            continue;
        }
        ++kept;
        char name[32];
        std::snprintf(name, sizeof name, "seed-%04zu", kept);
        std::ofstream out(fs::path(out_dir) / (std::string(name) + "." + ext), std::ios::binary);
        out << raw;
    }
    std::cout << "kept " << kept << " unique seeds, dropped " << dropped << " duplicates\n";
    if (run.failed > 0) {
        std::cerr << run.failed << " chains produced no sample; output is partial\n";
        return 2;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// oracle

struct OracleOptions {
    std::string grammar_path;
    LmConfig lm;
    std::size_t max_tokens = 8;
    std::vector<std::string> kinds = {"uniform", "priority", "restart"};
    std::size_t horizon = 200;
    double stat_tol = 1e-10;
    double mono_slack = 1e-12;
    double final_tvd_tol = 1e-6;
    double balance_tol = 1e-10;
    std::size_t support_cap = 100000;
    std::size_t state_cap = 2000;
    double corrupt_alpha = 1.0;
    std::string dump_language;
    std::size_t enum_chars = 16;
    std::string dump_matrix_prefix;
};

int cmd_oracle(const OracleOptions& opt) {
    const Engine engine = build_engine(opt.grammar_path, opt.lm);

    if (!opt.dump_language.empty()) {
        std::ofstream out(opt.dump_language);
        for (const std::string& w : enumerate_language(*engine.grammar, opt.enum_chars))
            out << escape_text(w) << "\n";
    }

    const ExactTarget target =
        exact_target(engine.grammar, *engine.lm, opt.max_tokens, opt.support_cap);
    std::cout << "target: " << target.support.size() << " sequences, log C = "
              << target.log_normalizer << "\n";

    bool all_pass = true;
    const auto report = [&](bool ok, const std::string& what) {
        all_pass = all_pass && ok;
        std::cout << (ok ? "PASS " : "FAIL ") << what << "\n";
    };

    for (const std::string& kind_name : opt.kinds) {
        const auto kind = proposal_kind_from_name(kind_name);
        if (!kind) throw ConfigError("unknown proposal kind \"" + kind_name + "\"");

        const TransitionMatrix T = exact_transition_matrix(
            *kind, target, *engine.lm, engine.grammar, true, opt.corrupt_alpha, opt.state_cap);
        const StationaryReport rep = stationary_check(T, target, opt.mono_slack, opt.horizon);
        const double balance = max_detailed_balance_violation(T, target);

        std::ostringstream l1;
        l1 << "stationarity kind=" << kind_name << " residual=" << rep.stationarity_residual
           << " (tol " << opt.stat_tol << ")";
        report(rep.stationary_ok(opt.stat_tol), l1.str());

        std::ostringstream l2;
        l2 << "monotone-tvd kind=" << kind_name << " (horizon " << opt.horizon << ", slack "
           << opt.mono_slack << ")";
        report(rep.monotone, l2.str());

        std::ostringstream l3;
        l3 << "final-tvd kind=" << kind_name << " tvd=" << rep.final_tvd << " (tol "
           << opt.final_tvd_tol << ")";
        report(rep.final_tvd <= opt.final_tvd_tol, l3.str());

        std::ostringstream l4;
        l4 << "detailed-balance kind=" << kind_name << " max=" << balance << " (tol "
           << opt.balance_tol << ")";
        report(balance <= opt.balance_tol, l4.str());

        if (!opt.dump_matrix_prefix.empty()) {
            std::ofstream out(opt.dump_matrix_prefix + "-" + kind_name + ".txt");
            write_matrix_text(out, T, target, engine.lm->vocab());
        }
    }
    return all_pass ? 0 : 3;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::vector<std::string> run_dirs;
    std::string out_csv;
    bool with_target = false;
    std::size_t resamples = 1000;
    std::uint64_t seed = 42;
};

struct RunData {
    std::string benchmark, method, kind, grammar;
    nlohmann::json lm;
    std::uint32_t k = 0;
    std::size_t max_tokens = 0;
    std::vector<Sequence> finals;
};

int cmd_eval(const EvalOptions& opt) {
    // engines keyed by (grammar, lm spec) so runs over the same fixture share one
    std::map<std::string, Engine> engines;
    const auto engine_for = [&](const RunData& run) -> Engine& {
        const std::string key = run.grammar + "\x1f" + run.lm.dump();
        auto it = engines.find(key);
        if (it == engines.end())
            it = engines.emplace(key, build_engine(run.grammar, LmConfig::from_json(run.lm))).first;
        return it->second;
    };

    std::vector<RunData> runs;
    for (const std::string& dir : opt.run_dirs) {
        RunData run;
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(read_file((fs::path(dir) / "meta.json").string()));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(dir + "/meta.json is not valid JSON: " + e.what());
        }
        run.benchmark = meta.at("benchmark").get<std::string>();
        run.method = meta.at("method").get<std::string>();
        run.kind = meta.at("kind").get<std::string>();
        run.grammar = meta.at("grammar").get<std::string>();
        run.lm = meta.at("lm");
        run.k = meta.at("k").get<std::uint32_t>();
        run.max_tokens = meta.at("max_tokens").get<std::size_t>();

        std::ifstream traces(fs::path(dir) / "traces.jsonl");
        if (!traces) throw ConfigError("missing traces.jsonl in " + dir);
        run.finals = read_final_states_jsonl(traces, engine_for(run).lm->vocab());
        if (run.finals.empty()) throw InsufficientRuns("no chains recorded in " + dir);
        runs.push_back(std::move(run));
    }
    if (runs.empty()) throw InsufficientRuns("no run directories given");

    // group runs by (benchmark, method, kind), then by k
    std::map<std::string, std::map<std::uint32_t, std::vector<std::vector<Sequence>>>> groups;
    std::map<std::string, const RunData*> group_info;
    for (const RunData& run : runs) {
        const std::string key = run.benchmark + "\x1f" + run.method + "\x1f" + run.kind;
        groups[key][run.k].push_back(run.finals);
        group_info.emplace(key, &run);
    }

    std::vector<CsvRow> csv;
    std::map<std::string, double> gcd_baseline;               // benchmark -> mean kl
    std::map<std::string, std::vector<double>> ratio_pool;    // method/kind/k -> per-benchmark ratios

    for (const auto& [key, by_k] : groups) {
        const RunData& info = *group_info.at(key);
        std::optional<ExactTarget> target;
        if (opt.with_target) {
            const Engine& e = engine_for(info);
            target = exact_target(e.grammar, *e.lm, info.max_tokens);
        }
        const auto rows = kl_convergence_report(by_k, *engine_for(info).lm,
                                                target ? &*target : nullptr, opt.resamples, opt.seed);
        for (const KlReportRow& row : rows) {
            csv.push_back({info.benchmark, info.method, info.kind, row});
            if (info.method == "gcd" && row.metric == "kl_to_lm")
                gcd_baseline[info.benchmark] = row.mean;
        }
    }

    // reduction vs the GCD baseline, per benchmark plus a geometric mean across
    // benchmarks (reported as a convention; see README)
    std::vector<CsvRow> ratio_rows;
    for (const CsvRow& row : csv) {
        if (row.row.metric != "kl_to_lm" || row.method == "gcd") continue;
        const auto base = gcd_baseline.find(row.benchmark);
        if (base == gcd_baseline.end() || row.row.mean <= 0.0) continue;
        const double ratio = base->second / row.row.mean;
        KlReportRow r{row.row.k, "kl_reduction_vs_gcd", ratio, ratio, ratio, row.row.n_runs};
        ratio_rows.push_back({row.benchmark, row.method, row.kind, r});
        ratio_pool[row.method + "\x1f" + row.kind + "\x1f" + std::to_string(row.row.k)].push_back(
            ratio);
    }
    for (const auto& [key, ratios] : ratio_pool) {
        std::istringstream parts(key);
        std::string method, kind, k_str;
        std::getline(parts, method, '\x1f');
        std::getline(parts, kind, '\x1f');
        std::getline(parts, k_str, '\x1f');
        double log_acc = 0.0;
        for (double r : ratios) log_acc += std::log(r);
        const double geomean = std::exp(log_acc / static_cast<double>(ratios.size()));
        KlReportRow r{static_cast<std::uint32_t>(std::stoul(k_str)), "kl_reduction_vs_gcd", geomean,
                      geomean, geomean, ratios.size()};
        ratio_rows.push_back({"geomean", method, kind, r});
    }
    csv.insert(csv.end(), ratio_rows.begin(), ratio_rows.end());

    if (opt.out_csv.empty()) {
        write_kl_csv(std::cout, csv);
    } else {
        std::ofstream out(opt.out_csv);
        write_kl_csv(out, csv);
        std::cout << "wrote " << csv.size() << " rows to " << opt.out_csv << "\n";
    }

    // decreasing-trend note per group, on the kl_to_lm metric
    for (const auto& [key, by_k] : groups) {
        const RunData& info = *group_info.at(key);
        std::vector<std::pair<std::uint32_t, double>> means;
        for (const CsvRow& row : csv) {
            if (row.benchmark == info.benchmark && row.method == info.method &&
                row.kind == info.kind && row.row.metric == "kl_to_lm")
                means.emplace_back(row.row.k, row.row.mean);
        }
        std::sort(means.begin(), means.end());
        bool decreasing = means.size() >= 2;
        for (std::size_t i = 0; i + 1 < means.size(); ++i)
            decreasing = decreasing && means[i + 1].second < means[i].second;
        std::cout << "trend " << info.benchmark << "/" << info.method
                  << (info.kind.empty() ? "" : "/" + info.kind)
                  << ": " << (means.size() < 2 ? "n/a" : decreasing ? "decreasing" : "not monotone")
                  << "\n";
    }
    return 0;
}

// Flat key=value config support. CLI11's own config machinery only runs on
// the top-level app, so the file is expanded into arguments injected right
// after the subcommand name; explicit flags come later and win via the
// take-last policy.
std::vector<std::string> expand_config_args(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);

    std::size_t at = args.size();
    std::string path;
    std::size_t span = 0;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ConfigError("--config needs a file path");
            at = i;
            path = args[i + 1];
            span = 2;
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            at = i;
            path = args[i].substr(9);
            span = 1;
            break;
        }
    }
    if (at == args.size()) return args;
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(at),
               args.begin() + static_cast<std::ptrdiff_t>(at + span));
    if (args.empty()) throw ConfigError("--config requires a subcommand");

    const auto trim = [](std::string s) {
        const auto from = s.find_first_not_of(" \t\r");
        const auto to = s.find_last_not_of(" \t\r");
        return from == std::string::npos ? std::string() : s.substr(from, to - from + 1);
    };

    std::vector<std::string> injected;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
        injected.push_back("--" + key + "=" + value);
    }
    args.insert(args.begin() + 1, injected.begin(), injected.end());
    return args;
}

// later occurrences (explicit flags) override config-injected values
void take_last_options(CLI::App& cmd) {
    for (CLI::Option* opt : cmd.get_options())
        opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"grammar-aligned sampling engine"};
    app.require_subcommand(1);

    SampleOptions sample_opt;
    std::string sample_out = "run";
    CLI::App* sample = app.add_subcommand("sample", "draw sequences and write samples + traces");
    add_sample_options(*sample, sample_opt);
    sample->add_option("--out", sample_out, "output directory")->capture_default_str();
    sample->add_option("--config", "flat key=value file; command-line flags win")
        ->type_name("FILE");

    OracleOptions oracle_opt;
    CLI::App* oracle = app.add_subcommand("oracle", "exact verification of the chain kernel");
    oracle->add_option("--config", "flat key=value file; command-line flags win")
        ->type_name("FILE");
    oracle->add_option("--grammar", oracle_opt.grammar_path, "grammar file (.ebnf)")->required();
    oracle_opt.lm.add_options(*oracle);
    oracle->add_option("--max-tokens", oracle_opt.max_tokens, "content-token bound of the state space")
        ->capture_default_str();
    oracle->add_option("--kinds", oracle_opt.kinds, "proposal kinds to verify")->capture_default_str();
    oracle->add_option("--horizon", oracle_opt.horizon, "power-iteration length")->capture_default_str();
    oracle->add_option("--stat-tol", oracle_opt.stat_tol, "stationarity L1 tolerance")
        ->capture_default_str();
    oracle->add_option("--mono-slack", oracle_opt.mono_slack, "monotone TVD slack")
        ->capture_default_str();
    oracle->add_option("--final-tvd-tol", oracle_opt.final_tvd_tol, "TVD tolerance at the horizon")
        ->capture_default_str();
    oracle->add_option("--balance-tol", oracle_opt.balance_tol, "detailed balance tolerance")
        ->capture_default_str();
    oracle->add_option("--support-cap", oracle_opt.support_cap, "enumeration budget")
        ->capture_default_str();
    oracle->add_option("--state-cap", oracle_opt.state_cap, "transition matrix state budget")
        ->capture_default_str();
    oracle->add_option("--corrupt-alpha", oracle_opt.corrupt_alpha,
                       "test hook: exponent applied to acceptance probabilities")
        ->group("");  // hidden
    oracle->add_option("--dump-language", oracle_opt.dump_language,
                       "write the bounded language, one escaped string per line");
    oracle->add_option("--enum-chars", oracle_opt.enum_chars, "character bound for --dump-language")
        ->capture_default_str();
    oracle->add_option("--dump-matrix", oracle_opt.dump_matrix_prefix,
                       "write per-kind transition matrices to <prefix>-<kind>.txt");

    EvalOptions eval_opt;
    CLI::App* eval = app.add_subcommand("eval", "KL report over recorded runs");
    eval->add_option("--runs", eval_opt.run_dirs, "run directories (each from one sample invocation)")
        ->required()
        ->expected(-1);
    eval->add_option("--out", eval_opt.out_csv, "CSV output path (default: stdout)");
    eval->add_flag("--with-target", eval_opt.with_target, "also report KL to the exact target");
    eval->add_option("--resamples", eval_opt.resamples, "bootstrap resamples")->capture_default_str();
    eval->add_option("--seed", eval_opt.seed, "bootstrap seed")
        ->capture_default_str()
        ->envname("GRAMMCMC_SEED");

    SampleOptions corpus_opt;
    std::string corpus_out = "seeds";
    std::string corpus_ext = "txt";
    CLI::App* corpus = app.add_subcommand("corpus", "emit deduplicated fuzzing seed files");
    add_sample_options(*corpus, corpus_opt);
    corpus->add_option("--config", "flat key=value file; command-line flags win")
        ->type_name("FILE");
    corpus->add_option("--out-dir", corpus_out, "seed directory")->capture_default_str();
    corpus->add_option("--ext", corpus_ext, "seed file extension")->capture_default_str();

    for (CLI::App* cmd : {sample, oracle, eval, corpus}) take_last_options(*cmd);

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());  // CLI11's vector overload pops from the back
        app.parse(std::move(args));
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sample->parsed()) return cmd_sample(sample_opt, sample_out);
        if (oracle->parsed()) return cmd_oracle(oracle_opt);
        if (eval->parsed()) return cmd_eval(eval_opt);
        if (corpus->parsed()) return cmd_corpus(corpus_opt, corpus_out, corpus_ext);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const BudgetExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Exhausted& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InsufficientRuns& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const LengthExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TimeoutError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace grammcmc
