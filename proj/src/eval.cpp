#include "grammcmc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <ostream>

namespace grammcmc {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> xs) {
    double hi = kNegInf;
    for (double x : xs) hi = std::max(hi, x);
    if (hi == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - hi);
    return hi + std::log(acc);
}

// shortest decimal form that round-trips the exact double
void append_double(std::string& out, double x) {
    char buf[40];
    for (int precision = 1; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    out += buf;
}
}  // namespace

std::optional<std::size_t> ExactTarget::index_of(const Sequence& w) const {
    const auto it = index.find(w.tokens);
    if (it == index.end()) return std::nullopt;
    return it->second;
}

ExactTarget exact_target(const std::shared_ptr<const Grammar>& g, const LanguageModel& m,
                         std::size_t max_tokens, std::size_t support_cap) {
    validate_char_closure(m.vocab(), *g);
    const Vocabulary& v = m.vocab();
    ExactTarget t;
    t.max_tokens = max_tokens;

    // depth-first over token extensions in id order gives the support in
    // lexicographic token order
    struct Walker {
        const Vocabulary& v;
        std::size_t max_tokens, cap;
        ExactTarget& t;
        Sequence prefix;

        void walk(const RecognizerState& s) {
            if (s.complete()) {
                Sequence w = prefix;
                w.terminated = true;
                if (t.support.size() == cap) throw BudgetExceeded(cap, "target support");
                t.index.emplace(w.tokens, t.support.size());
                t.support.push_back(std::move(w));
            }
            if (prefix.tokens.size() == max_tokens) return;
            for (std::uint32_t tok = 0; tok < v.tokens.size(); ++tok) {
                auto next = s.try_advance_all(v.token(tok));
                if (!next) continue;
                prefix.tokens.push_back(tok);
                walk(*next);
                prefix.tokens.pop_back();
            }
        }
    };
    Walker{v, max_tokens, support_cap, t, {}}.walk(recognizer_init(g));

    t.lm_logprobs.reserve(t.support.size());
    for (const Sequence& w : t.support) t.lm_logprobs.push_back(lm_logprob(m, w));

    t.log_normalizer = log_sum_exp(t.lm_logprobs);
    if (t.log_normalizer == kNegInf) throw DegenerateTarget();

    t.probs.resize(t.support.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < t.support.size(); ++i) {
        t.probs[i] = std::exp(t.lm_logprobs[i] - t.log_normalizer);
        sum += t.probs[i];
    }
    for (double& p : t.probs) p /= sum;
    return t;
}

TransitionMatrix exact_transition_matrix(ProposalKind kind, const ExactTarget& target,
                                         const LanguageModel& m,
                                         const std::shared_ptr<const Grammar>& g, bool parallel,
                                         double alpha_scale, std::size_t state_cap) {
    const std::size_t n = target.support.size();
    if (n > state_cap) throw BudgetExceeded(state_cap, "transition matrix support");

    const RecognizerState root = recognizer_init(g);
    std::vector<ScoredSequence> scored;
    scored.reserve(n);
    std::vector<TruncationDist> pos;
    pos.reserve(n);
    for (const Sequence& w : target.support) {
        scored.push_back(ScoredSequence::score(m, root, w));
        pos.push_back(truncation_dist(kind, w, m));
    }

    TransitionMatrix T;
    T.n = n;
    T.p.assign(n * n, 0.0);

    // log q(y|x) for all ordered pairs; rows are independent
    std::vector<double> log_q(n * n, kNegInf);
    std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::int64_t x = 0; x < static_cast<std::int64_t>(n); ++x) {
        try {
            for (std::size_t y = 0; y < n; ++y) {
                log_q[static_cast<std::size_t>(x) * n + y] =
                    proposal_logprob_scored(scored[static_cast<std::size_t>(x)],
                                            pos[static_cast<std::size_t>(x)], scored[y]);
            }
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t x = 0; x < n; ++x) {
        double off_diagonal = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            double alpha =
                accept_prob_scored(scored[x], scored[y], log_q[x * n + y], log_q[y * n + x]);
            // test hook: alpha^scale breaks the acceptance ratio asymmetrically
            if (alpha_scale != 1.0) alpha = std::pow(alpha, alpha_scale);
            const double pxy = std::exp(log_q[x * n + y]) * alpha;
            T.p[x * n + y] = pxy;
            off_diagonal += pxy;
        }
        T.p[x * n + x] = 1.0 - off_diagonal;  // rejected + cap-rejected + self-proposal mass
    }

    T.gcd0.resize(n);
    double gcd_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        T.gcd0[i] = std::exp(scored[i].gcd_logprob());
        gcd_sum += T.gcd0[i];
    }
    if (gcd_sum <= 0.0) throw DegenerateTarget();
    for (double& p : T.gcd0) p /= gcd_sum;
    return T;
}

double tvd(std::span<const double> p, std::span<const double> q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

StationaryReport stationary_check(const TransitionMatrix& T, const ExactTarget& target,
                                  double mono_slack, std::size_t horizon) {
    const std::size_t n = T.n;
    StationaryReport report;

    std::vector<double> pi_T(n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = 0; y < n; ++y) pi_T[y] += target.probs[x] * T.at(x, y);
    }
    double residual = 0.0;
    for (std::size_t y = 0; y < n; ++y) residual += std::abs(pi_T[y] - target.probs[y]);
    report.stationarity_residual = residual;

    std::vector<double> out_k = T.gcd0;
    report.tvd_by_k.reserve(horizon + 1);
    report.tvd_by_k.push_back(tvd(out_k, target.probs));
    std::vector<double> next(n);
    for (std::size_t k = 1; k <= horizon; ++k) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t x = 0; x < n; ++x) {
            const double w = out_k[x];
            if (w == 0.0) continue;
            for (std::size_t y = 0; y < n; ++y) next[y] += w * T.at(x, y);
        }
        out_k.swap(next);
        report.tvd_by_k.push_back(tvd(out_k, target.probs));
    }

    report.monotone = true;
    for (std::size_t k = 0; k + 1 < report.tvd_by_k.size(); ++k) {
        if (report.tvd_by_k[k + 1] > report.tvd_by_k[k] + mono_slack) {
            report.monotone = false;
            break;
        }
    }
    report.final_tvd = report.tvd_by_k.back();
    return report;
}

double max_detailed_balance_violation(const TransitionMatrix& T, const ExactTarget& target) {
    double worst = 0.0;
    for (std::size_t x = 0; x < T.n; ++x) {
        for (std::size_t y = x + 1; y < T.n; ++y) {
            worst = std::max(worst, std::abs(target.probs[x] * T.at(x, y) -
                                             target.probs[y] * T.at(y, x)));
        }
    }
    return worst;
}

namespace {

// Collate a sample multiset into (distinct sequence, count) pairs.
struct Observed {
    std::vector<Sequence> distinct;
    std::vector<double> freq;  // counts / n
};

Observed collate(const std::vector<Sequence>& samples) {
    if (samples.empty()) throw Error("empirical KL of an empty sample set");
    std::map<std::vector<std::uint32_t>, std::size_t> counts;
    for (const Sequence& w : samples) ++counts[w.tokens];
    Observed obs;
    const double n = static_cast<double>(samples.size());
    for (auto& [tokens, count] : counts) {
        Sequence w;
        w.tokens = tokens;
        w.terminated = true;
        obs.distinct.push_back(std::move(w));
        obs.freq.push_back(static_cast<double>(count) / n);
    }
    return obs;
}

double empirical_kl_impl(const Observed& obs, const std::vector<double>& ref_logprobs,
                         bool renormalize, const Vocabulary* v_for_error) {
    for (std::size_t i = 0; i < ref_logprobs.size(); ++i) {
        if (ref_logprobs[i] == kNegInf) {
            const std::string text =
                v_for_error ? sequence_text(*v_for_error, obs.distinct[i]) : std::string("?");
            throw ZeroModelMass(escape_text(text));
        }
    }
    const double log_z = renormalize ? log_sum_exp(ref_logprobs) : 0.0;
    double kl = 0.0;
    for (std::size_t i = 0; i < obs.freq.size(); ++i) {
        kl += obs.freq[i] * (std::log(obs.freq[i]) - (ref_logprobs[i] - log_z));
    }
    return kl;
}

}  // namespace

double empirical_kl_to_lm(const std::vector<Sequence>& samples, const LanguageModel& m) {
    const Observed obs = collate(samples);
    std::vector<double> lp;
    lp.reserve(obs.distinct.size());
    for (const Sequence& w : obs.distinct) lp.push_back(lm_logprob(m, w));
    return empirical_kl_impl(obs, lp, true, &m.vocab());
}

double empirical_kl_to_lm_unnormalized(const std::vector<Sequence>& samples,
                                       const LanguageModel& m) {
    const Observed obs = collate(samples);
    std::vector<double> lp;
    lp.reserve(obs.distinct.size());
    for (const Sequence& w : obs.distinct) lp.push_back(lm_logprob(m, w));
    return empirical_kl_impl(obs, lp, false, &m.vocab());
}

double empirical_kl_to_target(const std::vector<Sequence>& samples, const ExactTarget& target) {
    const Observed obs = collate(samples);
    std::vector<double> lp;
    lp.reserve(obs.distinct.size());
    for (const Sequence& w : obs.distinct) {
        const auto idx = target.index_of(w);
        if (!idx) throw Error("observed sample is outside the enumerated target support");
        lp.push_back(target.probs[*idx] > 0.0 ? std::log(target.probs[*idx]) : kNegInf);
    }
    return empirical_kl_impl(obs, lp, true, nullptr);
}

BootstrapCi bootstrap_mean_ci(std::span<const double> values, std::size_t resamples, double lo_pct,
                              double hi_pct, std::uint64_t seed) {
    const std::size_t n = values.size();
    if (n == 0) throw Error("bootstrap of an empty value set");

    BootstrapCi ci;
    for (double x : values) ci.mean += x;
    ci.mean /= static_cast<double>(n);

    RngStream rng(seed, 0xB007);
    std::vector<double> means;
    means.reserve(resamples);
    for (std::size_t b = 0; b < resamples; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            acc += values[static_cast<std::size_t>(rng.next_u64() % n)];
        means.push_back(acc / static_cast<double>(n));
    }
    std::sort(means.begin(), means.end());

    const auto pick = [&](double pct) {
        const double rank = pct / 100.0 * static_cast<double>(resamples);
        std::size_t idx = rank <= 1.0 ? 0 : static_cast<std::size_t>(std::ceil(rank)) - 1;
        idx = std::min(idx, resamples - 1);
        return means[idx];
    };
    ci.lo = pick(lo_pct);
    ci.hi = pick(hi_pct);
    return ci;
}

std::vector<KlReportRow> kl_convergence_report(
    const std::map<std::uint32_t, std::vector<std::vector<Sequence>>>& runs_by_k,
    const LanguageModel& m, const ExactTarget* target, std::size_t resamples, std::uint64_t seed) {
    std::vector<KlReportRow> rows;
    for (const auto& [k, runs] : runs_by_k) {
        if (runs.size() < 2)
            throw InsufficientRuns("need >= 2 runs at k=" + std::to_string(k) + ", have " +
                                   std::to_string(runs.size()));

        std::vector<double> kl_lm;
        std::vector<double> kl_target;
        for (const auto& run : runs) {
            kl_lm.push_back(empirical_kl_to_lm(run, m));
            if (target) kl_target.push_back(empirical_kl_to_target(run, *target));
        }

        const BootstrapCi lm_ci = bootstrap_mean_ci(kl_lm, resamples, 2.5, 97.5, seed);
        rows.push_back({k, "kl_to_lm", lm_ci.mean, lm_ci.lo, lm_ci.hi, runs.size()});
        if (target) {
            const BootstrapCi t_ci = bootstrap_mean_ci(kl_target, resamples, 2.5, 97.5, seed);
            rows.push_back({k, "kl_to_target", t_ci.mean, t_ci.lo, t_ci.hi, runs.size()});
        }
    }
    return rows;
}

void write_kl_csv(std::ostream& out, std::span<const CsvRow> rows) {
    out << "benchmark,method,kind,k,metric,value,ci_low,ci_high,n_runs\n";
    for (const CsvRow& r : rows) {
        std::string line = r.benchmark + "," + r.method + "," + r.kind + "," +
                           std::to_string(r.row.k) + "," + r.row.metric + ",";
        append_double(line, r.row.mean);
        line += ",";
        append_double(line, r.row.ci_low);
        line += ",";
        append_double(line, r.row.ci_high);
        line += "," + std::to_string(r.row.n_runs);
        out << line << "\n";
    }
}

void write_matrix_text(std::ostream& out, const TransitionMatrix& T, const ExactTarget& target,
                       const Vocabulary& v) {
    for (std::size_t i = 0; i < target.support.size(); ++i) {
        out << "# state " << i << ": \"" << escape_text(sequence_text(v, target.support[i]))
            << "\"\n";
    }
    for (std::size_t x = 0; x < T.n; ++x) {
        std::string line;
        for (std::size_t y = 0; y < T.n; ++y) {
            if (y) line += " ";
            append_double(line, T.at(x, y));
        }
        out << line << "\n";
    }
}

}  // namespace grammcmc
