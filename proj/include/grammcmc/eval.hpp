#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>

#include "grammcmc/mcmc.hpp"

namespace grammcmc {

/// The exact constrained target over the length-bounded language: every
/// terminated token sequence of at most max_tokens content tokens whose text
/// is in L(G), with P^G(w) = P(w) / C.
struct ExactTarget {
    std::size_t max_tokens = 0;
    std::vector<Sequence> support;    // lexicographic in token ids
    std::vector<double> probs;        // sums to 1
    std::vector<double> lm_logprobs;  // raw log P(w)
    double log_normalizer = 0.0;      // log C

    std::optional<std::size_t> index_of(const Sequence& w) const;

    // populated by exact_target
    std::map<std::vector<std::uint32_t>, std::size_t> index;
};

/// Enumerate the bounded support by walking the recognizer over token
/// extensions. Throws BudgetExceeded past support_cap sequences and
/// DegenerateTarget when the model puts zero mass on the whole support.
ExactTarget exact_target(const std::shared_ptr<const Grammar>& g, const LanguageModel& m,
                         std::size_t max_tokens, std::size_t support_cap = 100000);

/// Row-stochastic chain kernel over an ExactTarget's support. Off-diagonal
/// entries are q(y|x) * alpha(x, y); the diagonal absorbs rejected mass,
/// including proposals auto-rejected by the length cap.
struct TransitionMatrix {
    std::size_t n = 0;
    std::vector<double> p;     // row-major n*n
    std::vector<double> gcd0;  // GCD initial distribution over the same support

    double at(std::size_t x, std::size_t y) const { return p[x * n + y]; }
};

/// Exact kernel entries for one proposal kind, built from proposal densities
/// and acceptance probabilities over all ordered pairs. Rows are independent
/// and are filled in parallel unless `parallel` is false (serial reference).
/// `alpha_scale` is a test hook that deliberately corrupts the acceptance
/// probabilities (each alpha is raised to that power, which skews the
/// acceptance ratio); 1.0 is the true kernel.
TransitionMatrix exact_transition_matrix(ProposalKind kind, const ExactTarget& target,
                                         const LanguageModel& m,
                                         const std::shared_ptr<const Grammar>& g,
                                         bool parallel = true, double alpha_scale = 1.0,
                                         std::size_t state_cap = 2000);

/// Half L1 distance between two distributions on a common support.
double tvd(std::span<const double> p, std::span<const double> q);

struct StationaryReport {
    double stationarity_residual = 0.0;  // || pi T - pi ||_1
    std::vector<double> tvd_by_k;        // TVD(out_k, pi) from out_0 = gcd0
    bool monotone = false;
    double final_tvd = 0.0;

    bool stationary_ok(double tol) const { return stationarity_residual <= tol; }
};

/// Verifies pi T = pi and power-iterates from the GCD initial distribution,
/// reporting TVD(out_k, pi) for k = 0..horizon with a monotonicity flag.
StationaryReport stationary_check(const TransitionMatrix& T, const ExactTarget& target,
                                  double mono_slack = 1e-12, std::size_t horizon = 200);

/// max over ordered pairs x != y of |pi(x) p(y|x) - pi(y) p(x|y)|.
double max_detailed_balance_violation(const TransitionMatrix& T, const ExactTarget& target);

/// KL(f || P-hat) where f is the empirical distribution of the samples and
/// P-hat is the model renormalized over the observed support. Throws
/// ZeroModelMass when the model puts no mass on an observed sequence.
double empirical_kl_to_lm(const std::vector<Sequence>& samples, const LanguageModel& m);

/// Same without renormalizing the reference; differs from the above by the
/// constant log of the observed mass.
double empirical_kl_to_lm_unnormalized(const std::vector<Sequence>& samples,
                                       const LanguageModel& m);

double empirical_kl_to_target(const std::vector<Sequence>& samples, const ExactTarget& target);

struct BootstrapCi {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentile bootstrap of the mean over run-level values.
BootstrapCi bootstrap_mean_ci(std::span<const double> values, std::size_t resamples = 1000,
                              double lo_pct = 2.5, double hi_pct = 97.5, std::uint64_t seed = 42);

struct KlReportRow {
    std::uint32_t k = 0;
    std::string metric;  // kl_to_lm | kl_to_target
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_runs = 0;
};

/// Mean and bootstrap CI of run-level empirical KL per chain length. Each run
/// is the multiset of final states of one batch of chains. Needs >= 2 runs
/// per k (InsufficientRuns otherwise).
std::vector<KlReportRow> kl_convergence_report(
    const std::map<std::uint32_t, std::vector<std::vector<Sequence>>>& runs_by_k,
    const LanguageModel& m, const ExactTarget* target = nullptr, std::size_t resamples = 1000,
    std::uint64_t seed = 42);

struct CsvRow {
    std::string benchmark, method, kind;
    KlReportRow row;
};

/// CSV schema: benchmark,method,kind,k,metric,value,ci_low,ci_high,n_runs
void write_kl_csv(std::ostream& out, std::span<const CsvRow> rows);

/// Whitespace-separated matrix dump for debugging; support strings go in
/// leading '#' comment lines.
void write_matrix_text(std::ostream& out, const TransitionMatrix& T, const ExactTarget& target,
                       const Vocabulary& v);

}  // namespace grammcmc
