#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "grammcmc/gcd.hpp"

namespace grammcmc {

enum class ProposalKind { uniform, priority, restart };

const char* proposal_kind_name(ProposalKind kind);
std::optional<ProposalKind> proposal_kind_from_name(const std::string& name);

/// Distribution over truncation positions 0..|w|; position i keeps the first
/// i content tokens. probs[0] > 0 for every kind.
struct TruncationDist {
    std::vector<double> probs;
    std::vector<double> log_probs;
};

/// Uniform: 1/(|w|+1) everywhere. Priority: probs[i] proportional to the
/// step perplexity of the raw (unmasked) model distribution after w_{1:i}.
/// Restart: point mass on position 0.
TruncationDist truncation_dist(ProposalKind kind, const Sequence& w, const LanguageModel& m);

struct ChainParams {
    ProposalKind kind = ProposalKind::restart;
    std::uint32_t k = 0;  // chain length (number of MH steps)
    std::size_t max_tokens = 512;
    std::uint64_t rng_seed = 42;
};

struct ChainStep {
    std::optional<Sequence> proposal;  // nullopt when the proposal hit the length cap
    std::size_t truncation_pos = 0;
    double log_qf = 0.0;
    double log_qr = 0.0;
    double alpha = 0.0;
    bool accepted = false;
    bool length_exceeded = false;
};

/// Full record of one chain. states.back() is always the chain's result;
/// when step recording is enabled states holds w_0..w_k and steps holds one
/// entry per MH step.
struct ChainTrace {
    ChainParams params;
    std::vector<Sequence> states;
    std::vector<ChainStep> steps;
    std::size_t init_retries = 0;   // w_0 resamples forced by the length cap
    std::size_t cap_rejected = 0;   // proposals auto-rejected by the length cap
    std::size_t accepted_count = 0;
    GcdTelemetry gcd;

    const Sequence& final_state() const { return states.back(); }
};

struct ProposalDraw {
    Sequence seq;
    std::size_t truncation_pos;
};

/// Draw i from the truncation distribution of w and GCD-complete from w_{1:i}.
/// Throws LengthExceeded when the completion hits max_tokens (the chain runner
/// treats that as an auto-rejected step instead).
ProposalDraw propose(const Sequence& w, ProposalKind kind, const LanguageModel& m,
                     const std::shared_ptr<const Grammar>& g, RngStream& rng,
                     std::size_t max_tokens = 512);

/// log q(y|x): the proposal density marginalized over every truncation point
/// consistent with y, i.e. log-sum-exp over i <= LCP(x, y) of
/// log p_pos^x(i) + log P_gcd(y's continuation from i).
double proposal_logprob(const Sequence& x, const Sequence& y, ProposalKind kind,
                        const LanguageModel& m, const std::shared_ptr<const Grammar>& g);

/// Same, over pre-scored sequences (x_pos must be x's truncation distribution).
double proposal_logprob_scored(const ScoredSequence& x, const TruncationDist& x_pos,
                               const ScoredSequence& y);

/// min{1, exp(log P(y) + log q(x|y) - log P(x) - log q(y|x))} computed on raw
/// model log probabilities; the target's normalization constant cancels.
double accept_prob(const Sequence& x, const Sequence& y, double log_qf, double log_qr,
                   const LanguageModel& m, const std::shared_ptr<const Grammar>& g);

double accept_prob_scored(const ScoredSequence& x, const ScoredSequence& y, double log_qf,
                          double log_qr);

/// Run one Metropolis-Hastings chain: w_0 is a GCD sample from the empty
/// prefix, then k propose/accept steps. Proposals that exceed max_tokens are
/// recorded as rejected steps; a w_0 draw that exceeds the cap is retried (and
/// counted), so the chain state space is exactly the length-bounded language.
ChainTrace run_chain(const ChainParams& params, const LanguageModel& m,
                     const std::shared_ptr<const Grammar>& g, bool record_steps = true);

/// Independent chains i = 0..n-1 seeded params.rng_seed + i. The parallel and
/// serial paths produce identical traces; chain rng streams are self-contained.
std::vector<ChainTrace> run_chain_batch(const ChainParams& params, std::size_t n_chains,
                                        const LanguageModel& m,
                                        const std::shared_ptr<const Grammar>& g,
                                        bool record_steps = false);

/// Serial reference for run_chain_batch.
std::vector<ChainTrace> run_chain_batch_serial(const ChainParams& params, std::size_t n_chains,
                                               const LanguageModel& m,
                                               const std::shared_ptr<const Grammar>& g,
                                               bool record_steps = false);

}  // namespace grammcmc
