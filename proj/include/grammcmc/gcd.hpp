#pragma once

#include <cstdint>
#include <optional>

#include "grammcmc/lm.hpp"
#include "grammcmc/recognizer.hpp"
#include "grammcmc/rng.hpp"

namespace grammcmc {

/// One grammar-constrained decoding step: the validity mask over
/// (tokens + eos) and the renormalized distribution restricted to it.
struct MaskedStep {
    std::vector<bool> mask;
    NextTokenDist dist;
    std::size_t masked_in = 0;
};

/// Token t is masked in iff every character of t advances `s` without leaving
/// the prefix language; eos is masked in iff `s` is complete. Throws MaskEmpty
/// when nothing is valid (impossible for a char-closed vocabulary) and
/// ZeroMass when the model puts zero probability on every valid entry.
MaskedStep masked_step(const LanguageModel& m, const RecognizerState& s, const Sequence& prefix);

/// Counters surfaced to the CLI.
struct GcdTelemetry {
    std::uint64_t steps = 0;
    std::uint64_t tokens_considered = 0;
    std::uint64_t tokens_masked_out = 0;
};

struct GcdSample {
    Sequence seq;           // terminated; its text is in L(G)
    double gcd_logprob;     // sum of masked-step factors past the given prefix
    double lm_logprob;      // same factors under the raw model
};

/// A terminated grammar-valid sequence with its per-boundary recognizer
/// snapshots and per-step log probabilities, so that continuation scores from
/// every truncation point of one sequence cost a single left-to-right pass.
class ScoredSequence {
public:
    /// Score an existing terminated sequence. Throws NotInLanguage when some
    /// token is masked out along the way or the final state is not complete.
    static ScoredSequence score(const LanguageModel& m, const RecognizerState& root,
                                const Sequence& w);

    /// Walk an unterminated prefix, collecting snapshots and step factors but
    /// no eos factor. The result is only usable as the base of
    /// sample_continuation. Throws NotInLanguage when a token is masked out.
    static ScoredSequence walk_prefix(const LanguageModel& m, const RecognizerState& root,
                                      const Sequence& prefix);

    /// GCD-sample a completion keeping the first `keep` tokens of `base`.
    /// Prefix snapshots and step scores are reused, not recomputed. Returns
    /// nullopt when the sample would exceed `max_tokens` content tokens.
    static std::optional<ScoredSequence> sample_continuation(const LanguageModel& m,
                                                             const ScoredSequence& base,
                                                             std::size_t keep, RngStream& rng,
                                                             std::size_t max_tokens,
                                                             GcdTelemetry* telemetry = nullptr);

    /// GCD-sample from the empty prefix.
    static std::optional<ScoredSequence> sample(const LanguageModel& m, const RecognizerState& root,
                                                RngStream& rng, std::size_t max_tokens,
                                                GcdTelemetry* telemetry = nullptr);

    const Sequence& seq() const { return seq_; }
    std::size_t size() const { return seq_.tokens.size(); }

    double lm_logprob() const { return lm_suffix_[0]; }
    double lm_logprob_from(std::size_t i) const { return lm_suffix_[i]; }
    double gcd_logprob() const { return gcd_suffix_[0]; }
    /// Sum of masked-step log factors for tokens i+1..|w| plus the eos factor.
    double gcd_logprob_from(std::size_t i) const { return gcd_suffix_[i]; }

    /// Recognizer snapshot after the first i tokens.
    const RecognizerState& state_at(std::size_t i) const { return boundary_[i]; }

private:
    ScoredSequence() = default;
    void finish_suffixes();

    Sequence seq_;
    std::vector<RecognizerState> boundary_;  // |w| + 1 snapshots
    std::vector<double> gcd_step_;           // |w| + 1 factors, eos last
    std::vector<double> lm_step_;
    std::vector<double> gcd_suffix_;         // |w| + 2 suffix sums, trailing 0
    std::vector<double> lm_suffix_;
};

/// Sample a full sequence with the given prefix (Alg.: repeat masked steps
/// until eos). Throws LengthExceeded past max_tokens content tokens; the
/// chain runner treats that as a rejected proposal instead.
GcdSample gcd_sample(const LanguageModel& m, const std::shared_ptr<const Grammar>& g,
                     const Sequence& prefix, RngStream& rng, std::size_t max_tokens = 512);

/// log prod_{j>from} P_gcd(w_j | w_{1:j-1}) including the eos factor.
double gcd_continuation_logprob(const LanguageModel& m, const std::shared_ptr<const Grammar>& g,
                                const Sequence& w, std::size_t from);

struct RejectionResult {
    Sequence seq;
    std::size_t attempts;
};

/// Unconstrained sampling with membership filtering; reports how many draws
/// it took. Throws Exhausted after max_attempts invalid draws.
RejectionResult rejection_sample(const LanguageModel& m, const std::shared_ptr<const Grammar>& g,
                                 RngStream& rng, std::size_t max_attempts,
                                 std::size_t max_tokens = 512);

}  // namespace grammcmc
