#include "grammcmc/gcd.hpp"

#include <cmath>
#include <limits>

namespace grammcmc {

namespace {

MaskedStep mask_against(const Vocabulary& v, NextTokenDist raw, const RecognizerState& s) {
    MaskedStep step;
    step.mask.assign(v.dist_size(), false);
    step.dist = std::move(raw);

    double valid_mass = 0.0;
    for (std::uint32_t t = 0; t < v.tokens.size(); ++t) {
        if (s.can_advance_all(v.token(t))) {
            step.mask[t] = true;
            ++step.masked_in;
            valid_mass += step.dist[t];
        }
    }
    if (s.complete()) {
        step.mask[v.eos_id()] = true;
        ++step.masked_in;
        valid_mass += step.dist[v.eos_id()];
    }

    if (step.masked_in == 0) throw MaskEmpty();
    if (valid_mass <= 0.0) throw ZeroMass();

    for (std::size_t i = 0; i < step.dist.size(); ++i) {
        step.dist.probs[i] = step.mask[i] ? step.dist[i] / valid_mass : 0.0;
    }
    return step;
}

}  // namespace

MaskedStep masked_step(const LanguageModel& m, const RecognizerState& s, const Sequence& prefix) {
    return mask_against(m.vocab(), m.next_dist(prefix), s);
}

void ScoredSequence::finish_suffixes() {
    const std::size_t n = gcd_step_.size();
    gcd_suffix_.assign(n + 1, 0.0);
    lm_suffix_.assign(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        gcd_suffix_[i] = gcd_step_[i] + gcd_suffix_[i + 1];
        lm_suffix_[i] = lm_step_[i] + lm_suffix_[i + 1];
    }
}

ScoredSequence ScoredSequence::walk_prefix(const LanguageModel& m, const RecognizerState& root,
                                           const Sequence& prefix) {
    const Vocabulary& v = m.vocab();
    ScoredSequence out;
    out.boundary_.push_back(root);

    Sequence walked;
    for (std::uint32_t tok : prefix.tokens) {
        const NextTokenDist raw = m.next_dist(walked);
        const MaskedStep step = mask_against(v, raw, out.boundary_.back());
        if (!step.mask[tok]) throw NotInLanguage();
        out.gcd_step_.push_back(std::log(step.dist[tok]));
        out.lm_step_.push_back(std::log(raw[tok]));
        out.boundary_.push_back(*out.boundary_.back().try_advance_all(v.token(tok)));
        walked.tokens.push_back(tok);
    }
    out.seq_ = std::move(walked);
    return out;  // partial: no eos factor, no suffix sums
}

ScoredSequence ScoredSequence::score(const LanguageModel& m, const RecognizerState& root,
                                     const Sequence& w) {
    const Vocabulary& v = m.vocab();
    ScoredSequence out = walk_prefix(m, root, w);
    if (!out.boundary_.back().complete()) throw NotInLanguage();

    const NextTokenDist raw = m.next_dist(out.seq_);
    const MaskedStep eos_step = mask_against(v, raw, out.boundary_.back());
    out.gcd_step_.push_back(std::log(eos_step.dist[v.eos_id()]));
    out.lm_step_.push_back(std::log(raw[v.eos_id()]));

    out.seq_.terminated = true;
    out.finish_suffixes();
    return out;
}

std::optional<ScoredSequence> ScoredSequence::sample_continuation(const LanguageModel& m,
                                                                  const ScoredSequence& base,
                                                                  std::size_t keep, RngStream& rng,
                                                                  std::size_t max_tokens,
                                                                  GcdTelemetry* telemetry) {
    const Vocabulary& v = m.vocab();
    ScoredSequence out;
    out.seq_.tokens.assign(base.seq_.tokens.begin(),
                           base.seq_.tokens.begin() + static_cast<std::ptrdiff_t>(keep));
    out.boundary_.assign(base.boundary_.begin(),
                         base.boundary_.begin() + static_cast<std::ptrdiff_t>(keep) + 1);
    out.gcd_step_.assign(base.gcd_step_.begin(),
                         base.gcd_step_.begin() + static_cast<std::ptrdiff_t>(keep));
    out.lm_step_.assign(base.lm_step_.begin(),
                        base.lm_step_.begin() + static_cast<std::ptrdiff_t>(keep));

    Sequence prefix = out.seq_;
    while (true) {
        const NextTokenDist raw = m.next_dist(prefix);
        const MaskedStep step = mask_against(v, raw, out.boundary_.back());
        if (telemetry) {
            ++telemetry->steps;
            telemetry->tokens_considered += v.dist_size();
            telemetry->tokens_masked_out += v.dist_size() - step.masked_in;
        }
        const std::size_t pick = rng.sample_index(step.dist.probs);
        out.gcd_step_.push_back(std::log(step.dist[pick]));
        out.lm_step_.push_back(std::log(raw[pick]));

        if (pick == v.eos_id()) break;
        if (out.seq_.tokens.size() == max_tokens) return std::nullopt;  // cap hit, surfaced

        const auto tok = static_cast<std::uint32_t>(pick);
        out.boundary_.push_back(*out.boundary_.back().try_advance_all(v.token(tok)));
        out.seq_.tokens.push_back(tok);
        prefix.tokens.push_back(tok);
    }

    out.seq_.terminated = true;
    out.finish_suffixes();
    return out;
}

std::optional<ScoredSequence> ScoredSequence::sample(const LanguageModel& m,
                                                     const RecognizerState& root, RngStream& rng,
                                                     std::size_t max_tokens,
                                                     GcdTelemetry* telemetry) {
    ScoredSequence empty;
    empty.boundary_.push_back(root);
    return sample_continuation(m, empty, 0, rng, max_tokens, telemetry);
}

GcdSample gcd_sample(const LanguageModel& m, const std::shared_ptr<const Grammar>& g,
                     const Sequence& prefix, RngStream& rng, std::size_t max_tokens) {
    if (max_tokens <= prefix.tokens.size())
        throw ConfigError("max_tokens must exceed the prefix length");
    const ScoredSequence base = ScoredSequence::walk_prefix(m, recognizer_init(g), prefix);
    auto out = ScoredSequence::sample_continuation(m, base, prefix.tokens.size(), rng, max_tokens);
    if (!out) throw LengthExceeded(max_tokens);
    return GcdSample{out->seq(), out->gcd_logprob_from(prefix.tokens.size()),
                     out->lm_logprob_from(prefix.tokens.size())};
}

double gcd_continuation_logprob(const LanguageModel& m, const std::shared_ptr<const Grammar>& g,
                                const Sequence& w, std::size_t from) {
    if (!w.terminated) throw NotInLanguage();
    if (from > w.tokens.size()) throw ConfigError("continuation start past end of sequence");
    const ScoredSequence scored = ScoredSequence::score(m, recognizer_init(g), w);
    return scored.gcd_logprob_from(from);
}

RejectionResult rejection_sample(const LanguageModel& m, const std::shared_ptr<const Grammar>& g,
                                 RngStream& rng, std::size_t max_attempts, std::size_t max_tokens) {
    if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    const Vocabulary& v = m.vocab();
    const RecognizerState root = recognizer_init(g);

    for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
        Sequence w;
        bool ended = false;
        while (w.tokens.size() <= max_tokens) {
            const NextTokenDist d = m.next_dist(w);
            const std::size_t pick = rng.sample_index(d.probs);
            if (pick == v.eos_id()) {
                ended = true;
                break;
            }
            w.tokens.push_back(static_cast<std::uint32_t>(pick));
        }
        if (!ended) continue;  // ran past the cap: not a usable sample

        auto state = root.try_advance_all(sequence_text(v, w));
        if (state && state->complete()) {
            w.terminated = true;
            return RejectionResult{std::move(w), attempt};
        }
    }
    throw Exhausted(max_attempts);
}

}  // namespace grammcmc
