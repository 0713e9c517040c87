#include "grammcmc/mcmc.hpp"

#include <cassert>
#include <cmath>
#include <exception>
#include <limits>

namespace grammcmc {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& terms) {
    double hi = kNegInf;
    for (double t : terms) hi = std::max(hi, t);
    if (hi == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - hi);
    return hi + std::log(acc);
}

std::size_t common_token_prefix(const Sequence& a, const Sequence& b) {
    const std::size_t n = std::min(a.tokens.size(), b.tokens.size());
    std::size_t i = 0;
    while (i < n && a.tokens[i] == b.tokens[i]) ++i;
    return i;
}
}  // namespace

const char* proposal_kind_name(ProposalKind kind) {
    switch (kind) {
        case ProposalKind::uniform: return "uniform";
        case ProposalKind::priority: return "priority";
        case ProposalKind::restart: return "restart";
    }
    return "?";
}

std::optional<ProposalKind> proposal_kind_from_name(const std::string& name) {
    if (name == "uniform" || name == "prefix") return ProposalKind::uniform;
    if (name == "priority") return ProposalKind::priority;
    if (name == "restart") return ProposalKind::restart;
    return std::nullopt;
}

TruncationDist truncation_dist(ProposalKind kind, const Sequence& w, const LanguageModel& m) {
    const std::size_t n = w.tokens.size();
    TruncationDist d;
    d.probs.assign(n + 1, 0.0);

    switch (kind) {
        case ProposalKind::uniform: {
            const double p = 1.0 / static_cast<double>(n + 1);
            for (double& x : d.probs) x = p;
            break;
        }
        case ProposalKind::priority: {
            Sequence prefix;
            double total = 0.0;
            for (std::size_t i = 0; i <= n; ++i) {
                if (i > 0) prefix.tokens.push_back(w.tokens[i - 1]);
                d.probs[i] = step_perplexity(m.next_dist(prefix));
                total += d.probs[i];
            }
            for (double& x : d.probs) x /= total;
            break;
        }
        case ProposalKind::restart:
            d.probs[0] = 1.0;
            break;
    }

    d.log_probs.resize(d.probs.size());
    for (std::size_t i = 0; i < d.probs.size(); ++i)
        d.log_probs[i] = d.probs[i] > 0.0 ? std::log(d.probs[i]) : kNegInf;
    assert(d.probs[0] > 0.0);
    return d;
}

double proposal_logprob_scored(const ScoredSequence& x, const TruncationDist& x_pos,
                               const ScoredSequence& y) {
    const std::size_t lcp = common_token_prefix(x.seq(), y.seq());
    std::vector<double> terms;
    terms.reserve(lcp + 1);
    for (std::size_t i = 0; i <= lcp; ++i) {
        if (x_pos.probs[i] <= 0.0) continue;
        terms.push_back(x_pos.log_probs[i] + y.gcd_logprob_from(i));
    }
    return log_sum_exp(terms);
}

double proposal_logprob(const Sequence& x, const Sequence& y, ProposalKind kind,
                        const LanguageModel& m, const std::shared_ptr<const Grammar>& g) {
    const RecognizerState root = recognizer_init(g);
    const ScoredSequence sx = ScoredSequence::score(m, root, x);
    const ScoredSequence sy = ScoredSequence::score(m, root, y);
    return proposal_logprob_scored(sx, truncation_dist(kind, x, m), sy);
}

namespace {
// log alpha; 0 (alpha = 1) when both sides vanish, which positivity rules out.
double accept_log_alpha(const ScoredSequence& x, const ScoredSequence& y, double log_qf,
                        double log_qr) {
    const double num = y.lm_logprob() + log_qr;
    const double den = x.lm_logprob() + log_qf;
    if (num == kNegInf && den == kNegInf) {
        assert(false && "acceptance ratio 0/0; model positivity violated");
        return 0.0;
    }
    if (den == kNegInf) return 0.0;
    return std::min(0.0, num - den);
}
}  // namespace

double accept_prob_scored(const ScoredSequence& x, const ScoredSequence& y, double log_qf,
                          double log_qr) {
    return std::exp(accept_log_alpha(x, y, log_qf, log_qr));
}

double accept_prob(const Sequence& x, const Sequence& y, double log_qf, double log_qr,
                   const LanguageModel& m, const std::shared_ptr<const Grammar>& g) {
    const RecognizerState root = recognizer_init(g);
    const ScoredSequence sx = ScoredSequence::score(m, root, x);
    const ScoredSequence sy = ScoredSequence::score(m, root, y);
    return accept_prob_scored(sx, sy, log_qf, log_qr);
}

ProposalDraw propose(const Sequence& w, ProposalKind kind, const LanguageModel& m,
                     const std::shared_ptr<const Grammar>& g, RngStream& rng,
                     std::size_t max_tokens) {
    const RecognizerState root = recognizer_init(g);
    const ScoredSequence scored = ScoredSequence::score(m, root, w);
    const TruncationDist pos = truncation_dist(kind, w, m);
    const std::size_t i = rng.sample_index(pos.probs);
    auto y = ScoredSequence::sample_continuation(m, scored, i, rng, max_tokens);
    if (!y) throw LengthExceeded(max_tokens);
    return ProposalDraw{y->seq(), i};
}

namespace {

ChainTrace run_chain_impl(const ChainParams& params, const LanguageModel& m,
                          const RecognizerState& root, bool record_steps) {
    ChainTrace trace;
    trace.params = params;

    RngStream trunc_rng = chain_stream(params.rng_seed, ChainSubstream::truncation);
    RngStream gcd_rng = chain_stream(params.rng_seed, ChainSubstream::gcd);
    RngStream bern_rng = chain_stream(params.rng_seed, ChainSubstream::bernoulli);

    // w_0: GCD sample from the empty prefix; cap hits are retried so the
    // initial distribution is GCD restricted to the length-bounded language.
    std::optional<ScoredSequence> cur;
    while (!(cur = ScoredSequence::sample(m, root, gcd_rng, params.max_tokens, &trace.gcd)))
        ++trace.init_retries;

    if (record_steps) {
        trace.states.reserve(params.k + 1);
        trace.states.push_back(cur->seq());
        trace.steps.reserve(params.k);
    }

    TruncationDist cur_pos = truncation_dist(params.kind, cur->seq(), m);

    for (std::uint32_t step = 0; step < params.k; ++step) {
        const std::size_t i = trunc_rng.sample_index(cur_pos.probs);
        auto prop =
            ScoredSequence::sample_continuation(m, *cur, i, gcd_rng, params.max_tokens, &trace.gcd);

        if (!prop) {
            ++trace.cap_rejected;
            if (record_steps) {
                ChainStep s;
                s.truncation_pos = i;
                s.length_exceeded = true;
                s.log_qf = kNegInf;
                s.log_qr = kNegInf;
                trace.steps.push_back(std::move(s));
                trace.states.push_back(cur->seq());
            }
            continue;
        }

        TruncationDist prop_pos = truncation_dist(params.kind, prop->seq(), m);
        const double log_qf = proposal_logprob_scored(*cur, cur_pos, *prop);
        const double log_qr = proposal_logprob_scored(*prop, prop_pos, *cur);
        const double log_alpha = accept_log_alpha(*cur, *prop, log_qf, log_qr);

        const double u = bern_rng.next_uniform();
        const bool accepted = std::log(u) < log_alpha;

        if (record_steps) {
            ChainStep s;
            s.proposal = prop->seq();
            s.truncation_pos = i;
            s.log_qf = log_qf;
            s.log_qr = log_qr;
            s.alpha = std::exp(log_alpha);
            s.accepted = accepted;
            trace.steps.push_back(std::move(s));
        }
        if (accepted) {
            ++trace.accepted_count;
            cur = std::move(prop);
            cur_pos = std::move(prop_pos);
        }
        if (record_steps) trace.states.push_back(cur->seq());
    }

    if (!record_steps) trace.states.push_back(cur->seq());
    return trace;
}

std::vector<ChainTrace> run_batch(const ChainParams& params, std::size_t n_chains,
                                  const LanguageModel& m, const std::shared_ptr<const Grammar>& g,
                                  bool record_steps, bool parallel) {
    validate_char_closure(m.vocab(), *g);
    recognizer_init(g);  // surfaces EmptyLanguage before any thread starts

    std::vector<ChainTrace> out(n_chains);
    std::exception_ptr failure = nullptr;

    // Each thread recognizes against its own copy of the (small, immutable)
    // grammar: chain states then only touch thread-local reference counts,
    // which is what lets independent chains actually scale.
#pragma omp parallel if (parallel)
    {
        std::shared_ptr<const Grammar> local_g;
        std::optional<RecognizerState> local_root;
        try {
            local_g = std::make_shared<const Grammar>(*g);
            local_root = recognizer_init(local_g);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }

#pragma omp for schedule(dynamic, 8)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n_chains); ++i) {
            if (!local_root) continue;
            try {
                ChainParams p = params;
                p.rng_seed = params.rng_seed + static_cast<std::uint64_t>(i);
                out[static_cast<std::size_t>(i)] = run_chain_impl(p, m, *local_root, record_steps);
            } catch (...) {
#pragma omp critical
                if (!failure) failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace

ChainTrace run_chain(const ChainParams& params, const LanguageModel& m,
                     const std::shared_ptr<const Grammar>& g, bool record_steps) {
    validate_char_closure(m.vocab(), *g);
    return run_chain_impl(params, m, recognizer_init(g), record_steps);
}

std::vector<ChainTrace> run_chain_batch(const ChainParams& params, std::size_t n_chains,
                                        const LanguageModel& m,
                                        const std::shared_ptr<const Grammar>& g,
                                        bool record_steps) {
    return run_batch(params, n_chains, m, g, record_steps, true);
}

std::vector<ChainTrace> run_chain_batch_serial(const ChainParams& params, std::size_t n_chains,
                                               const LanguageModel& m,
                                               const std::shared_ptr<const Grammar>& g,
                                               bool record_steps) {
    return run_batch(params, n_chains, m, g, record_steps, false);
}

}  // namespace grammcmc
