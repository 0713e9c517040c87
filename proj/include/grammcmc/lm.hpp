#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "grammcmc/errors.hpp"
#include "grammcmc/grammar.hpp"

namespace grammcmc {

inline constexpr const char* kEosName = "<eos>";

/// Token inventory: distinct non-empty character strings plus a distinguished
/// end-of-sequence marker. The marker is not a token; it lives at index
/// tokens.size() in every distribution vector.
struct Vocabulary {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, std::uint32_t> index;

    std::size_t eos_id() const { return tokens.size(); }
    std::size_t dist_size() const { return tokens.size() + 1; }

    const std::string& token(std::uint32_t id) const { return tokens[id]; }
    bool has(const std::string& tok) const { return index.contains(tok); }
    std::uint32_t id_of(const std::string& tok) const { return index.at(tok); }
};

/// Validates tokens are distinct and non-empty.
Vocabulary make_vocabulary(std::vector<std::string> tokens);

/// Every terminal character of the grammar must appear as a length-1 token;
/// this is what guarantees a viable prefix always has a valid next token.
/// Throws ConfigError otherwise. Called at engine setup.
void validate_char_closure(const Vocabulary& v, const Grammar& g);

/// Content tokens of one sampled sentence; `terminated` means the end marker
/// was emitted and the sequence is final.
struct Sequence {
    std::vector<std::uint32_t> tokens;
    bool terminated = false;

    std::size_t size() const { return tokens.size(); }
    friend bool operator==(const Sequence&, const Sequence&) = default;
};

std::string sequence_text(const Vocabulary& v, const Sequence& w);

/// Probability vector over (tokens + eos) for one decoding step; sums to 1
/// within 1e-9, all entries finite and non-negative.
struct NextTokenDist {
    std::vector<double> probs;
    double& operator[](std::size_t i) { return probs[i]; }
    double operator[](std::size_t i) const { return probs[i]; }
    std::size_t size() const { return probs.size(); }
};

/// Autoregressive language model contract: a pure, deterministic conditional
/// distribution over the next token given a content-token prefix, defined for
/// every prefix (including ones outside any grammar).
class LanguageModel {
public:
    explicit LanguageModel(Vocabulary v) : vocab_(std::move(v)) {}
    virtual ~LanguageModel() = default;

    const Vocabulary& vocab() const { return vocab_; }
    virtual NextTokenDist next_dist(const Sequence& prefix) const = 0;

private:
    Vocabulary vocab_;
};

/// log P(w) = sum_i log P(w_i | w_{1:i-1}) + log P(eos | w). -inf when any
/// factor is zero. Requires w.terminated.
double lm_logprob(const LanguageModel& m, const Sequence& w);

/// exp of the step entropy in nats; 1 for a point mass.
double step_perplexity(const NextTokenDist& d);

class UniformLm final : public LanguageModel {
public:
    explicit UniformLm(Vocabulary v) : LanguageModel(std::move(v)) {}
    NextTokenDist next_dist(const Sequence&) const override;
};

/// Table-driven model loaded from JSON:
///   { "tokens": [...],
///     "rows": [ { "context": ["tok", ...], "probs": { "tok"|"<eos>": p } } ],
///     "default": { ... } }
/// Lookup order: longest row context matching a suffix of the prefix
/// (the full prefix first), then the mandatory default row. Tokens absent
/// from a row have probability zero.
class TableLm final : public LanguageModel {
public:
    static TableLm from_json_text(const std::string& json_text,
                                  const std::vector<std::string>& extra_tokens = {});
    static TableLm from_json_file(const std::string& path,
                                  const std::vector<std::string>& extra_tokens = {});

    NextTokenDist next_dist(const Sequence& prefix) const override;

private:
    TableLm(Vocabulary v, std::unordered_map<std::string, std::vector<double>> rows,
            std::vector<double> default_row, std::size_t max_context);

    static std::string context_key(const std::vector<std::uint32_t>& ctx);

    std::unordered_map<std::string, std::vector<double>> rows_;  // keyed by token-id bytes
    std::vector<double> default_row_;
    std::size_t max_context_;
};

/// Add-alpha smoothed n-gram model over (order-1)-token contexts, truncated at
/// the sequence start; eos is counted at line ends. All conditionals are
/// strictly positive.
class NgramLm final : public LanguageModel {
public:
    NgramLm(Vocabulary v, std::size_t order, double alpha);

    NextTokenDist next_dist(const Sequence& prefix) const override;

    std::size_t order() const { return order_; }

private:
    friend NgramLm train_ngram(const std::vector<std::string>& corpus_lines, std::size_t order,
                               double alpha, const std::vector<std::string>& extra_tokens);

    static std::string context_key(const std::uint32_t* ctx, std::size_t len);

    std::size_t order_;
    double alpha_;
    std::unordered_map<std::string, std::vector<std::uint32_t>> counts_;
    std::unordered_map<std::string, std::uint32_t> totals_;
};

/// Train on corpus lines of space-separated tokens. The vocabulary is the set
/// of distinct corpus tokens plus `extra_tokens`, in sorted order. Throws
/// EmptyCorpus when no line contributes.
NgramLm train_ngram(const std::vector<std::string>& corpus_lines, std::size_t order, double alpha,
                    const std::vector<std::string>& extra_tokens = {});

/// Client for the wire protocol: POST <base>/v1/next_dist with body
/// {"prefix": ["tok", ...]} answered by {"probs": {"tok"|"<eos>": p}}.
/// The response must cover the whole vocabulary and sum to 1 within 1e-6;
/// residual drift is renormalized away.
class RemoteLm final : public LanguageModel {
public:
    RemoteLm(Vocabulary v, std::string base_url, int timeout_ms = 2000);

    NextTokenDist next_dist(const Sequence& prefix) const override;

private:
    std::string host_;
    int port_;
    int timeout_ms_;
};

}  // namespace grammcmc
