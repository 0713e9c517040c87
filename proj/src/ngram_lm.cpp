#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "grammcmc/lm.hpp"

namespace grammcmc {

namespace {

std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

NgramLm::NgramLm(Vocabulary v, std::size_t order, double alpha)
    : LanguageModel(std::move(v)), order_(order), alpha_(alpha) {
    if (order_ < 1) throw ConfigError("n-gram order must be >= 1");
    if (!(alpha_ > 0.0)) throw ConfigError("n-gram smoothing alpha must be > 0");
}

std::string NgramLm::context_key(const std::uint32_t* ctx, std::size_t len) {
    return std::string(reinterpret_cast<const char*>(ctx), len * sizeof(std::uint32_t));
}

NextTokenDist NgramLm::next_dist(const Sequence& prefix) const {
    const std::size_t ctx_len = std::min(order_ - 1, prefix.tokens.size());
    const std::string key =
        context_key(prefix.tokens.data() + (prefix.tokens.size() - ctx_len), ctx_len);

    const std::size_t outcomes = vocab().dist_size();
    NextTokenDist d{std::vector<double>(outcomes, 0.0)};

    const auto it = counts_.find(key);
    const double total = it == counts_.end() ? 0.0 : static_cast<double>(totals_.at(key));
    const double denom = total + alpha_ * static_cast<double>(outcomes);
    for (std::size_t i = 0; i < outcomes; ++i) {
        const double count = it == counts_.end() ? 0.0 : static_cast<double>(it->second[i]);
        d.probs[i] = (count + alpha_) / denom;
    }
    return d;
}

NgramLm train_ngram(const std::vector<std::string>& corpus_lines, std::size_t order, double alpha,
                    const std::vector<std::string>& extra_tokens) {
    std::set<std::string> token_set(extra_tokens.begin(), extra_tokens.end());
    std::vector<std::vector<std::string>> lines;
    for (const std::string& line : corpus_lines) {
        std::vector<std::string> toks = split_tokens(line);
        if (toks.empty() && line.find_first_not_of(" \t\r") == std::string::npos) continue;
        for (const std::string& t : toks) token_set.insert(t);
        lines.push_back(std::move(toks));
    }
    if (lines.empty()) throw EmptyCorpus();

    Vocabulary vocab = make_vocabulary({token_set.begin(), token_set.end()});
    NgramLm lm(std::move(vocab), order, alpha);
    const std::size_t outcomes = lm.vocab().dist_size();

    const auto bump = [&](const std::uint32_t* ctx, std::size_t len, std::size_t outcome) {
        const std::string key = NgramLm::context_key(ctx, len);
        auto [it, fresh] = lm.counts_.try_emplace(key);
        if (fresh) it->second.assign(outcomes, 0);
        ++it->second[outcome];
        ++lm.totals_[key];
    };

    for (const auto& toks : lines) {
        std::vector<std::uint32_t> ids;
        ids.reserve(toks.size());
        for (const std::string& t : toks) ids.push_back(lm.vocab().id_of(t));
        for (std::size_t i = 0; i <= ids.size(); ++i) {
            const std::size_t ctx_len = std::min(order - 1, i);
            const std::size_t outcome = i < ids.size() ? ids[i] : lm.vocab().eos_id();
            bump(ids.data() + (i - ctx_len), ctx_len, outcome);
        }
    }
    return lm;
}

}  // namespace grammcmc
