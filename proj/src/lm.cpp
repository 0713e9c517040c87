#include "grammcmc/lm.hpp"

#include <cmath>
#include <limits>

namespace grammcmc {

Vocabulary make_vocabulary(std::vector<std::string> tokens) {
    Vocabulary v;
    v.tokens = std::move(tokens);
    for (std::uint32_t i = 0; i < v.tokens.size(); ++i) {
        if (v.tokens[i].empty()) throw ConfigError("vocabulary tokens must be non-empty");
        if (v.tokens[i] == kEosName)
            throw ConfigError("the end marker is not a content token");
        if (!v.index.emplace(v.tokens[i], i).second)
            throw ConfigError("duplicate vocabulary token \"" + v.tokens[i] + "\"");
    }
    return v;
}

void validate_char_closure(const Vocabulary& v, const Grammar& g) {
    for (char c : g.terminals()) {
        if (!v.has(std::string(1, c)))
            throw ConfigError("vocabulary has no length-1 token for grammar terminal \"" +
                              escape_text(std::string(1, c)) + "\"");
    }
}

std::string sequence_text(const Vocabulary& v, const Sequence& w) {
    std::string out;
    for (std::uint32_t t : w.tokens) out += v.token(t);
    return out;
}

double lm_logprob(const LanguageModel& m, const Sequence& w) {
    if (!w.terminated) throw Error("lm_logprob requires a terminated sequence");
    double total = 0.0;
    Sequence prefix;
    prefix.tokens.reserve(w.size());
    for (std::uint32_t t : w.tokens) {
        total += std::log(m.next_dist(prefix)[t]);
        prefix.tokens.push_back(t);
    }
    total += std::log(m.next_dist(prefix)[m.vocab().eos_id()]);
    return total;  // -inf propagates from any zero factor
}

double step_perplexity(const NextTokenDist& d) {
    double entropy = 0.0;
    for (double p : d.probs) {
        if (p > 0.0) entropy -= p * std::log(p);
    }
    return std::exp(entropy);
}

NextTokenDist UniformLm::next_dist(const Sequence&) const {
    const std::size_t n = vocab().dist_size();
    return NextTokenDist{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

}  // namespace grammcmc
