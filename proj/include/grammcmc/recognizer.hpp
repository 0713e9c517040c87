#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "grammcmc/grammar.hpp"

namespace grammcmc {

namespace detail {
struct EarleyItem {
    std::uint32_t rule;    // index into Grammar::rules()
    std::uint32_t dot;     // position in the rule body
    std::uint32_t origin;  // chart index where this item started

    friend bool operator==(const EarleyItem&, const EarleyItem&) = default;
    friend auto operator<=>(const EarleyItem&, const EarleyItem&) = default;
};

struct ItemSet {
    std::vector<EarleyItem> items;  // sorted, unique
    bool complete = false;          // a finished start rule spanning the whole prefix
};
}  // namespace detail

/// Earley chart snapshot for a consumed character prefix. States are
/// persistent: `advance` returns a new snapshot and never mutates its input,
/// so a sampler can branch from any prefix it has already recognized. Every
/// reachable state is viable (the consumed prefix extends to a sentence);
/// advancing off the prefix language reports DeadEnd instead of producing a
/// state.
class RecognizerState {
public:
    std::size_t consumed() const { return chart_.size() - 1; }
    bool viable() const { return true; }  // dead ends are never materialized
    bool complete() const { return chart_.back()->complete; }

    std::optional<RecognizerState> try_advance(char c) const;

    /// try_advance that throws DeadEnd when the extended prefix leaves the
    /// prefix language.
    RecognizerState advance(char c) const;

    /// Advance through every character of `text`; nullopt on any dead end.
    std::optional<RecognizerState> try_advance_all(std::string_view text) const;

    /// Whether `c` extends the prefix language from here. Equivalent to
    /// try_advance(c).has_value() but builds no chart.
    bool can_scan(char c) const;

    /// try_advance_all(text).has_value() without materializing the final state.
    bool can_advance_all(std::string_view text) const;

    const Grammar& grammar() const { return *grammar_; }
    const std::shared_ptr<const Grammar>& grammar_ptr() const { return grammar_; }

private:
    friend RecognizerState recognizer_init(std::shared_ptr<const Grammar> g);

    RecognizerState(std::shared_ptr<const Grammar> g,
                    std::vector<std::shared_ptr<const detail::ItemSet>> chart)
        : grammar_(std::move(g)), chart_(std::move(chart)) {}

    std::shared_ptr<const Grammar> grammar_;
    std::vector<std::shared_ptr<const detail::ItemSet>> chart_;
};

/// Seed an Earley chart with the start items (nullable-aware closure applied).
/// Throws EmptyLanguage when no string derives from the start nonterminal.
RecognizerState recognizer_init(std::shared_ptr<const Grammar> g);

}  // namespace grammcmc
