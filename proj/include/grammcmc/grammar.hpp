#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "grammcmc/errors.hpp"

namespace grammcmc {

// Grammar symbol: values >= 0 are nonterminal ids, values < 0 encode single
// terminal characters as -1 - byte.
using Symbol = std::int32_t;

inline Symbol terminal_symbol(char c) {
    return -1 - static_cast<Symbol>(static_cast<unsigned char>(c));
}
inline bool symbol_is_terminal(Symbol s) { return s < 0; }
inline char terminal_char(Symbol s) { return static_cast<char>(static_cast<unsigned char>(-(s + 1))); }

struct Rule {
    std::int32_t lhs;
    std::vector<Symbol> body;
};

namespace detail {
/// Raw grammar pieces assembled by the parser; Grammar freezes and analyzes them.
struct GrammarData {
    std::int32_t start = 0;
    std::vector<std::string> names;
    std::vector<Rule> rules;
    std::vector<std::vector<std::uint32_t>> rules_by_lhs;
    std::set<char> terminals;
};
}  // namespace detail

/// Character-level context-free grammar in BNF form, as produced by parse_ebnf.
/// Immutable after construction; safe to share across threads.
class Grammar {
public:
    explicit Grammar(detail::GrammarData data);

    std::int32_t start() const { return d_.start; }
    std::size_t nonterminal_count() const { return d_.names.size(); }
    const std::string& nonterminal_name(std::int32_t nt) const {
        return d_.names[static_cast<std::size_t>(nt)];
    }

    const std::vector<Rule>& rules() const { return d_.rules; }
    /// Indices into rules() of the productions for one nonterminal.
    const std::vector<std::uint32_t>& rules_of(std::int32_t nt) const {
        return d_.rules_by_lhs[static_cast<std::size_t>(nt)];
    }

    const std::set<char>& terminals() const { return d_.terminals; }

    bool nullable(std::int32_t nt) const { return nullable_[static_cast<std::size_t>(nt)]; }
    /// A nonterminal is productive when at least one terminal string derives from it.
    bool productive(std::int32_t nt) const { return productive_[static_cast<std::size_t>(nt)]; }
    /// A rule is useful when every symbol in its body is productive. The
    /// recognizer and the enumerator only ever expand useful rules.
    bool rule_useful(std::uint32_t rule) const { return rule_useful_[rule]; }

private:
    void analyze();  // nullable / productive / useful flags

    detail::GrammarData d_;
    std::vector<bool> nullable_;
    std::vector<bool> productive_;
    std::vector<bool> rule_useful_;
};

/// Compile an EBNF grammar description into a character-level BNF grammar.
///
/// Dialect: rules `name ::= body`; bodies support concatenation, alternation
/// `|`, grouping `( )`, postfix `*` `+` `?`, double-quoted literals with
/// escapes `\"` `\\` `\n` `\t`, and character classes `[a-z0-9]` / negated
/// `[^-]` over printable ASCII plus newline and tab. `#` starts a comment to
/// end of line. The first rule's name is the start nonterminal.
Grammar parse_ebnf(const std::string& text);

/// Exactly { u in L(g) : |u| <= max_chars }, in lexicographic (byte) order.
/// Throws BudgetExceeded when any per-nonterminal bounded string set grows
/// past `cap`.
std::set<std::string> enumerate_language(const Grammar& g, std::size_t max_chars, std::size_t cap = 100000);

/// Escape \ " newline and tab as in the grammar literal syntax.
std::string escape_text(const std::string& raw);

}  // namespace grammcmc
