#include "grammcmc/grammar.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace grammcmc {

namespace {

bool in_alphabet(char c) {
    const unsigned char u = static_cast<unsigned char>(c);
    return (u >= 0x20 && u <= 0x7E) || c == '\n' || c == '\t';
}

std::set<char> full_alphabet() {
    std::set<char> out;
    for (int u = 0x20; u <= 0x7E; ++u) out.insert(static_cast<char>(u));
    out.insert('\n');
    out.insert('\t');
    return out;
}

class EbnfParser {
public:
    explicit EbnfParser(const std::string& text) : text_(text) {}

    Grammar parse() {
        skip_space();
        while (!at_end()) {
            parse_rule();
            skip_space();
        }
        if (g_.rules.empty()) throw EmptyGrammar();

        for (std::size_t nt = 0; nt < g_.names.size(); ++nt) {
            if (g_.rules_by_lhs[nt].empty()) throw UndefinedNonterminal(g_.names[nt]);
        }
        g_.start = 0;
        return Grammar(std::move(g_));
    }

private:
    // --- cursor -----------------------------------------------------------

    bool at_end() const { return pos_ >= text_.size(); }
    char peek(std::size_t delta = 0) const {
        return pos_ + delta < text_.size() ? text_[pos_ + delta] : '\0';
    }
    char take() {
        const char c = text_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(line_, col_, msg); }

    void skip_space() {
        while (!at_end()) {
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                take();
            } else if (c == '#') {
                while (!at_end() && peek() != '\n') take();
            } else {
                break;
            }
        }
    }

    static bool is_name_char(char c, bool first) {
        if (c == '_' || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return true;
        return !first && ((c >= '0' && c <= '9') || c == '-');
    }

    std::string parse_name() {
        if (!is_name_char(peek(), true)) fail("expected rule or symbol name");
        std::string name;
        bool first = true;
        while (!at_end() && is_name_char(peek(), first)) {
            name.push_back(take());
            first = false;
        }
        return name;
    }

    // True when the cursor sits on `name ::=`, i.e. the start of the next rule.
    bool at_rule_start() {
        if (!is_name_char(peek(), true)) return false;
        std::size_t p = pos_;
        while (p < text_.size() && is_name_char(text_[p], p == pos_)) ++p;
        while (p < text_.size() && (text_[p] == ' ' || text_[p] == '\t' || text_[p] == '\n' ||
                                    text_[p] == '\r'))
            ++p;
        return p + 2 < text_.size() && text_[p] == ':' && text_[p + 1] == ':' && text_[p + 2] == '=';
    }

    // --- grammar building --------------------------------------------------

    std::int32_t nt_id(const std::string& name) {
        auto [it, fresh] = nt_ids_.try_emplace(name, static_cast<std::int32_t>(g_.names.size()));
        if (fresh) {
            g_.names.push_back(name);
            g_.rules_by_lhs.emplace_back();
        }
        return it->second;
    }

    std::int32_t fresh_nt(const char* kind) {
        return nt_id("%" + std::string(kind) + std::to_string(fresh_counter_++));
    }

    void add_rule(std::int32_t lhs, std::vector<Symbol> body) {
        g_.rules_by_lhs[static_cast<std::size_t>(lhs)].push_back(
            static_cast<std::uint32_t>(g_.rules.size()));
        g_.rules.push_back(Rule{lhs, std::move(body)});
    }

    // --- productions --------------------------------------------------------

    void parse_rule() {
        const int def_line = line_, def_col = col_;
        const std::string name = parse_name();
        skip_space();
        if (!(peek() == ':' && peek(1) == ':' && peek(2) == '=')) fail("expected '::=' after rule name");
        take();
        take();
        take();
        skip_space();

        const std::int32_t lhs = nt_id(name);
        if (lhs == 0 && !g_.rules_by_lhs[0].empty())
            throw SyntaxError(def_line, def_col, "start nonterminal '" + name + "' redefined");

        for (auto& alt : parse_alternation()) add_rule(lhs, std::move(alt));
    }

    std::vector<std::vector<Symbol>> parse_alternation() {
        std::vector<std::vector<Symbol>> alts;
        alts.push_back(parse_sequence());
        skip_space();
        while (peek() == '|') {
            take();
            skip_space();
            alts.push_back(parse_sequence());
            skip_space();
        }
        return alts;
    }

    std::vector<Symbol> parse_sequence() {
        std::vector<Symbol> seq;
        skip_space();
        while (!at_end()) {
            const char c = peek();
            if (c == '|' || c == ')') break;
            if (at_rule_start()) break;
            std::vector<Symbol> atom = parse_postfixed_atom();
            seq.insert(seq.end(), atom.begin(), atom.end());
            skip_space();
        }
        return seq;
    }

    std::vector<Symbol> parse_postfixed_atom() {
        std::vector<Symbol> atom = parse_atom();
        while (true) {
            const char c = peek();
            if (c == '*') {
                take();
                // F -> eps | atom F
                const std::int32_t f = fresh_nt("star");
                add_rule(f, {});
                std::vector<Symbol> rep = atom;
                rep.push_back(f);
                add_rule(f, std::move(rep));
                atom = {f};
            } else if (c == '+') {
                take();
                const std::int32_t f = fresh_nt("star");
                add_rule(f, {});
                std::vector<Symbol> rep = atom;
                rep.push_back(f);
                add_rule(f, std::move(rep));
                atom.push_back(f);
            } else if (c == '?') {
                take();
                const std::int32_t f = fresh_nt("opt");
                add_rule(f, {});
                add_rule(f, std::move(atom));
                atom = {f};
            } else {
                break;
            }
        }
        return atom;
    }

    std::vector<Symbol> parse_atom() {
        const char c = peek();
        if (c == '"') return parse_literal();
        if (c == '[') return {parse_char_class()};
        if (c == '(') {
            take();
            auto alts = parse_alternation();
            skip_space();
            if (peek() != ')') fail("expected ')'");
            take();
            if (alts.size() == 1) return std::move(alts.front());
            const std::int32_t f = fresh_nt("group");
            for (auto& alt : alts) add_rule(f, std::move(alt));
            return {f};
        }
        if (is_name_char(c, true)) return {nt_id(parse_name())};
        fail("expected literal, character class, group, or symbol name");
    }

    char parse_escape() {
        take();  // backslash
        if (at_end()) fail("unterminated escape");
        const char e = take();
        switch (e) {
            case 'n': return '\n';
            case 't': return '\t';
            case '\\': return '\\';
            case '"': return '"';
            case ']': return ']';
            case '-': return '-';
            case '^': return '^';
            default: fail(std::string("unknown escape '\\") + e + "'");
        }
    }

    std::vector<Symbol> parse_literal() {
        take();  // opening quote
        std::vector<Symbol> seq;
        while (true) {
            if (at_end()) fail("unterminated string literal");
            const char c = peek();
            if (c == '"') {
                take();
                break;
            }
            const char out = (c == '\\') ? parse_escape() : take();
            if (!in_alphabet(out)) fail("character outside the printable-ASCII+newline+tab alphabet");
            g_.terminals.insert(out);
            seq.push_back(terminal_symbol(out));
        }
        return seq;
    }

    Symbol parse_char_class() {
        take();  // '['
        bool negated = false;
        if (peek() == '^') {
            take();
            negated = true;
        }
        std::set<char> members;
        bool first = true;
        while (true) {
            if (at_end()) fail("unterminated character class");
            if (peek() == ']' && !first) {
                take();
                break;
            }
            char lo = (peek() == '\\') ? parse_escape() : take();
            if (!in_alphabet(lo)) fail("character outside the printable-ASCII+newline+tab alphabet");
            if (peek() == '-' && peek(1) != ']') {
                take();
                char hi = (peek() == '\\') ? parse_escape() : take();
                if (!in_alphabet(hi)) fail("character outside the printable-ASCII+newline+tab alphabet");
                if (static_cast<unsigned char>(lo) > static_cast<unsigned char>(hi))
                    fail("character range out of order");
                for (int u = static_cast<unsigned char>(lo); u <= static_cast<unsigned char>(hi); ++u)
                    members.insert(static_cast<char>(u));
            } else {
                members.insert(lo);
            }
            first = false;
        }
        if (negated) {
            std::set<char> keep = full_alphabet();
            for (char m : members) keep.erase(m);
            members = std::move(keep);
        }
        if (members.empty()) fail("character class matches nothing");

        std::string signature(members.begin(), members.end());
        auto [it, fresh] = class_ids_.try_emplace(signature, 0);
        if (!fresh) return it->second;
        const std::int32_t f = fresh_nt("class");
        it->second = f;
        for (char m : members) {
            g_.terminals.insert(m);
            add_rule(f, {terminal_symbol(m)});
        }
        return f;
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;

    detail::GrammarData g_;
    std::unordered_map<std::string, std::int32_t> nt_ids_;
    std::map<std::string, std::int32_t> class_ids_;
    int fresh_counter_ = 0;
};

}  // namespace

Grammar::Grammar(detail::GrammarData data) : d_(std::move(data)) { analyze(); }

void Grammar::analyze() {
    const std::size_t n = d_.names.size();
    nullable_.assign(n, false);
    productive_.assign(n, false);
    rule_useful_.assign(d_.rules.size(), false);

    bool changed = true;
    while (changed) {
        changed = false;
        for (const Rule& r : d_.rules) {
            const auto lhs = static_cast<std::size_t>(r.lhs);
            if (!nullable_[lhs]) {
                bool all_nullable = true;
                for (Symbol s : r.body) {
                    if (symbol_is_terminal(s) || !nullable_[static_cast<std::size_t>(s)]) {
                        all_nullable = false;
                        break;
                    }
                }
                if (all_nullable) {
                    nullable_[lhs] = true;
                    changed = true;
                }
            }
            if (!productive_[lhs]) {
                bool all_productive = true;
                for (Symbol s : r.body) {
                    if (!symbol_is_terminal(s) && !productive_[static_cast<std::size_t>(s)]) {
                        all_productive = false;
                        break;
                    }
                }
                if (all_productive) {
                    productive_[lhs] = true;
                    changed = true;
                }
            }
        }
    }

    for (std::size_t i = 0; i < d_.rules.size(); ++i) {
        bool useful = true;
        for (Symbol s : d_.rules[i].body) {
            if (!symbol_is_terminal(s) && !productive_[static_cast<std::size_t>(s)]) {
                useful = false;
                break;
            }
        }
        rule_useful_[i] = useful;
    }
}

Grammar parse_ebnf(const std::string& text) { return EbnfParser(text).parse(); }

std::set<std::string> enumerate_language(const Grammar& g, std::size_t max_chars, std::size_t cap) {
    const std::size_t n = g.nonterminal_count();
    std::vector<std::set<std::string>> strings(n);

    const auto check_cap = [&](const std::set<std::string>& s) {
        if (s.size() > cap) throw BudgetExceeded(cap, "bounded language enumeration");
    };

    bool changed = true;
    while (changed) {
        changed = false;
        for (std::uint32_t ri = 0; ri < g.rules().size(); ++ri) {
            if (!g.rule_useful(ri)) continue;
            const Rule& r = g.rules()[ri];

            std::set<std::string> partial{""};
            for (Symbol s : r.body) {
                std::set<std::string> next;
                if (symbol_is_terminal(s)) {
                    const char c = terminal_char(s);
                    for (const std::string& p : partial) {
                        if (p.size() + 1 <= max_chars) next.insert(p + c);
                    }
                } else {
                    for (const std::string& p : partial) {
                        for (const std::string& q : strings[static_cast<std::size_t>(s)]) {
                            if (p.size() + q.size() <= max_chars) next.insert(p + q);
                        }
                    }
                }
                check_cap(next);
                partial = std::move(next);
                if (partial.empty()) break;
            }

            auto& dest = strings[static_cast<std::size_t>(r.lhs)];
            for (const std::string& w : partial) {
                if (dest.insert(w).second) changed = true;
            }
            check_cap(dest);
        }
    }
    return strings[static_cast<std::size_t>(g.start())];
}

std::string escape_text(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '"': out += "\\\""; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace grammcmc
