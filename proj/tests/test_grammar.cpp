#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"

using namespace testutil;

namespace {

std::shared_ptr<const Grammar> parse(const std::string& text) {
    return std::make_shared<const Grammar>(parse_ebnf(text));
}

// iterated try_advance over a raw string, from the initial state
std::optional<RecognizerState> recognize(const std::shared_ptr<const Grammar>& g,
                                         const std::string& u) {
    return recognizer_init(g).try_advance_all(u);
}

}  // namespace

TEST_CASE("parse_ebnf transcribes a two-word grammar") {
    auto g = parse("root ::= \"00\" | \"11\"");
    CHECK(g->rules_of(g->start()).size() == 2);
    CHECK(g->terminals() == std::set<char>{'0', '1'});
    CHECK(g->nonterminal_name(g->start()) == "root");
}

TEST_CASE("kleene star desugars to a fresh nullable nonterminal") {
    auto g = parse("a ::= \"x\"*");
    CHECK(enumerate_language(*g, 3) == std::set<std::string>{"", "x", "xx", "xxx"});
    CHECK(g->nullable(g->start()));
}

TEST_CASE("plus and optional postfixes") {
    auto g = parse("a ::= \"x\"+ \"y\"?");
    CHECK(enumerate_language(*g, 3) ==
          std::set<std::string>{"x", "xy", "xx", "xxy", "xxx"});
}

TEST_CASE("grouping and nested alternation") {
    auto g = parse("a ::= (\"0\" | \"1\") (\"a\" \"b\")*");
    CHECK(enumerate_language(*g, 3) ==
          std::set<std::string>{"0", "1", "0ab", "1ab"});
}

TEST_CASE("character classes, ranges and negation") {
    auto g = parse("d ::= [0-2]");
    CHECK(enumerate_language(*g, 1) == std::set<std::string>{"0", "1", "2"});

    auto neg = parse("n ::= [^-]");
    const auto words = enumerate_language(*neg, 1);
    CHECK(words.size() == 96);  // printable ASCII + newline + tab, minus '-'
    CHECK(!words.contains("-"));
    CHECK(words.contains("\n"));
    CHECK(words.contains("\t"));
    CHECK(words.contains(" "));
}

TEST_CASE("literal escapes") {
    auto g = parse(R"(s ::= "\"\\" "\n" "\t")");
    CHECK(enumerate_language(*g, 8) == std::set<std::string>{"\"\\\n\t"});
}

TEST_CASE("comments and whitespace are ignored between symbols") {
    auto g = parse("a ::= # trailing comment\n  \"x\"   # more\n    | \"y\"\n");
    CHECK(enumerate_language(*g, 1) == std::set<std::string>{"x", "y"});
}

TEST_CASE("undefined nonterminal is reported by name") {
    CHECK_THROWS_AS(parse("a ::= b"), UndefinedNonterminal);
    try {
        parse("a ::= b");
    } catch (const UndefinedNonterminal& e) {
        CHECK(e.name == "b");
    }
}

TEST_CASE("empty grammar and syntax errors") {
    CHECK_THROWS_AS(parse(""), EmptyGrammar);
    CHECK_THROWS_AS(parse("# only a comment\n"), EmptyGrammar);
    CHECK_THROWS_AS(parse("a ::= \"unclosed"), SyntaxError);
    CHECK_THROWS_AS(parse("a ::= )"), SyntaxError);
    CHECK_THROWS_AS(parse("a \"x\""), SyntaxError);

    try {
        parse("a ::= \"x\"\na ::= \"y\"\n");
        FAIL("start redefinition must be rejected");
    } catch (const SyntaxError& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("syntax error carries line and column") {
    try {
        parse("a ::= \"x\"\nb ::= @\n");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.line == 2);
        CHECK(e.col == 7);
    }
}

TEST_CASE("non-start nonterminals may accumulate alternatives across rule lines") {
    auto g = parse("root ::= b\nb ::= \"x\"\nb ::= \"y\"\n");
    CHECK(enumerate_language(*g, 1) == std::set<std::string>{"x", "y"});
}

TEST_CASE("recognizer_init flags") {
    auto g1 = load_grammar("g1.ebnf");
    const RecognizerState s = recognizer_init(g1);
    CHECK(s.viable());
    CHECK(!s.complete());

    auto eps = parse("a ::= \"\"");
    CHECK(recognizer_init(eps).complete());

    auto unproductive = parse("a ::= a");
    CHECK_THROWS_AS(recognizer_init(unproductive), EmptyLanguage);
}

TEST_CASE("advance against the enumeration oracle on G1") {
    auto g1 = load_grammar("g1.ebnf");
    const auto words = enumerate_language(*g1, 2);
    CHECK(words == std::set<std::string>{"00", "11"});

    auto s0 = recognize(g1, "0");
    REQUIRE(s0);
    auto s00 = s0->try_advance('0');
    REQUIRE(s00);
    CHECK(s00->complete());

    CHECK(!s0->try_advance('1'));
    CHECK_THROWS_AS(s0->advance('1'), DeadEnd);

    auto s1 = recognize(g1, "1");
    REQUIRE(s1);
    CHECK(!s1->complete());
}

TEST_CASE("enumerate_language examples and budget") {
    auto g1 = load_grammar("g1.ebnf");
    CHECK(enumerate_language(*g1, 1).empty());

    auto star = load_grammar("gstar.ebnf");
    CHECK(enumerate_language(*star, 3) == std::set<std::string>{"", "x", "xx", "xxx"});
    CHECK_THROWS_AS(enumerate_language(*star, 50, 10), BudgetExceeded);
}

TEST_CASE("left recursion recognizes and enumerates") {
    auto g = parse("a ::= a \"x\" | \"x\"");
    CHECK(enumerate_language(*g, 3) == std::set<std::string>{"x", "xx", "xxx"});
    auto s = recognize(g, "xxx");
    REQUIRE(s);
    CHECK(s->complete());
}

TEST_CASE("nullable chains complete through epsilon derivations") {
    auto g = parse("s ::= a b\na ::= \"\"\nb ::= \"y\"?");
    CHECK(recognizer_init(g).complete());
    CHECK(enumerate_language(*g, 4) == std::set<std::string>{"", "y"});
}

TEST_CASE("unproductive rules are pruned from recognition") {
    auto g = parse("root ::= \"a\" | u \"b\"\nu ::= u");
    CHECK(enumerate_language(*g, 4) == std::set<std::string>{"a"});
    const RecognizerState s = recognizer_init(g);
    CHECK(s.try_advance('a'));
    CHECK(!s.try_advance('b'));  // only reachable through the unproductive branch
}

// Prefix soundness/completeness, cross-checked by brute force: iterated
// advance succeeds iff the string extends to an enumerated word, and the
// complete flag agrees with word membership.
static void check_prefix_contract(const std::shared_ptr<const Grammar>& g,
                                  const std::string& alphabet, std::size_t max_len,
                                  std::size_t enum_len) {
    const auto words = enumerate_language(*g, enum_len);

    std::vector<std::string> frontier{""};
    for (std::size_t len = 0; len <= max_len; ++len) {
        std::vector<std::string> next;
        for (const std::string& u : frontier) {
            const auto state = recognize(g, u);
            CHECK(state.has_value() == oracle::is_lang_prefix(words, u));
            if (state) CHECK(state->complete() == oracle::is_word(words, u));
            if (u.size() == max_len) continue;
            for (char c : alphabet) next.push_back(u + c);
        }
        frontier = std::move(next);
    }
}

TEST_CASE("prefix language matches brute force") {
    check_prefix_contract(load_grammar("g1.ebnf"), "01", 12, 16);
    check_prefix_contract(load_grammar("gstar.ebnf"), "x", 12, 16);
    check_prefix_contract(load_grammar("gexpr.ebnf"), "()", 8, 16);
}

TEST_CASE("states are persistent snapshots") {
    auto g = load_grammar("gexpr.ebnf");
    const RecognizerState base = *recognize(g, "((");
    CHECK(base.consumed() == 2);

    // two different continuations from one snapshot
    const RecognizerState closed = *base.try_advance_all("))");
    CHECK(closed.complete());
    const RecognizerState deeper = *base.try_advance('(');
    CHECK(!deeper.complete());
    CHECK(deeper.consumed() == 3);

    // the shared snapshot is unchanged
    CHECK(base.consumed() == 2);
    CHECK(!base.complete());
    CHECK(base.try_advance(')').has_value());
}

TEST_CASE("recognition is deterministic") {
    auto g = load_grammar("gexpr.ebnf");
    for (const std::string& probe : {"", "(", "(()", "(())()", "(((", "()()"}) {
        const auto a = recognize(g, probe);
        const auto b = recognize(g, probe);
        REQUIRE(a.has_value() == b.has_value());
        if (!a) continue;
        CHECK(a->complete() == b->complete());
        for (char c : {'(', ')'}) {
            CHECK(a->try_advance(c).has_value() == b->try_advance(c).has_value());
        }
    }
}

TEST_CASE("escape_text round trips the literal syntax") {
    CHECK(escape_text("a\"b\\c\nd\te") == "a\\\"b\\\\c\\nd\\te");
    CHECK(escape_text("plain") == "plain");
}
