#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace grammcmc {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// grammar
struct SyntaxError : Error {
    int line, col;
    SyntaxError(int line_, int col_, const std::string& msg)
        : Error("syntax error at " + std::to_string(line_) + ":" + std::to_string(col_) + ": " + msg),
          line(line_), col(col_) {}
};

struct UndefinedNonterminal : Error {
    std::string name;
    explicit UndefinedNonterminal(std::string name_)
        : Error("undefined nonterminal '" + name_ + "'"), name(std::move(name_)) {}
};

struct EmptyGrammar : Error {
    EmptyGrammar() : Error("grammar has no rules") {}
};

struct EmptyLanguage : Error {
    EmptyLanguage() : Error("no string is derivable from the start nonterminal") {}
};

struct DeadEnd : Error {
    explicit DeadEnd(char c)
        : Error(std::string("character '") + c + "' leaves the grammar's prefix language") {}
};

struct BudgetExceeded : Error {
    std::size_t cap;
    explicit BudgetExceeded(std::size_t cap_, const std::string& what_exceeded)
        : Error(what_exceeded + " exceeds cap of " + std::to_string(cap_)), cap(cap_) {}
};

// lm
struct EmptyCorpus : Error {
    EmptyCorpus() : Error("training corpus is empty") {}
};

struct TransportError : Error {
    using Error::Error;
};

struct ProtocolViolation : Error {
    using Error::Error;
};

struct TimeoutError : Error {
    using Error::Error;
};

// gcd
struct MaskEmpty : Error {
    MaskEmpty() : Error("no vocabulary token is grammar-valid at this step (vocabulary is not character-closed)") {}
};

struct ZeroMass : Error {
    ZeroMass() : Error("all grammar-valid tokens have zero model probability") {}
};

struct LengthExceeded : Error {
    std::size_t max_tokens;
    explicit LengthExceeded(std::size_t max_tokens_)
        : Error("sequence exceeded " + std::to_string(max_tokens_) + " content tokens without end marker"),
          max_tokens(max_tokens_) {}
};

struct NotInLanguage : Error {
    NotInLanguage() : Error("sequence is not in the grammar's language") {}
};

struct Exhausted : Error {
    std::size_t attempts;
    explicit Exhausted(std::size_t attempts_)
        : Error("no valid sample after " + std::to_string(attempts_) + " attempts"), attempts(attempts_) {}
};

// eval
struct DegenerateTarget : Error {
    DegenerateTarget() : Error("model assigns zero probability to every sequence in the language") {}
};

struct InsufficientRuns : Error {
    using Error::Error;
};

struct ZeroModelMass : Error {
    explicit ZeroModelMass(const std::string& seq)
        : Error("model assigns zero probability to observed sequence \"" + seq + "\"") {}
};

// cli / file loading
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace grammcmc
