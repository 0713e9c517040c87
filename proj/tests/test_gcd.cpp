#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "test_util.hpp"

using namespace testutil;

namespace {

struct G1 {
    std::shared_ptr<const Grammar> g = load_grammar("g1.ebnf");
    std::shared_ptr<const LanguageModel> m = table_lm("m1_g1.json", *g);
    std::set<std::string> words = enumerate_language(*g, 2);
    RecognizerState root = recognizer_init(g);
};

}  // namespace

TEST_CASE("masked_step on G1/M1 matches the enumeration oracle") {
    G1 f;
    const Vocabulary& v = f.m->vocab();
    const auto id0 = v.id_of("0"), id1 = v.id_of("1");

    // empty prefix: eos masked out, (0.7, 0.2) renormalized
    const MaskedStep s0 = masked_step(*f.m, f.root, {});
    CHECK(s0.dist[id0] == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
    CHECK(s0.dist[id1] == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
    CHECK(s0.dist[v.eos_id()] == 0.0);
    CHECK(s0.mask[id0]);
    CHECK(!s0.mask[v.eos_id()]);
    CHECK(std::vector<double>(s0.dist.probs) == oracle::masked_dist(*f.m, f.words, {}));

    // prefix "0": only "00" completes
    const Sequence p0 = seq_chars(v, "0", false);
    const MaskedStep s1 = masked_step(*f.m, *f.root.try_advance('0'), p0);
    CHECK(s1.dist[id0] == doctest::Approx(1.0));
    CHECK(s1.dist[id1] == 0.0);
    CHECK(s1.dist[v.eos_id()] == 0.0);

    // prefix "00": eos forced
    const Sequence p00 = seq_chars(v, "00", false);
    const MaskedStep s2 = masked_step(*f.m, *f.root.try_advance_all("00"), p00);
    CHECK(s2.dist[v.eos_id()] == doctest::Approx(1.0));
    CHECK(s2.masked_in == 1);
}

TEST_CASE("masked_step failure modes") {
    G1 f;
    // vocabulary that covers no viable continuation
    const UniformLm bad(make_vocabulary({"2"}));
    CHECK_THROWS_AS(masked_step(bad, f.root, {}), MaskEmpty);

    // model that puts zero mass on the only valid token
    const TableLm zero = TableLm::from_json_text(
        R"({"tokens": ["0", "1"], "default": {"1": 0.9, "<eos>": 0.1}})");
    const Sequence p0 = seq_chars(zero.vocab(), "0", false);
    CHECK_THROWS_AS(masked_step(zero, *f.root.try_advance('0'), p0), ZeroMass);
}

TEST_CASE("monotone masking: valid tokens only gain probability") {
    auto g = load_grammar("gexpr.ebnf");
    auto m = bigram_lm("corpus_gexpr.txt", *g);
    const RecognizerState root = recognizer_init(g);

    RngStream rng(11, 0);
    for (int trial = 0; trial < 100; ++trial) {
        // random viable prefix
        Sequence prefix;
        RecognizerState state = root;
        const std::size_t len = rng.next_u64() % 7;
        for (std::size_t i = 0; i < len; ++i) {
            const MaskedStep step = masked_step(*m, state, prefix);
            std::size_t pick = rng.sample_index(step.dist.probs);
            if (pick == m->vocab().eos_id()) break;
            state = *state.try_advance_all(m->vocab().token(static_cast<std::uint32_t>(pick)));
            prefix.tokens.push_back(static_cast<std::uint32_t>(pick));
        }
        const NextTokenDist raw = m->next_dist(prefix);
        const MaskedStep step = masked_step(*m, state, prefix);
        for (std::size_t t = 0; t < step.dist.size(); ++t) {
            if (step.mask[t]) CHECK(step.dist[t] >= raw[t] - 1e-15);
        }
    }
}

TEST_CASE("gcd_sample frequencies match the analytic product") {
    G1 f;
    const Vocabulary& v = f.m->vocab();
    RngStream rng(42, 9);

    std::map<std::string, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const GcdSample s = gcd_sample(*f.m, f.g, {}, rng, 16);
        ++counts[sequence_text(v, s.seq)];
        CHECK(s.seq.terminated);
    }
    CHECK(counts.size() == 2);
    CHECK(static_cast<double>(counts["00"]) / n == doctest::Approx(7.0 / 9.0).epsilon(0.013));
    CHECK(static_cast<double>(counts["11"]) / n == doctest::Approx(2.0 / 9.0).epsilon(0.05));
}

TEST_CASE("forced continuations carry zero log probability") {
    G1 f;
    const Vocabulary& v = f.m->vocab();
    RngStream rng(1, 1);

    const Sequence p1 = seq_chars(v, "1", false);
    for (int i = 0; i < 20; ++i) {
        const GcdSample s = gcd_sample(*f.m, f.g, p1, rng, 16);
        CHECK(sequence_text(v, s.seq) == "11");
        CHECK(s.gcd_logprob == doctest::Approx(0.0).epsilon(1e-12));
    }

    auto singleton = std::make_shared<const Grammar>(parse_ebnf("s ::= \"ab\""));
    const UniformLm u(make_vocabulary({"a", "b"}));
    const GcdSample s = gcd_sample(u, singleton, {}, rng, 16);
    CHECK(sequence_text(u.vocab(), s.seq) == "ab");
    CHECK(s.gcd_logprob == doctest::Approx(0.0));
}

TEST_CASE("gcd_continuation_logprob examples and score consistency") {
    G1 f;
    const Vocabulary& v = f.m->vocab();

    const Sequence w11 = seq_chars(v, "11");
    CHECK(gcd_continuation_logprob(*f.m, f.g, w11, 0) ==
          doctest::Approx(std::log(2.0 / 9.0)).epsilon(1e-12));

    const Sequence w00 = seq_chars(v, "00");
    CHECK(gcd_continuation_logprob(*f.m, f.g, w00, 1) == doctest::Approx(0.0));
    CHECK(gcd_continuation_logprob(*f.m, f.g, w00, 2) == doctest::Approx(0.0));

    Sequence w01 = seq_chars(v, "01");
    CHECK_THROWS_AS(gcd_continuation_logprob(*f.m, f.g, w01, 0), NotInLanguage);

    // sampled scores equal the independent recomputation
    RngStream rng(3, 3);
    for (int i = 0; i < 50; ++i) {
        const GcdSample s = gcd_sample(*f.m, f.g, {}, rng, 16);
        CHECK(s.gcd_logprob ==
              doctest::Approx(gcd_continuation_logprob(*f.m, f.g, s.seq, 0)).epsilon(1e-10));
        CHECK(s.gcd_logprob ==
              doctest::Approx(oracle::gcd_logprob(*f.m, f.words, s.seq)).epsilon(1e-10));
        CHECK(s.gcd_logprob >= s.lm_logprob);  // masking only grows factors
    }
}

TEST_CASE("continuation scores agree with the oracle on a context-dependent model") {
    auto g = load_grammar("gexpr.ebnf");
    auto m = bigram_lm("corpus_gexpr.txt", *g);
    const auto words = enumerate_language(*g, 12);

    RngStream rng(17, 0);
    for (int i = 0; i < 40; ++i) {
        auto scored = ScoredSequence::sample(*m, recognizer_init(g), rng, 8);
        if (!scored) continue;
        const Sequence w = scored->seq();
        for (std::size_t from = 0; from <= w.size(); ++from) {
            CHECK(gcd_continuation_logprob(*m, g, w, from) ==
                  doctest::Approx(oracle::gcd_logprob(*m, words, w, from)).epsilon(1e-10));
        }
    }
}

TEST_CASE("length cap is surfaced, never silently truncated") {
    auto g = std::make_shared<const Grammar>(parse_ebnf("s ::= \"x\" \"x\" \"x\" \"x\""));
    const UniformLm u(make_vocabulary({"x"}));
    RngStream rng(5, 5);
    CHECK_THROWS_AS(gcd_sample(u, g, {}, rng, 2), LengthExceeded);
    CHECK_THROWS_AS(gcd_sample(u, g, {}, rng, 0), ConfigError);  // cap below prefix

    // a cap exactly at the word length still succeeds (eos is not a content token)
    const GcdSample s = gcd_sample(u, g, {}, rng, 4);
    CHECK(s.seq.tokens.size() == 4);
}

TEST_CASE("rejection sampling statistics and errors") {
    G1 f;
    RngStream rng(42, 21);

    // acceptance probability is P(00$) + P(11$) = 0.053
    std::size_t attempts = 0, accepted = 0;
    while (attempts < 20000) {
        const RejectionResult r = rejection_sample(*f.m, f.g, rng, 100000, 16);
        attempts += r.attempts;
        ++accepted;
        CHECK(f.words.contains(sequence_text(f.m->vocab(), r.seq)));
    }
    CHECK(static_cast<double>(accepted) / static_cast<double>(attempts) ==
          doctest::Approx(0.053).epsilon(0.12));

    // exhaustion on a rarely-hit grammar
    auto hard = std::make_shared<const Grammar>(parse_ebnf("s ::= \"11\""));
    RngStream rng2(7, 7);
    CHECK_THROWS_AS(rejection_sample(*f.m, hard, rng2, 1, 16), Exhausted);
    CHECK_THROWS_AS(rejection_sample(*f.m, f.g, rng2, 0, 16), ConfigError);

    // a grammar accepting everything the model can emit accepts immediately
    auto all = std::make_shared<const Grammar>(parse_ebnf("s ::= [01]*"));
    RngStream rng3(7, 8);
    for (int i = 0; i < 20; ++i) CHECK(rejection_sample(*f.m, all, rng3, 10, 64).attempts == 1);
}
