#pragma once

#include <iosfwd>
#include <span>

#include "grammcmc/mcmc.hpp"

namespace grammcmc {

/// JSON-lines trace: one line per step with fields (step, chain, state,
/// tokens, proposal, log_qf, log_qr, alpha, accepted). The step-0 line carries
/// the initial state with null step fields. `state` is the escaped character
/// string of w_i; `tokens` spells the same state as token strings so a reader
/// does not have to re-tokenize.
void write_trace_jsonl(std::ostream& out, const Vocabulary& v, const ChainTrace& trace,
                       std::uint64_t chain_id);

void write_traces_jsonl(std::ostream& out, const Vocabulary& v, std::span<const ChainTrace> traces);

/// Final state of every chain in a JSONL trace stream, ordered by chain id.
/// Throws ConfigError on tokens unknown to `v` or malformed lines.
std::vector<Sequence> read_final_states_jsonl(std::istream& in, const Vocabulary& v);

}  // namespace grammcmc
