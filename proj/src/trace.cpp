#include "grammcmc/trace.hpp"

#include <map>
#include <ostream>
#include <istream>
#include <string>

#include <json.hpp>

#include "grammcmc/grammar.hpp"

namespace grammcmc {

namespace {

nlohmann::json sequence_json(const Vocabulary& v, const Sequence& w) {
    nlohmann::json toks = nlohmann::json::array();
    for (std::uint32_t t : w.tokens) toks.push_back(v.token(t));
    return toks;
}

}  // namespace

void write_trace_jsonl(std::ostream& out, const Vocabulary& v, const ChainTrace& trace,
                       std::uint64_t chain_id) {
    if (trace.states.empty()) return;

    nlohmann::json head;
    head["step"] = 0;
    head["chain"] = chain_id;
    head["state"] = escape_text(sequence_text(v, trace.states.front()));
    head["tokens"] = sequence_json(v, trace.states.front());
    head["proposal"] = nullptr;
    head["log_qf"] = nullptr;
    head["log_qr"] = nullptr;
    head["alpha"] = nullptr;
    head["accepted"] = nullptr;
    out << head.dump() << '\n';

    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        const ChainStep& step = trace.steps[s];
        nlohmann::json line;
        line["step"] = s + 1;
        line["chain"] = chain_id;
        line["state"] = escape_text(sequence_text(v, trace.states[s + 1]));
        line["tokens"] = sequence_json(v, trace.states[s + 1]);
        if (step.proposal) {
            line["proposal"] = escape_text(sequence_text(v, *step.proposal));
            line["log_qf"] = step.log_qf;
            line["log_qr"] = step.log_qr;
        } else {
            line["proposal"] = nullptr;
            line["log_qf"] = nullptr;
            line["log_qr"] = nullptr;
            line["length_exceeded"] = true;
        }
        line["alpha"] = step.alpha;
        line["accepted"] = step.accepted;
        line["truncation_pos"] = step.truncation_pos;
        out << line.dump() << '\n';
    }
}

void write_traces_jsonl(std::ostream& out, const Vocabulary& v,
                        std::span<const ChainTrace> traces) {
    for (std::size_t i = 0; i < traces.size(); ++i) write_trace_jsonl(out, v, traces[i], i);
}

std::vector<Sequence> read_final_states_jsonl(std::istream& in, const Vocabulary& v) {
    std::map<std::uint64_t, std::pair<std::uint64_t, Sequence>> latest;  // chain -> (step, state)

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("trace line " + std::to_string(line_no) + " is not valid JSON: " +
                              e.what());
        }
        if (!doc.contains("chain") || !doc.contains("step") || !doc.contains("tokens"))
            throw ConfigError("trace line " + std::to_string(line_no) + " is missing fields");

        Sequence w;
        w.terminated = true;
        for (const auto& tok : doc["tokens"]) {
            const std::string name = tok.get<std::string>();
            if (!v.has(name))
                throw ConfigError("trace line " + std::to_string(line_no) +
                                  " names a token unknown to the model: \"" + name + "\"");
            w.tokens.push_back(v.id_of(name));
        }

        const auto chain = doc["chain"].get<std::uint64_t>();
        const auto step = doc["step"].get<std::uint64_t>();
        auto [it, fresh] = latest.try_emplace(chain, step, w);
        if (!fresh && step >= it->second.first) it->second = {step, std::move(w)};
    }

    std::vector<Sequence> out;
    out.reserve(latest.size());
    for (auto& [chain, entry] : latest) out.push_back(std::move(entry.second));
    return out;
}

}  // namespace grammcmc
