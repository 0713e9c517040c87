#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grammcmc/lm.hpp"

namespace grammcmc {

namespace {

// One row of {token-or-"<eos>": p} resolved against a vocabulary; missing
// entries are zero. Drift up to 1e-6 from unity is renormalized, anything
// larger is rejected.
std::vector<double> resolve_row(const nlohmann::json& probs, const Vocabulary& v,
                                const std::string& where) {
    if (!probs.is_object()) throw ConfigError(where + ": \"probs\" must be an object");
    std::vector<double> row(v.dist_size(), 0.0);
    double sum = 0.0;
    for (const auto& [key, val] : probs.items()) {
        if (!val.is_number()) throw ConfigError(where + ": probability for \"" + key + "\" is not a number");
        const double p = val.get<double>();
        if (!(p >= 0.0) || !std::isfinite(p))
            throw ConfigError(where + ": probability for \"" + key + "\" out of range");
        std::size_t id;
        if (key == kEosName) {
            id = v.eos_id();
        } else if (v.has(key)) {
            id = v.id_of(key);
        } else {
            throw ConfigError(where + ": unknown token \"" + key + "\"");
        }
        row[id] = p;
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw ConfigError(where + ": probabilities sum to " + std::to_string(sum) + ", expected 1");
    for (double& p : row) p /= sum;
    return row;
}

}  // namespace

TableLm::TableLm(Vocabulary v, std::unordered_map<std::string, std::vector<double>> rows,
                 std::vector<double> default_row, std::size_t max_context)
    : LanguageModel(std::move(v)),
      rows_(std::move(rows)),
      default_row_(std::move(default_row)),
      max_context_(max_context) {}

std::string TableLm::context_key(const std::vector<std::uint32_t>& ctx) {
    return std::string(reinterpret_cast<const char*>(ctx.data()), ctx.size() * sizeof(std::uint32_t));
}

TableLm TableLm::from_json_file(const std::string& path, const std::vector<std::string>& extra_tokens) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open table model file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str(), extra_tokens);
}

TableLm TableLm::from_json_text(const std::string& json_text,
                                const std::vector<std::string>& extra_tokens) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("table model is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("tokens") || !doc.contains("default"))
        throw ConfigError("table model needs \"tokens\" and a \"default\" row");

    std::vector<std::string> tokens = doc["tokens"].get<std::vector<std::string>>();
    for (const std::string& t : extra_tokens) {
        bool known = false;
        for (const std::string& existing : tokens) {
            if (existing == t) {
                known = true;
                break;
            }
        }
        if (!known) tokens.push_back(t);
    }
    Vocabulary vocab = make_vocabulary(std::move(tokens));

    std::unordered_map<std::string, std::vector<double>> rows;
    std::size_t max_context = 0;
    if (doc.contains("rows")) {
        for (std::size_t i = 0; i < doc["rows"].size(); ++i) {
            const auto& row = doc["rows"][i];
            const std::string where = "table row " + std::to_string(i);
            if (!row.contains("context") || !row.contains("probs"))
                throw ConfigError(where + ": needs \"context\" and \"probs\"");
            std::vector<std::uint32_t> ctx;
            for (const auto& tok : row["context"]) {
                const std::string name = tok.get<std::string>();
                if (!vocab.has(name)) throw ConfigError(where + ": unknown context token \"" + name + "\"");
                ctx.push_back(vocab.id_of(name));
            }
            max_context = std::max(max_context, ctx.size());
            rows[context_key(ctx)] = resolve_row(row["probs"], vocab, where);
        }
    }
    std::vector<double> default_row = resolve_row(doc["default"], vocab, "default row");
    return TableLm(std::move(vocab), std::move(rows), std::move(default_row), max_context);
}

NextTokenDist TableLm::next_dist(const Sequence& prefix) const {
    const std::size_t n = prefix.tokens.size();
    // longest matching suffix wins; the full prefix is tried first
    for (std::size_t len = std::min(max_context_, n) + 1; len-- > 0;) {
        std::vector<std::uint32_t> ctx(prefix.tokens.end() - static_cast<std::ptrdiff_t>(len),
                                       prefix.tokens.end());
        auto it = rows_.find(context_key(ctx));
        if (it != rows_.end()) return NextTokenDist{it->second};
    }
    return NextTokenDist{default_row_};
}

}  // namespace grammcmc
