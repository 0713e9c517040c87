#include <cmath>

#include <httplib.h>
#include <json.hpp>

#include "grammcmc/lm.hpp"

namespace grammcmc {

RemoteLm::RemoteLm(Vocabulary v, std::string base_url, int timeout_ms)
    : LanguageModel(std::move(v)), host_(std::move(base_url)), port_(-1), timeout_ms_(timeout_ms) {
    // host_ keeps the full scheme://host:port form; httplib parses it
}

NextTokenDist RemoteLm::next_dist(const Sequence& prefix) const {
    nlohmann::json body;
    body["prefix"] = nlohmann::json::array();
    for (std::uint32_t t : prefix.tokens) body["prefix"].push_back(vocab().token(t));

    httplib::Client client(host_);
    client.set_connection_timeout(0, timeout_ms_ * 1000);
    client.set_read_timeout(0, timeout_ms_ * 1000);
    client.set_write_timeout(0, timeout_ms_ * 1000);

    const httplib::Result res = client.Post("/v1/next_dist", body.dump(), "application/json");
    if (!res) {
        const httplib::Error err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
            err == httplib::Error::Write)
            throw TimeoutError("remote model timed out after " + std::to_string(timeout_ms_) + " ms");
        throw TransportError("remote model unreachable: " + httplib::to_string(err));
    }
    if (res->status != 200)
        throw TransportError("remote model returned HTTP " + std::to_string(res->status));

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolViolation(std::string("response is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("probs") || !doc["probs"].is_object())
        throw ProtocolViolation("response is missing the \"probs\" object");

    NextTokenDist d{std::vector<double>(vocab().dist_size(), -1.0)};
    for (const auto& [key, val] : doc["probs"].items()) {
        std::size_t id;
        if (key == kEosName) {
            id = vocab().eos_id();
        } else if (vocab().has(key)) {
            id = vocab().id_of(key);
        } else {
            throw ProtocolViolation("response names unknown token \"" + key + "\"");
        }
        if (!val.is_number()) throw ProtocolViolation("probability for \"" + key + "\" is not a number");
        const double p = val.get<double>();
        if (!std::isfinite(p) || p < 0.0)
            throw ProtocolViolation("probability for \"" + key + "\" out of range");
        d.probs[id] = p;
    }

    double sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.probs[i] < 0.0) {
            const std::string name = i == vocab().eos_id() ? kEosName : vocab().token(static_cast<std::uint32_t>(i));
            throw ProtocolViolation("response is missing token \"" + name + "\"");
        }
        sum += d.probs[i];
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw ProtocolViolation("response probabilities sum to " + std::to_string(sum));
    for (double& p : d.probs) p /= sum;  // renormalize residual drift
    return d;
}

}  // namespace grammcmc
