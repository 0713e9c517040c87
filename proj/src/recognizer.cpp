#include "grammcmc/recognizer.hpp"

#include <set>

namespace grammcmc {

using detail::EarleyItem;
using detail::ItemSet;

namespace {

// Close a kernel under prediction and completion. Prediction is nullable-aware
// (predicting a nullable nonterminal also advances the predicting item past
// it), so the completer never has to look up parents in the set under
// construction: any item finishing with origin == here derives epsilon and its
// parents were advanced at prediction time.
std::shared_ptr<const ItemSet> close_kernel(const Grammar& g, std::vector<EarleyItem> kernel,
                                            const std::vector<std::shared_ptr<const ItemSet>>& chart) {
    const auto here = static_cast<std::uint32_t>(chart.size());
    std::set<EarleyItem> items;
    std::vector<EarleyItem> work;
    bool complete = false;

    const auto push = [&](EarleyItem item) {
        if (items.insert(item).second) work.push_back(item);
    };
    for (EarleyItem item : kernel) push(item);

    while (!work.empty()) {
        const EarleyItem item = work.back();
        work.pop_back();
        const Rule& rule = g.rules()[item.rule];

        if (item.dot == rule.body.size()) {
            if (rule.lhs == g.start() && item.origin == 0) complete = true;
            if (item.origin == here) continue;  // epsilon-width: parents already advanced
            for (const EarleyItem& parent : chart[item.origin]->items) {
                const Rule& prule = g.rules()[parent.rule];
                if (parent.dot < prule.body.size() && prule.body[parent.dot] == rule.lhs)
                    push({parent.rule, parent.dot + 1, parent.origin});
            }
            continue;
        }

        const Symbol next = rule.body[item.dot];
        if (symbol_is_terminal(next)) continue;  // waits for a scan
        for (std::uint32_t ri : g.rules_of(next)) {
            if (g.rule_useful(ri)) push({ri, 0, here});
        }
        if (g.nullable(next)) push({item.rule, item.dot + 1, item.origin});
    }

    auto set = std::make_shared<ItemSet>();
    set->items.assign(items.begin(), items.end());
    set->complete = complete;
    return set;
}

}  // namespace

std::optional<RecognizerState> RecognizerState::try_advance(char c) const {
    const Grammar& g = *grammar_;
    const Symbol sym = terminal_symbol(c);

    std::vector<EarleyItem> kernel;
    for (const EarleyItem& item : chart_.back()->items) {
        const Rule& rule = g.rules()[item.rule];
        if (item.dot < rule.body.size() && rule.body[item.dot] == sym)
            kernel.push_back({item.rule, item.dot + 1, item.origin});
    }
    if (kernel.empty()) return std::nullopt;

    std::vector<std::shared_ptr<const ItemSet>> next_chart = chart_;
    next_chart.push_back(close_kernel(g, std::move(kernel), chart_));
    return RecognizerState(grammar_, std::move(next_chart));
}

RecognizerState RecognizerState::advance(char c) const {
    auto next = try_advance(c);
    if (!next) throw DeadEnd(c);
    return *std::move(next);
}

std::optional<RecognizerState> RecognizerState::try_advance_all(std::string_view text) const {
    std::optional<RecognizerState> state(*this);
    for (char c : text) {
        state = state->try_advance(c);
        if (!state) return std::nullopt;
    }
    return state;
}

bool RecognizerState::can_scan(char c) const {
    const Grammar& g = *grammar_;
    const Symbol sym = terminal_symbol(c);
    for (const EarleyItem& item : chart_.back()->items) {
        const Rule& rule = g.rules()[item.rule];
        if (item.dot < rule.body.size() && rule.body[item.dot] == sym) return true;
    }
    return false;
}

bool RecognizerState::can_advance_all(std::string_view text) const {
    if (text.empty()) return true;
    if (text.size() == 1) return can_scan(text[0]);
    std::optional<RecognizerState> state(*this);
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        state = state->try_advance(text[i]);
        if (!state) return false;
    }
    return state->can_scan(text.back());
}

RecognizerState recognizer_init(std::shared_ptr<const Grammar> g) {
    if (!g->productive(g->start())) throw EmptyLanguage();

    std::vector<EarleyItem> kernel;
    for (std::uint32_t ri : g->rules_of(g->start())) {
        if (g->rule_useful(ri)) kernel.push_back({ri, 0, 0});
    }
    std::vector<std::shared_ptr<const ItemSet>> chart;
    chart.push_back(close_kernel(*g, std::move(kernel), chart));
    return RecognizerState(std::move(g), std::move(chart));
}

}  // namespace grammcmc
