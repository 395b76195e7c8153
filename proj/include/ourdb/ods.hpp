#pragma once

#include <string>
#include <vector>

#include "ourdb/errors.hpp"
#include "ourdb/tensor.hpp"

namespace ourdb {

struct SwitchEvent {
    int epoch = 0;  // epochs completed when the switch fired
    std::string from;
    std::string to;
};

/// Epoch-based cyclic selector over the target domains: exactly one domain
/// is active at a time, and completing an epoch advances the cursor.
/// Iteration-based switching is intentionally not offered.
struct OdsState {
    std::vector<std::string> order;
    int cursor = 0;
    int epochs_completed = 0;

    static OdsState create(std::vector<std::string> order) {
        detail::check(!order.empty(), "ods: need at least one target domain");
        for (size_t i = 0; i < order.size(); ++i)
            for (size_t j = i + 1; j < order.size(); ++j)
                detail::check(order[i] != order[j], "ods: duplicate domain id '" + order[i] + "'");
        OdsState s;
        s.order = std::move(order);
        return s;
    }

    const std::string& current_domain() const { return order[cursor]; }

    SwitchEvent on_epoch_complete() {
        SwitchEvent ev;
        ev.from = current_domain();
        ++epochs_completed;
        ev.epoch = epochs_completed;
        cursor = (cursor + 1) % static_cast<int>(order.size());
        ev.to = current_domain();
        return ev;
    }
};

}  // namespace ourdb
