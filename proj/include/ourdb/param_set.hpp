#pragma once

#include <string>
#include <vector>

#include "ourdb/tensor.hpp"

namespace ourdb {

/// Flat, ordered collection of named parameter tensors. Student and teacher
/// hold structurally congruent ParamSets; iteration order is the contract
/// every elementwise update (EMA, AF-EMA, SGD) relies on.
struct ParamSet {
    struct Entry {
        std::string name;
        Tensor tensor;
    };
    std::vector<Entry> entries;

    size_t total_len() const {
        size_t n = 0;
        for (const auto& e : entries) n += static_cast<size_t>(e.tensor.size());
        return n;
    }

    void add(std::string name, Tensor t) {
        for (const auto& e : entries)
            detail::check(e.name != name, "param set: duplicate name '" + name + "'");
        entries.push_back({std::move(name), std::move(t)});
    }

    Tensor* find(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return &e.tensor;
        return nullptr;
    }

    void zero_grad() {
        for (auto& e : entries) e.tensor.zero_grad();
    }

    void set_requires_grad(bool b) {
        for (auto& e : entries) e.tensor.set_requires_grad(b);
    }

    bool congruent_with(const ParamSet& o) const {
        if (entries.size() != o.entries.size()) return false;
        for (size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].name != o.entries[i].name) return false;
            if (entries[i].tensor.shape() != o.entries[i].tensor.shape()) return false;
        }
        return true;
    }

    /// Concatenated parameter values in entry order; handy for bit-level
    /// comparisons in tests and for checkpoint payloads.
    std::vector<double> flatten_values() const {
        std::vector<double> out;
        out.reserve(total_len());
        for (const auto& e : entries)
            out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
        return out;
    }
};

/// Deep value copy. Grads are not copied and the clone does not require
/// grad; callers opt back in explicitly (e.g. for Fisher computation).
inline ParamSet clone_params(const ParamSet& src) {
    ParamSet out;
    out.entries.reserve(src.entries.size());
    for (const auto& e : src.entries) out.entries.push_back({e.name, e.tensor.deep_copy()});
    return out;
}

}  // namespace ourdb
