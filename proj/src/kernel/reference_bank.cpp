#include "drift/kernel/reference_bank.hpp"

#include "drift/core/error.hpp"

#include <string>

namespace drift {

ReferenceBank::ReferenceBank(int history) : history_(history) {
    if (history < 0) {
        throw ConfigError("reference bank history must be nonnegative");
    }
}

void ReferenceBank::insert(BankEntry entry) {
    if (!entries_.empty() && entry.frame_index <= entries_.back().frame_index) {
        throw ConfigError("reference bank: frame " + std::to_string(entry.frame_index) +
                          " inserted after frame " + std::to_string(entries_.back().frame_index));
    }
    entries_.push_back(std::move(entry));
    while (static_cast<int>(entries_.size()) > capacity()) {
        entries_.erase(entries_.begin() + 1);
    }
}

std::vector<int> ReferenceBank::frame_indices() const {
    std::vector<int> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.push_back(e.frame_index);
    }
    return out;
}

const BankEntry& ReferenceBank::find(int frame_index) const {
    for (const auto& e : entries_) {
        if (e.frame_index == frame_index) {
            return e;
        }
    }
    throw ConfigError("reference bank has no frame " + std::to_string(frame_index));
}

ReferenceBank& bank_update(ReferenceBank& bank, int frame_index, std::vector<QueryKeySet> keys,
                           FeatureSet features, SoftMaskStack stack) {
    bank.insert(BankEntry{frame_index, std::move(keys), std::move(features), std::move(stack)});
    return bank;
}

} // namespace drift
