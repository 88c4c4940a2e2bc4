#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace biphoton {

/// Canonical identity of an optical mode. Labels that are registered as
/// aliases of each other resolve to the same id, so operator algebra and
/// Fock-space bookkeeping never see the aliased names at all.
struct ModeId {
    std::uint32_t value = 0;

    friend constexpr bool operator==(const ModeId&, const ModeId&) = default;
    friend constexpr auto operator<=>(const ModeId&, const ModeId&) = default;
};

/// A labelled handle onto a canonical mode. Two refs with different labels
/// may carry the same id (e.g. the idler reused by a downstream crystal).
struct ModeRef {
    ModeId id;
    std::string label;
    std::optional<double> frequency;  // angular frequency, rad/s; metadata only
};

/// Registry of mode labels. Aliasing is resolved here, at registration time,
/// so everything downstream works with dense canonical ids 0..n-1.
class ModeRegistry {
public:
    /// Register `label` as a new canonical mode, or as another name for
    /// `alias_of` (which must already be known). Re-registering a label with
    /// the same meaning is idempotent; changing its meaning is an error.
    ModeRef register_mode(const std::string& label,
                          std::optional<std::string> alias_of = std::nullopt,
                          std::optional<double> frequency = std::nullopt) {
        ModeId target;
        if (alias_of) {
            auto it = ids_.find(*alias_of);
            if (it == ids_.end())
                throw std::invalid_argument("mode '" + label + "' aliases unknown mode '" +
                                            *alias_of + "'");
            target = ModeId{it->second};
        }

        if (auto it = ids_.find(label); it != ids_.end()) {
            ModeId existing{it->second};
            if (alias_of && existing != target)
                throw std::invalid_argument("mode '" + label +
                                            "' already registered with a different identity");
            if (!alias_of && canonical_[existing.value].label != label)
                throw std::invalid_argument("mode '" + label +
                                            "' already registered as an alias; cannot "
                                            "re-register it as canonical");
            if (frequency && canonical_[existing.value].frequency &&
                *frequency != *canonical_[existing.value].frequency)
                throw std::invalid_argument("mode '" + label + "' re-registered with a "
                                            "conflicting frequency");
            if (frequency && !canonical_[existing.value].frequency)
                canonical_[existing.value].frequency = frequency;
            return ModeRef{existing, label, canonical_[existing.value].frequency};
        }

        if (alias_of) {
            ids_.emplace(label, target.value);
            if (frequency && canonical_[target.value].frequency &&
                *frequency != *canonical_[target.value].frequency)
                throw std::invalid_argument("alias '" + label +
                                            "' carries a conflicting frequency");
            if (frequency) canonical_[target.value].frequency = frequency;
            return ModeRef{target, label, canonical_[target.value].frequency};
        }

        ModeId id{static_cast<std::uint32_t>(canonical_.size())};
        ids_.emplace(label, id.value);
        canonical_.push_back(ModeRef{id, label, frequency});
        return canonical_.back();
    }

    /// Look up a label. Throws std::out_of_range for unknown labels.
    ModeRef resolve(const std::string& label) const {
        auto it = ids_.find(label);
        if (it == ids_.end())
            throw std::out_of_range("unknown mode label '" + label + "'");
        const ModeRef& c = canonical_[it->second];
        return ModeRef{c.id, label, c.frequency};
    }

    bool contains(const std::string& label) const { return ids_.count(label) != 0; }

    bool valid(ModeId id) const { return id.value < canonical_.size(); }

    std::size_t canonical_count() const { return canonical_.size(); }

    /// The label a canonical id was first registered under.
    const std::string& canonical_label(ModeId id) const {
        if (!valid(id)) throw std::out_of_range("mode id out of range");
        return canonical_[id.value].label;
    }

    std::optional<double> frequency(ModeId id) const {
        if (!valid(id)) throw std::out_of_range("mode id out of range");
        return canonical_[id.value].frequency;
    }

    /// All labels (canonical and aliases) pointing at `id`, in no particular order.
    std::vector<std::string> labels_of(ModeId id) const {
        std::vector<std::string> out;
        for (const auto& [label, value] : ids_)
            if (value == id.value) out.push_back(label);
        return out;
    }

    friend bool operator==(const ModeRegistry& a, const ModeRegistry& b) {
        if (a.ids_ != b.ids_ || a.canonical_.size() != b.canonical_.size()) return false;
        for (std::size_t i = 0; i < a.canonical_.size(); ++i) {
            if (a.canonical_[i].label != b.canonical_[i].label) return false;
            if (a.canonical_[i].frequency != b.canonical_[i].frequency) return false;
        }
        return true;
    }

private:
    std::unordered_map<std::string, std::uint32_t> ids_;  // any label -> canonical id
    std::vector<ModeRef> canonical_;                      // canonical id -> first registration
};

}  // namespace biphoton
