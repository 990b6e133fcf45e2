#pragma once

// Winner-id history filters and the cluster -> joint command table.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wtarm/types.hpp"

namespace wtarm {

inline constexpr int kNumAngles = 12;

struct AngleMapEntry
{
    int cluster;
    NeuronId id_lo;
    NeuronId id_hi;
    double angle_deg;
    int spike_ref;
    std::uint16_t position16;
};

inline constexpr std::uint16_t kHomePosition = 32768;

/// Joint-1 command table. Angle is in degrees; position16 is the encoder's
/// 16-bit counter with 0 deg at 32768.
inline constexpr std::array<AngleMapEntry, kNumAngles> kAngleTable{{
    {1, 1, 8, 0.0, 0, 32768},
    {2, 10, 17, 10.4, 32, 34086},
    {3, 19, 26, 20.8, 64, 35406},
    {4, 28, 35, 31.2, 96, 36724},
    {5, 37, 44, 41.6, 128, 38044},
    {6, 46, 53, 52.0, 160, 39362},
    {7, 55, 62, 62.4, 192, 40682},
    {8, 64, 71, 72.8, 224, 42000},
    {9, 73, 80, 83.2, 256, 43320},
    {10, 82, 89, 93.6, 288, 44638},
    {11, 91, 98, 104.0, 320, 45958},
    {12, 100, 107, 114.4, 352, 47276},
}};

inline std::optional<int> classify(NeuronId id)
{
    for (const auto& row : kAngleTable)
        if (id >= row.id_lo && id <= row.id_hi)
            return row.cluster;
    return std::nullopt;
}

inline const AngleMapEntry& map_angle(int cluster)
{
    if (cluster < 1 || cluster > kNumAngles)
        throw ValidationError("cluster " + std::to_string(cluster) + " outside 1..12");
    return kAngleTable[static_cast<std::size_t>(cluster - 1)];
}

enum class FilterMode : std::uint8_t { integrate_fire, isi };

struct FilterConfig
{
    FilterMode mode{FilterMode::integrate_fire};
    int threshold{50};
    // Integrate-and-fire mode only: every counter loses one count per
    // leak period. Zero disables the leak.
    Micros leak_period_us{0};
};

/// One integrate-and-fire counter per angle. The first counter to reach
/// the threshold selects its angle and resets every counter.
class HistoryFilter
{
public:
    explicit HistoryFilter(int threshold = 50, Micros leak_period_us = 0)
        : threshold_(threshold), leak_period_(leak_period_us)
    {
        if (threshold < 1)
            throw ConfigError("filter threshold must be at least 1");
        if (leak_period_us < 0)
            throw ConfigError("filter leak period must be non-negative");
    }

    int threshold() const { return threshold_; }
    int counter(int cluster) const { return counters_.at(static_cast<std::size_t>(cluster - 1)); }
    std::optional<int> last_selected() const { return last_selected_; }

    /// Feed one event from `cluster`; returns a newly selected angle, if
    /// any. Re-selecting the current angle resets the counters silently.
    std::optional<int> step(int cluster, Micros t = 0)
    {
        if (cluster < 1 || cluster > kNumAngles)
            throw ValidationError("filter: cluster outside 1..12");
        apply_leak(t);
        auto& c = counters_[static_cast<std::size_t>(cluster - 1)];
        ++c;
        if (c < threshold_)
            return std::nullopt;
        counters_.fill(0);
        if (last_selected_ == cluster)
            return std::nullopt;
        last_selected_ = cluster;
        return cluster;
    }

private:
    void apply_leak(Micros t)
    {
        if (leak_period_ <= 0)
            return;
        if (!leak_started_) {
            leak_started_ = true;
            last_leak_ = t;
            return;
        }
        const Micros periods = (t - last_leak_) / leak_period_;
        if (periods <= 0)
            return;
        last_leak_ += periods * leak_period_;
        for (auto& c : counters_)
            c = static_cast<int>(std::max<Micros>(0, c - periods));
    }

    int threshold_;
    Micros leak_period_;
    std::array<int, kNumAngles> counters_{};
    std::optional<int> last_selected_;
    bool leak_started_{false};
    Micros last_leak_{0};
};

/// Smallest inter-spike-interval selector. Events sharing a timestamp with
/// the cluster's previous event are one volley. A silent cluster's
/// interval keeps growing with the time since its last volley.
class IsiFilter
{
public:
    std::optional<int> last_selected() const { return last_selected_; }

    std::optional<int> step(int cluster, Micros t)
    {
        if (cluster < 1 || cluster > kNumAngles)
            throw ValidationError("filter: cluster outside 1..12");
        auto& slot = slots_[static_cast<std::size_t>(cluster - 1)];
        if (slot.seen && t == slot.last)
            return std::nullopt;
        if (slot.seen)
            slot.isi = t - slot.last;
        slot.last = t;
        slot.seen = true;

        std::optional<int> best;
        Micros best_isi = std::numeric_limits<Micros>::max();
        for (int k = 1; k <= kNumAngles; ++k) {
            const auto& s = slots_[static_cast<std::size_t>(k - 1)];
            if (!s.isi)
                continue;
            const Micros effective = std::max(*s.isi, t - s.last);
            if (effective < best_isi) {
                best_isi = effective;
                best = k;
            }
        }
        if (!best || best == last_selected_)
            return std::nullopt;
        last_selected_ = best;
        return best;
    }

private:
    struct Slot
    {
        bool seen{false};
        Micros last{0};
        std::optional<Micros> isi;
    };
    std::array<Slot, kNumAngles> slots_{};
    std::optional<int> last_selected_;
};

/// Mode-switching wrapper used by the pipeline.
class AngleSelector
{
public:
    explicit AngleSelector(const FilterConfig& cfg = {})
        : mode_(cfg.mode), if_(cfg.threshold, cfg.leak_period_us)
    {
    }

    FilterMode mode() const { return mode_; }

    /// Classify a decoded id and feed it to the active filter.
    std::optional<int> on_event(NeuronId id, Micros t)
    {
        const auto cluster = classify(id);
        if (!cluster)
            return std::nullopt;
        ++accepted_;
        return mode_ == FilterMode::integrate_fire ? if_.step(*cluster, t) : isi_.step(*cluster, t);
    }

    std::uint64_t accepted_events() const { return accepted_; }

private:
    FilterMode mode_;
    HistoryFilter if_;
    IsiFilter isi_;
    std::uint64_t accepted_{0};
};

struct Command
{
    Micros t;
    int cluster;
    // Index of the accepted filter input event that triggered the command.
    std::uint64_t event_index;
};

inline void write_command_csv(std::ostream& os, const std::vector<Command>& cmds)
{
    os << "t_us,cluster,angle_deg,spike_ref,position16\n";
    char buf[32];
    for (const auto& c : cmds) {
        const auto& row = map_angle(c.cluster);
        std::snprintf(buf, sizeof buf, "%.1f", row.angle_deg);
        os << c.t << ',' << c.cluster << ',' << buf << ',' << row.spike_ref << ',' << row.position16 << '\n';
    }
}

} // namespace wtarm
