#pragma once

// Trace records, their CSV forms, and settling-time analysis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wtarm/angle_selector.hpp"
#include "wtarm/types.hpp"

namespace wtarm {

struct GroundTruthRow
{
    Micros t{0};
    double angle_deg{0};
    double velocity_deg_s{0};
    std::int32_t encoder_count{kHomePosition};
};

struct TelemetryRow
{
    Micros t{0};
    std::int32_t target{0};
    std::int32_t estimate{0};
    double u{0};
    double pulse_freq_hz{0};
};

inline void write_ground_truth_csv(std::ostream& os, std::span<const GroundTruthRow> rows)
{
    os << "t_us,angle_deg,velocity,encoder_count\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%d\n", static_cast<long long>(r.t), r.angle_deg,
                      r.velocity_deg_s, r.encoder_count);
        os << buf;
    }
}

inline void write_telemetry_csv(std::ostream& os, std::span<const TelemetryRow> rows)
{
    os << "t_us,target,estimate,error,u,pulse_freq\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%lld,%d,%d,%d,%.6f,%.3f\n", static_cast<long long>(r.t), r.target,
                      r.estimate, r.target - r.estimate, r.u, r.pulse_freq_hz);
        os << buf;
    }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    return out;
}

/// Rows of a CSV with the given header; throws ValidationError on a
/// header mismatch or a short row.
inline std::vector<std::vector<std::string>> read_csv(std::istream& is, const std::string& header)
{
    std::string line;
    if (!std::getline(is, line) || line != header)
        throw ValidationError("expected CSV header '" + header + "'");
    const auto width = split_csv_line(header).size();
    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        auto cells = split_csv_line(line);
        if (cells.size() != width)
            throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                                  " fields");
        rows.push_back(std::move(cells));
    }
    return rows;
}

} // namespace detail

inline std::vector<GroundTruthRow> read_ground_truth_csv(std::istream& is)
{
    std::vector<GroundTruthRow> out;
    for (const auto& c : detail::read_csv(is, "t_us,angle_deg,velocity,encoder_count"))
        out.push_back({std::stoll(c[0]), std::stod(c[1]), std::stod(c[2]), std::stoi(c[3])});
    return out;
}

inline std::vector<Command> read_command_csv(std::istream& is)
{
    std::vector<Command> out;
    for (const auto& c : detail::read_csv(is, "t_us,cluster,angle_deg,spike_ref,position16")) {
        const int cluster = std::stoi(c[1]);
        map_angle(cluster);
        out.push_back({std::stoll(c[0]), cluster, 0});
    }
    return out;
}

struct SettleStep
{
    Micros t_command{0};
    int from_cluster{1};
    int to_cluster{1};
    double target_deg{0};
    // Absent when the joint never settled before the trace ended.
    std::optional<double> settle_ms;
    // Error at the last sample before the next command (or trace end).
    double final_error_deg{0};
    std::int32_t final_error_counts{0};

    int step_clusters() const { return std::abs(to_cluster - from_cluster); }
};

struct SettleCriteria
{
    double band_deg{0.5};
    double hold_ms{200.0};
};

/// Per-command settling: the first time at or after the command from which
/// |angle - target| stays within the band for at least the hold time. The
/// joint starts at home, so the first command's step is measured from
/// cluster 1.
inline std::vector<SettleStep> analyze_settling(std::span<const GroundTruthRow> trace, std::span<const Command> cmds,
                                                const SettleCriteria& crit = {})
{
    if (cmds.empty())
        throw ValidationError("analyze_settling: command log is empty");
    std::vector<SettleStep> out;
    const Micros hold = ms_to_us(crit.hold_ms);
    int from = 1;
    for (std::size_t k = 0; k < cmds.size(); ++k) {
        const auto& cmd = cmds[k];
        const auto& row = map_angle(cmd.cluster);
        SettleStep st;
        st.t_command = cmd.t;
        st.from_cluster = from;
        st.to_cluster = cmd.cluster;
        st.target_deg = row.angle_deg;
        from = cmd.cluster;

        // Start from the last sample not after the command.
        auto it = std::upper_bound(trace.begin(), trace.end(), cmd.t,
                                   [](Micros t, const GroundTruthRow& r) { return t < r.t; });
        std::size_t i = it == trace.begin() ? 0 : static_cast<std::size_t>(it - trace.begin()) - 1;
        std::optional<std::size_t> entered;
        for (; i < trace.size(); ++i) {
            const bool inside = std::abs(trace[i].angle_deg - st.target_deg) <= crit.band_deg;
            if (!inside) {
                entered.reset();
                continue;
            }
            if (!entered)
                entered = i;
            if (trace[i].t - trace[*entered].t >= hold) {
                st.settle_ms = us_to_ms(std::max<Micros>(0, trace[*entered].t - cmd.t));
                break;
            }
        }

        const Micros t_end = k + 1 < cmds.size() ? cmds[k + 1].t : std::numeric_limits<Micros>::max();
        auto last = std::lower_bound(trace.begin(), trace.end(), t_end,
                                     [](const GroundTruthRow& r, Micros t) { return r.t < t; });
        if (last != trace.begin()) {
            const auto& r = *(last - 1);
            st.final_error_deg = r.angle_deg - st.target_deg;
            st.final_error_counts = r.encoder_count - static_cast<std::int32_t>(row.position16);
        }
        out.push_back(st);
    }
    return out;
}

/// Mean settling time per step size (in clusters), settled steps only.
inline std::map<int, double> latency_by_step(std::span<const SettleStep> steps)
{
    std::map<int, std::pair<double, int>> acc;
    for (const auto& s : steps)
        if (s.settle_ms) {
            auto& a = acc[s.step_clusters()];
            a.first += *s.settle_ms;
            ++a.second;
        }
    std::map<int, double> out;
    for (const auto& [k, v] : acc)
        out[k] = v.first / v.second;
    return out;
}

/// True when mean settling time strictly increases with step size.
inline bool latency_strictly_increasing(const std::map<int, double>& by_step)
{
    std::optional<double> prev;
    for (const auto& [k, v] : by_step) {
        if (k == 0)
            continue;
        if (prev && !(v > *prev))
            return false;
        prev = v;
    }
    return true;
}

inline void write_settling_csv(std::ostream& os, std::span<const SettleStep> steps)
{
    os << "t_command_us,from,to,step,target_deg,settle_ms,final_error_deg,final_error_counts\n";
    char buf[160];
    for (const auto& s : steps) {
        char settle[32] = "";
        if (s.settle_ms)
            std::snprintf(settle, sizeof settle, "%.1f", *s.settle_ms);
        std::snprintf(buf, sizeof buf, "%lld,%d,%d,%d,%.1f,%s,%.4f,%d\n", static_cast<long long>(s.t_command),
                      s.from_cluster, s.to_cluster, s.step_clusters(), s.target_deg, settle, s.final_error_deg,
                      s.final_error_counts);
        os << buf;
    }
}

} // namespace wtarm
