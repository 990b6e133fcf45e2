#pragma once

// Spike-based PID joint controller: reference spike generator, the
// Integrate-and-Generate feedback accumulator, and the PFM output stage
// whose pulse expansion drives the motor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <ostream>
#include <span>
#include <vector>

#include "wtarm/angle_selector.hpp"
#include "wtarm/plant.hpp"
#include "wtarm/types.hpp"

namespace wtarm {

struct SpidParams
{
    double kp{0.8};
    double ki{0.02};
    double kd{0.1};
    double pfm_max_hz{5000.0};
    double pulse_width_ms{0.2};
    double freq_scale_hz_per_count{2.0};
    // Bound on the error integral, in count-seconds.
    double i_clamp{500.0};
    double d_window_ms{10.0};
    // Reference generator rate per unit of spike-reference difference.
    double ref_rate_unit_hz{1000.0};

    void validate() const
    {
        if (!(pfm_max_hz > 0))
            throw ConfigError("spid: pfm_max must be positive");
        if (!(pulse_width_ms > 0))
            throw ConfigError("spid: pulse_width must be positive");
        if (!(i_clamp >= 0))
            throw ConfigError("spid: i_clamp must be non-negative");
        if (!(freq_scale_hz_per_count > 0))
            throw ConfigError("spid: freq_scale must be positive");
        if (!(d_window_ms > 0))
            throw ConfigError("spid: d_window must be positive");
        if (!(ref_rate_unit_hz > 0))
            throw ConfigError("spid: ref_rate_unit must be positive");
    }
};

/// Integrate-and-Generate: position = home + sum of signed spikes.
class IntegrateAndGenerate
{
public:
    explicit IntegrateAndGenerate(std::int32_t home = kHomePosition) : value_(home) {}

    void on_spike(const SignedSpike& s) { value_ += s.sign; }
    void on_spikes(std::span<const SignedSpike> spikes)
    {
        for (const auto& s : spikes)
            on_spike(s);
    }
    std::int32_t position() const { return value_; }

private:
    std::int32_t value_;
};

/// Turns a commanded cluster into a burst of signed reference spikes whose
/// net count moves the reference accumulator onto the table position.
/// Burst rate scales with the spike-reference difference, so every burst
/// lasts the same time regardless of step size.
class ReferenceGenerator
{
public:
    explicit ReferenceGenerator(double rate_unit_hz = 1000.0) : rate_unit_(rate_unit_hz) {}

    void command(int cluster)
    {
        const auto& row = map_angle(cluster);
        const int dref = std::abs(row.spike_ref - spike_ref_);
        pending_ = static_cast<std::int32_t>(row.position16) - emitted_position_;
        rate_hz_ = std::max(dref, 1) * rate_unit_;
        spike_ref_ = row.spike_ref;
        target_ = row.position16;
        phase_ = 0.0;
    }

    std::int32_t target() const { return target_; }
    std::int32_t pending() const { return pending_; }
    double rate_hz() const { return rate_hz_; }

    std::vector<SignedSpike> tick(Micros t0, Micros dt)
    {
        std::vector<SignedSpike> out;
        if (pending_ == 0)
            return out;
        const double before = phase_;
        phase_ += rate_hz_ * us_to_s(dt);
        auto n = static_cast<std::int64_t>(std::floor(phase_));
        phase_ -= static_cast<double>(n);
        n = std::min<std::int64_t>(n, std::abs(pending_));
        const int sign = pending_ > 0 ? 1 : -1;
        const double per_us = rate_hz_ / kMicrosPerSecond;
        for (std::int64_t k = 1; k <= n; ++k) {
            const auto off = static_cast<Micros>((static_cast<double>(k) - before) / per_us);
            out.push_back({t0 + std::clamp<Micros>(off, 0, dt - 1), sign});
        }
        pending_ -= sign * static_cast<std::int32_t>(n);
        emitted_position_ += sign * static_cast<std::int32_t>(n);
        if (pending_ == 0)
            phase_ = 0.0;
        return out;
    }

private:
    double rate_unit_;
    double rate_hz_{0.0};
    double phase_{0.0};
    int spike_ref_{0};
    std::int32_t target_{kHomePosition};
    std::int32_t pending_{0};
    std::int32_t emitted_position_{kHomePosition};
};

/// Whole reference burst for a move from `from_cluster` to `to_cluster`
/// starting at t0, with the accumulator at `accumulator`.
inline std::vector<SignedSpike> spike_reference_stream(int from_cluster, int to_cluster, std::int32_t accumulator,
                                                       Micros t0, Micros t1, double rate_unit_hz = 1000.0,
                                                       Micros dt = 100)
{
    ReferenceGenerator gen(rate_unit_hz);
    gen.command(from_cluster);
    // Align the generator with the supplied accumulator without emitting.
    std::vector<SignedSpike> prime;
    while (gen.pending() != 0)
        prime = gen.tick(0, dt);
    (void)prime;
    std::vector<SignedSpike> out;
    const std::int32_t offset = accumulator - static_cast<std::int32_t>(map_angle(from_cluster).position16);
    gen.command(to_cluster);
    // The generator assumes the accumulator sits on the from_cluster row;
    // correct for any offset by emitting the difference first.
    for (std::int32_t i = 0; i < std::abs(offset); ++i)
        out.push_back({t0, offset > 0 ? -1 : 1});
    for (Micros t = t0; t < t1; t += dt) {
        auto s = gen.tick(t, dt);
        out.insert(out.end(), s.begin(), s.end());
        if (gen.pending() == 0)
            break;
    }
    return out;
}

struct PfmCommand
{
    double error{0};
    double u{0};
    double pulse_freq_hz{0};
    int direction{0};
    std::vector<Micros> pulses;
    // Expanded drive time inside the tick, and its direction.
    Micros on_time_us{0};
    int drive_direction{0};
};

class SpidController
{
public:
    explicit SpidController(const SpidParams& p = {}) : params_(p)
    {
        p.validate();
        pulse_width_us_ = std::max<Micros>(1, ms_to_us(p.pulse_width_ms));
    }

    const SpidParams& params() const { return params_; }
    double integral() const { return integral_; }

    /// One controller tick over [t0, t0 + dt).
    PfmCommand step(std::int32_t target, std::int32_t estimate, Micros t0, Micros dt)
    {
        if (dt <= 0)
            throw ValidationError("spid: dt must be positive");
        const double dts = us_to_s(dt);
        const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(ms_to_us(params_.d_window_ms) / dt));
        history_.push_back(estimate);
        if (history_.size() > window + 1)
            history_.pop_front();
        const double d_est =
            static_cast<double>(history_.back() - history_.front()) / (static_cast<double>(history_.size() - 1) * dts + 1e-300);

        PfmCommand cmd;
        cmd.error = static_cast<double>(target - estimate);
        integral_ = std::clamp(integral_ + cmd.error * dts, -params_.i_clamp, params_.i_clamp);
        const double derivative = history_.size() > 1 ? -d_est : 0.0;
        cmd.u = params_.kp * cmd.error + params_.ki * integral_ + params_.kd * derivative;
        cmd.direction = cmd.u > 0 ? 1 : cmd.u < 0 ? -1 : 0;
        cmd.pulse_freq_hz = std::min(std::abs(cmd.u) * params_.freq_scale_hz_per_count, params_.pfm_max_hz);

        const Micros t1 = t0 + dt;
        if (cmd.pulse_freq_hz > 0) {
            const double before = phase_;
            phase_ += cmd.pulse_freq_hz * dts;
            const auto n = static_cast<std::int64_t>(std::floor(phase_));
            phase_ -= static_cast<double>(n);
            const double per_us = cmd.pulse_freq_hz / kMicrosPerSecond;
            for (std::int64_t k = 1; k <= n; ++k) {
                const auto off = static_cast<Micros>((static_cast<double>(k) - before) / per_us);
                cmd.pulses.push_back(t0 + std::clamp<Micros>(off, 0, dt - 1));
            }
        }

        // Pulse expansion: each pulse holds the drive on for pulse_width.
        Micros on = 0;
        Micros seg_start = t0, seg_end = std::max(t0, on_until_);
        for (Micros p : cmd.pulses) {
            if (p <= seg_end) {
                seg_end = std::max(seg_end, p + pulse_width_us_);
            } else {
                on += std::max<Micros>(0, std::min(seg_end, t1) - seg_start);
                seg_start = p;
                seg_end = p + pulse_width_us_;
            }
        }
        on += std::max<Micros>(0, std::min(seg_end, t1) - seg_start);
        on_until_ = std::max(on_until_, seg_end);
        if (!cmd.pulses.empty())
            drive_direction_ = cmd.direction;
        cmd.on_time_us = on;
        cmd.drive_direction = on > 0 ? drive_direction_ : 0;
        return cmd;
    }

private:
    SpidParams params_;
    Micros pulse_width_us_{200};
    double integral_{0.0};
    double phase_{0.0};
    std::deque<std::int32_t> history_;
    Micros on_until_{0};
    int drive_direction_{0};
};

} // namespace wtarm
