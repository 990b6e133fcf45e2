#pragma once

// Simulated joint: first-order DC motor driven by expanded PFM pulses and
// an incremental quadrature encoder whose edges become signed spikes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wtarm/angle_selector.hpp"
#include "wtarm/types.hpp"

namespace wtarm {

struct SignedSpike
{
    Micros t{0};
    int sign{1};
    friend bool operator==(const SignedSpike&, const SignedSpike&) = default;
};

/// Count <-> angle conversion, piecewise linear through the command
/// table's anchor points and extrapolated with the end segments' slopes.
namespace encoder_scale {

inline double counts_from_angle(double angle_deg)
{
    const auto& t = kAngleTable;
    std::size_t i = 0;
    if (angle_deg >= t.back().angle_deg)
        i = t.size() - 2;
    else if (angle_deg > t.front().angle_deg)
        while (angle_deg > t[i + 1].angle_deg)
            ++i;
    const double a0 = t[i].angle_deg, a1 = t[i + 1].angle_deg;
    const double c0 = t[i].position16, c1 = t[i + 1].position16;
    return c0 + (angle_deg - a0) * (c1 - c0) / (a1 - a0);
}

inline double angle_from_counts(double counts)
{
    const auto& t = kAngleTable;
    std::size_t i = 0;
    if (counts >= t.back().position16)
        i = t.size() - 2;
    else if (counts > t.front().position16)
        while (counts > t[i + 1].position16)
            ++i;
    const double a0 = t[i].angle_deg, a1 = t[i + 1].angle_deg;
    const double c0 = t[i].position16, c1 = t[i + 1].position16;
    return a0 + (counts - c0) * (a1 - a0) / (c1 - c0);
}

inline std::int32_t encoder_count(double angle_deg)
{
    return static_cast<std::int32_t>(std::llround(counts_from_angle(angle_deg)));
}

/// Local counts per degree around `angle_deg`.
inline double counts_per_degree(double angle_deg)
{
    return counts_from_angle(angle_deg + 0.5) - counts_from_angle(angle_deg - 0.5);
}

} // namespace encoder_scale

struct MotorParams
{
    double gain_deg_s{60.0};
    double tau_motor_ms{50.0};
    double v_max_deg_s{40.0};
    double limit_min_deg{-10.0};
    double limit_max_deg{125.0};
    // Optional viscous drag, 1/s. Zero by default.
    double viscous_per_s{0.0};

    void validate() const
    {
        if (!(tau_motor_ms > 0))
            throw ConfigError("plant: tau_motor must be positive");
        if (!(v_max_deg_s > 0))
            throw ConfigError("plant: v_max must be positive");
        if (!(limit_min_deg < limit_max_deg))
            throw ConfigError("plant: joint limits must satisfy min < max");
        if (!(viscous_per_s >= 0))
            throw ConfigError("plant: viscous term must be non-negative");
    }
};

struct JointState
{
    double angle_deg{0.0};
    double velocity_deg_s{0.0};
    std::int32_t encoder_count{kHomePosition};
    int phase{0};

    std::uint16_t counter16() const { return static_cast<std::uint16_t>(encoder_count); }
};

namespace quadrature {

struct Channels
{
    bool a;
    bool b;
    friend bool operator==(Channels, Channels) = default;
};

// Gray sequence; forward rotation advances the phase.
inline Channels channels(int phase)
{
    static constexpr Channels kSeq[4] = {{false, false}, {true, false}, {true, true}, {false, true}};
    return kSeq[((phase % 4) + 4) % 4];
}

/// +1 forward, -1 backward, 0 no change. Throws on a skipped state.
inline int decode(Channels prev, Channels next)
{
    if (prev == next)
        return 0;
    int p = 0, n = 0;
    for (int i = 0; i < 4; ++i) {
        if (channels(i) == prev)
            p = i;
        if (channels(i) == next)
            n = i;
    }
    const int d = ((n - p) % 4 + 4) % 4;
    if (d == 1)
        return +1;
    if (d == 3)
        return -1;
    throw std::logic_error("quadrature: skipped state");
}

} // namespace quadrature

/// Signed spikes for the encoder counts crossed between two states, spread
/// evenly over the tick starting at t0. Signs come from decoding the
/// channel edge sequence.
inline std::vector<SignedSpike> encoder_emit(const JointState& prev, const JointState& next, Micros t0, Micros dt)
{
    std::vector<SignedSpike> out;
    const std::int32_t delta = next.encoder_count - prev.encoder_count;
    const std::int32_t n = delta >= 0 ? delta : -delta;
    if (n == 0)
        return out;
    out.reserve(static_cast<std::size_t>(n));
    const int dir = delta > 0 ? 1 : -1;
    int phase = prev.phase;
    for (std::int32_t i = 0; i < n; ++i) {
        const auto before = quadrature::channels(phase);
        phase = ((phase + dir) % 4 + 4) % 4;
        const int sign = quadrature::decode(before, quadrature::channels(phase));
        out.push_back({t0 + (static_cast<Micros>(i) + 1) * dt / (n + 1), sign});
    }
    return out;
}

class Joint
{
public:
    explicit Joint(const MotorParams& p = {}) : params_(p)
    {
        p.validate();
        state_.encoder_count = encoder_scale::encoder_count(0.0);
    }

    const JointState& state() const { return state_; }
    const MotorParams& params() const { return params_; }

    /// Advance by dt with `on_time_us` of expanded drive in `direction`.
    JointState motor_step(Micros on_time_us, int direction, Micros dt) const
    {
        if (dt <= 0)
            throw ValidationError("plant: dt must be positive");
        const double dts = us_to_s(dt);
        const double duty = std::clamp(static_cast<double>(on_time_us) / static_cast<double>(dt), 0.0, 1.0) *
                            (direction > 0 ? 1.0 : direction < 0 ? -1.0 : 0.0);
        JointState next = state_;
        const double v_target = params_.gain_deg_s * duty;
        const double alpha = 1.0 - std::exp(-dts * 1000.0 / params_.tau_motor_ms);
        double v = state_.velocity_deg_s + (v_target - state_.velocity_deg_s) * alpha;
        v -= params_.viscous_per_s * v * dts;
        v = std::clamp(v, -params_.v_max_deg_s, params_.v_max_deg_s);
        double angle = state_.angle_deg + v * dts;
        if (angle >= params_.limit_max_deg) {
            angle = params_.limit_max_deg;
            v = std::min(v, 0.0);
        } else if (angle <= params_.limit_min_deg) {
            angle = params_.limit_min_deg;
            v = std::max(v, 0.0);
        }
        next.angle_deg = angle;
        next.velocity_deg_s = v;
        next.encoder_count = encoder_scale::encoder_count(angle);
        const std::int32_t delta = next.encoder_count - state_.encoder_count;
        next.phase = ((state_.phase + delta) % 4 + 4) % 4;
        return next;
    }

    /// Step the motor and return the encoder spikes for the tick. The
    /// incrementally tracked count is checked against the closed form.
    std::vector<SignedSpike> step(Micros t0, Micros on_time_us, int direction, Micros dt)
    {
        const JointState next = motor_step(on_time_us, direction, dt);
        auto spikes = encoder_emit(state_, next, t0, dt);
        std::int32_t tracked = state_.encoder_count;
        for (const auto& s : spikes)
            tracked += s.sign;
        if (tracked != encoder_scale::encoder_count(next.angle_deg))
            throw std::logic_error("encoder count drifted from closed form");
        state_ = next;
        return spikes;
    }

    void reset(const JointState& s) { state_ = s; }

private:
    MotorParams params_;
    JointState state_{};
};

} // namespace wtarm
