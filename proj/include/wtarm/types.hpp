#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>

namespace wtarm {

/// Simulation time in integer microseconds.
using Micros = std::int64_t;

using NeuronId = std::uint32_t;

inline constexpr std::size_t kMaxNeurons = 1024;
inline constexpr std::size_t kNeuronsPerCore = 256;
inline constexpr std::size_t kNumCores = 4;
inline constexpr std::size_t kMaxSynapsesPerNeuron = 64;
inline constexpr int kMaxWeightCode = 15;

inline constexpr double kMicrosPerMs = 1000.0;
inline constexpr double kMicrosPerSecond = 1e6;

/// A timestamped neuron (or external input line) identifier. Streams are
/// ordered by time, ties broken by ascending id.
struct SpikeEvent
{
    Micros t{0};
    NeuronId neuron_id{0};

    friend bool operator==(const SpikeEvent&, const SpikeEvent&) = default;
    friend bool operator<(const SpikeEvent& a, const SpikeEvent& b)
    {
        return std::tie(a.t, a.neuron_id) < std::tie(b.t, b.neuron_id);
    }
};

/// Raised for invalid configurations: bad parameters, resource caps,
/// references to undeclared inputs.
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Raised when caller-supplied data violates a documented precondition.
class ValidationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline Micros ms_to_us(double ms)
{
    return static_cast<Micros>(ms * kMicrosPerMs + (ms >= 0 ? 0.5 : -0.5));
}

inline double us_to_ms(Micros us) { return static_cast<double>(us) / kMicrosPerMs; }
inline double us_to_s(Micros us) { return static_cast<double>(us) / kMicrosPerSecond; }

} // namespace wtarm
