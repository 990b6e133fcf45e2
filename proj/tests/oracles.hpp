#pragma once

// Independent reference implementations the tests compare against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "wtarm/spiking_core.hpp"

namespace oracle {

struct Kick
{
    wtarm::Micros t;
    double amplitude; // positive: excitatory, negative: inhibitory
};

/// Forward-Euler LIF with decaying synaptic currents at step h_us.
/// Kicks land at the first step boundary at or after their time.
inline std::vector<wtarm::Micros> euler_lif(const wtarm::NeuronParams& p, std::span<const Kick> kicks,
                                            wtarm::Micros duration, double h_us)
{
    std::vector<wtarm::Micros> spikes;
    double v = p.v_reset, ie = 0, ii = 0;
    const double h = h_us / 1000.0;
    const double refr = p.refractory_ms * 1000.0;
    double refractory_until = -1;
    std::size_t k = 0;
    const auto steps = static_cast<std::int64_t>(static_cast<double>(duration) / h_us);
    for (std::int64_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * h_us;
        while (k < kicks.size() && static_cast<double>(kicks[k].t) <= t) {
            (kicks[k].amplitude >= 0 ? ie : ii) += std::abs(kicks[k].amplitude);
            ++k;
        }
        const double dv = (-(v - p.v_rest) + ie - ii) / p.tau_mem_ms;
        ie -= h * ie / p.tau_syn_exc_ms;
        ii -= h * ii / p.tau_syn_inh_ms;
        if (t < refractory_until) {
            v = p.v_reset;
            continue;
        }
        v += h * dv;
        if (v >= p.v_threshold) {
            const auto ts = static_cast<wtarm::Micros>(std::llround(t + h_us));
            spikes.push_back(ts);
            v = p.v_reset;
            refractory_until = static_cast<double>(ts) + refr;
        }
    }
    return spikes;
}

/// Classic dynamic-programming edit distance.
template <class T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b)
{
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
        prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Single-neuron network: one external input line per kick sign.
inline wtarm::Network single_neuron(const wtarm::NeuronParams& p, int exc_code, double exc_scale, int inh_code = 0,
                                    double inh_scale = 0.0)
{
    wtarm::NetworkBuilder b;
    b.add_neuron(p);
    b.declare_external_inputs(2);
    b.connect(0, {wtarm::SourceKind::external, 0, exc_code, wtarm::Branch::excitatory, exc_scale});
    if (inh_code > 0)
        b.connect(0, {wtarm::SourceKind::external, 1, inh_code, wtarm::Branch::inhibitory, inh_scale});
    return b.build();
}

} // namespace oracle
