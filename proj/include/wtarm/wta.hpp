#pragma once

// Hard winner-take-all network: excitatory clusters with all-to-all
// recurrent excitation competing through one shared inhibitory pool.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wtarm/rng.hpp"
#include "wtarm/spiking_core.hpp"
#include "wtarm/types.hpp"

namespace wtarm {

struct WeightSpec
{
    int code{0};
    double scale{1.0};
};

/// Maps cluster index k (1-based) to a run of consecutive neuron ids.
/// Default: cluster k occupies ids 9(k-1)+1 .. 9(k-1)+8.
struct ClusterLayout
{
    int n_clusters{12};
    int n_exc{8};
    NeuronId first_id{1};
    NeuronId stride{9};

    NeuronId first(int cluster) const { return first_id + stride * static_cast<NeuronId>(cluster - 1); }
    NeuronId last(int cluster) const { return first(cluster) + static_cast<NeuronId>(n_exc) - 1; }

    std::optional<int> cluster_of(NeuronId id) const
    {
        if (id < first_id)
            return std::nullopt;
        const NeuronId rel = id - first_id;
        const auto k = static_cast<int>(rel / stride) + 1;
        if (k > n_clusters || rel % stride >= static_cast<NeuronId>(n_exc))
            return std::nullopt;
        return k;
    }

    /// One past the highest id that belongs to any cluster.
    NeuronId end_id() const { return last(n_clusters) + 1; }
};

struct WtaConfig
{
    int n_clusters{12};
    int n_exc{8};
    int n_inh{16};

    WeightSpec w_input{8, 0.4};
    WeightSpec w_exc_exc{6, 0.4};
    WeightSpec w_exc_inh{7, 0.05};
    WeightSpec w_inh_exc{10, 0.05};

    // Pool neurons each cluster neuron projects to (seeded random subset).
    int exc_to_inh_fanout{8};

    NeuronId first_id{1};
    NeuronId stride{9};
    // First inhibitory id; zero places the pool right after the last cluster.
    NeuronId inh_id_base{0};

    // Cluster neurons: 5 ms refractory instead of the core's 2 ms.
    NeuronParams exc_params{.refractory_ms = 5.0};
    NeuronParams inh_params{};
    std::uint64_t seed{1};

    ClusterLayout layout() const { return {n_clusters, n_exc, first_id, stride}; }

    NeuronId inhibitory_base() const { return inh_id_base != 0 ? inh_id_base : layout().end_id() + 1; }

    void validate() const
    {
        if (n_clusters < 1 || n_exc < 1 || n_inh < 0)
            throw ConfigError("wta: cluster count and size must be positive");
        if (stride < static_cast<NeuronId>(n_exc))
            throw ConfigError("wta: cluster id ranges overlap (stride < n_exc)");
        const std::size_t total = static_cast<std::size_t>(n_clusters) * n_exc + n_inh;
        if (total > kMaxNeurons)
            throw ConfigError("wta: " + std::to_string(total) + " neurons exceed the " +
                              std::to_string(kMaxNeurons) + "-neuron chip");
        if (inhibitory_base() + static_cast<NeuronId>(n_inh) > kMaxNeurons)
            throw ConfigError("wta: neuron id layout exceeds the chip");
        if (inh_id_base != 0 && inh_id_base < layout().end_id())
            throw ConfigError("wta: inhibitory pool overlaps cluster ids");
        for (const auto* w : {&w_input, &w_exc_exc, &w_exc_inh, &w_inh_exc}) {
            if (w->code < 0 || w->code > kMaxWeightCode)
                throw ConfigError("wta: weight code out of 0..15");
            if (!(w->scale >= 0))
                throw ConfigError("wta: weight scale must be non-negative");
        }
        if (n_inh > 0 && exc_to_inh_fanout < 1)
            throw ConfigError("wta: exc_to_inh_fanout must be at least 1");
        exc_params.validate();
        inh_params.validate();
    }
};

struct WtaNetwork
{
    Network network;
    ClusterLayout layout;
    NeuronId inh_first{0};
    int n_inh{0};

    // External input line of cluster k is k - 1.
    static NeuronId input_line(int cluster) { return static_cast<NeuronId>(cluster - 1); }
};

/// Build the competitive network. Throws ConfigError if any neuron would
/// need more than 64 synapses, in particular when the pool is too small
/// to absorb the excitatory projections.
inline WtaNetwork build_wta(const WtaConfig& cfg)
{
    cfg.validate();
    const ClusterLayout layout = cfg.layout();
    const NeuronId inh_first = cfg.inhibitory_base();
    const auto n_total_exc = static_cast<std::size_t>(cfg.n_clusters) * cfg.n_exc;

    const int fanout = std::min(cfg.exc_to_inh_fanout, cfg.n_inh);
    if (cfg.n_inh > 0) {
        const std::size_t per_inh = (n_total_exc * fanout + cfg.n_inh - 1) / cfg.n_inh;
        if (per_inh > kMaxSynapsesPerNeuron)
            throw ConfigError("wta: inhibitory pool of " + std::to_string(cfg.n_inh) + " neurons must absorb " +
                              std::to_string(n_total_exc * fanout) + " excitatory projections; fan-in " +
                              std::to_string(per_inh) + " exceeds the " + std::to_string(kMaxSynapsesPerNeuron) +
                              "-synapse cap");
    }
    const std::size_t exc_fan_in = 1 + (cfg.n_exc - 1) + cfg.n_inh;
    if (exc_fan_in > kMaxSynapsesPerNeuron)
        throw ConfigError("wta: cluster neuron fan-in " + std::to_string(exc_fan_in) + " exceeds the " +
                          std::to_string(kMaxSynapsesPerNeuron) + "-synapse cap");

    NetworkBuilder b;
    const NeuronId total = inh_first + static_cast<NeuronId>(cfg.n_inh);
    for (NeuronId id = 0; id < total; ++id) {
        const bool inh = id >= inh_first;
        b.add_neuron(inh ? cfg.inh_params : cfg.exc_params);
    }
    b.declare_external_inputs(static_cast<std::size_t>(cfg.n_clusters));

    auto syn = [](SourceKind src, NeuronId pre, const WeightSpec& w, Branch br) {
        return SynapseEntry{src, pre, w.code, br, w.scale};
    };

    for (int k = 1; k <= cfg.n_clusters; ++k) {
        for (NeuronId post = layout.first(k); post <= layout.last(k); ++post) {
            b.connect(post, syn(SourceKind::external, WtaNetwork::input_line(k), cfg.w_input, Branch::excitatory));
            for (NeuronId pre = layout.first(k); pre <= layout.last(k); ++pre)
                if (pre != post)
                    b.connect(post, syn(SourceKind::neuron, pre, cfg.w_exc_exc, Branch::excitatory));
            for (int j = 0; j < cfg.n_inh; ++j)
                b.connect(post, syn(SourceKind::neuron, inh_first + j, cfg.w_inh_exc, Branch::inhibitory));
        }
    }

    // Each cluster neuron projects to `fanout` distinct pool neurons, drawn
    // among the least-loaded ones so that pool fan-in stays balanced.
    if (cfg.n_inh > 0) {
        Rng rng(mix_seed(cfg.seed ^ 0x77746121ULL));
        std::vector<std::size_t> load(cfg.n_inh, 0);
        for (int k = 1; k <= cfg.n_clusters; ++k) {
            for (NeuronId pre = layout.first(k); pre <= layout.last(k); ++pre) {
                std::vector<int> chosen;
                for (int f = 0; f < fanout; ++f) {
                    std::size_t min_load = SIZE_MAX;
                    for (int j = 0; j < cfg.n_inh; ++j)
                        if (std::find(chosen.begin(), chosen.end(), j) == chosen.end())
                            min_load = std::min(min_load, load[j]);
                    std::vector<int> candidates;
                    for (int j = 0; j < cfg.n_inh; ++j)
                        if (load[j] == min_load && std::find(chosen.begin(), chosen.end(), j) == chosen.end())
                            candidates.push_back(j);
                    const int pick = candidates[rng.below(candidates.size())];
                    chosen.push_back(pick);
                    ++load[pick];
                }
                std::sort(chosen.begin(), chosen.end());
                for (int j : chosen)
                    b.connect(inh_first + j, syn(SourceKind::neuron, pre, cfg.w_exc_inh, Branch::excitatory));
            }
        }
    }

    return {b.build(), layout, inh_first, cfg.n_inh};
}

struct WinnerCriteria
{
    double dominance_ratio{5.0};
    // Mean per-neuron rate the winning cluster must reach.
    double floor_hz{10.0};
};

/// Spike count per cluster (index 0 unused) inside [t0, t1).
inline std::vector<std::size_t> cluster_counts(std::span<const SpikeEvent> events, Micros t0, Micros t1,
                                               const ClusterLayout& layout)
{
    std::vector<std::size_t> counts(layout.n_clusters + 1, 0);
    auto lo = std::lower_bound(events.begin(), events.end(), SpikeEvent{t0, 0});
    for (auto it = lo; it != events.end() && it->t < t1; ++it)
        if (auto k = layout.cluster_of(it->neuron_id))
            ++counts[*k];
    return counts;
}

/// The dominant cluster in [t0, t1), or none when no cluster clears the
/// activity floor and the dominance ratio over the runner-up.
inline std::optional<int> winner(const SpikeTrace& trace, Micros t0, Micros t1, const ClusterLayout& layout,
                                 const WinnerCriteria& crit = {})
{
    if (t0 >= t1)
        throw ValidationError("winner: empty window");
    if (t0 < 0 || t1 > trace.duration)
        throw ValidationError("winner: window outside trace span");
    const auto counts = cluster_counts(trace.events, t0, t1, layout);
    int best = 0;
    std::size_t best_count = 0, runner_up = 0;
    for (int k = 1; k <= layout.n_clusters; ++k) {
        if (counts[k] > best_count) {
            runner_up = best_count;
            best_count = counts[k];
            best = k;
        } else if (counts[k] > runner_up) {
            runner_up = counts[k];
        }
    }
    if (best == 0)
        return std::nullopt;
    const double rate = static_cast<double>(best_count) / (layout.n_exc * us_to_s(t1 - t0));
    if (rate < crit.floor_hz)
        return std::nullopt;
    if (static_cast<double>(best_count) < crit.dominance_ratio * static_cast<double>(runner_up))
        return std::nullopt;
    return best;
}

struct WinnerTransition
{
    Micros t{0};
    std::optional<int> prev_cluster;
    int new_cluster{0};

    friend bool operator==(const WinnerTransition&, const WinnerTransition&) = default;
};

/// Winner sequence over consecutive windows of `window_length` (default:
/// `window_step`), compressed to change points between two winners.
/// Windows without a winner are skipped. Transition time is the end of the
/// first window won by the new cluster.
inline std::vector<WinnerTransition> transitions(const SpikeTrace& trace, Micros window_step,
                                                 const ClusterLayout& layout, const WinnerCriteria& crit = {},
                                                 Micros window_length = 0)
{
    if (window_step <= 0)
        throw ValidationError("transitions: window_step must be positive");
    const Micros len = window_length > 0 ? window_length : window_step;
    std::vector<WinnerTransition> out;
    std::optional<int> current;
    for (Micros t0 = 0; t0 + len <= trace.duration; t0 += window_step) {
        const auto w = winner(trace, t0, t0 + len, layout, crit);
        if (!w || w == current)
            continue;
        if (current)
            out.push_back({t0 + len, current, *w});
        current = w;
    }
    return out;
}

/// The first window winner and the end time of that window.
inline std::optional<WinnerTransition> first_winner(const SpikeTrace& trace, Micros window_step,
                                                    const ClusterLayout& layout, const WinnerCriteria& crit = {},
                                                    Micros window_length = 0)
{
    if (window_step <= 0)
        throw ValidationError("first_winner: window_step must be positive");
    const Micros len = window_length > 0 ? window_length : window_step;
    for (Micros t0 = 0; t0 + len <= trace.duration; t0 += window_step)
        if (const auto w = winner(trace, t0, t0 + len, layout, crit))
            return WinnerTransition{t0 + len, std::nullopt, *w};
    return std::nullopt;
}

inline void write_transitions_csv(std::ostream& os, std::span<const WinnerTransition> ts)
{
    os << "t_us,prev,new\n";
    for (const auto& tr : ts)
        os << tr.t << ',' << tr.prev_cluster.value_or(0) << ',' << tr.new_cluster << '\n';
}

} // namespace wtarm
