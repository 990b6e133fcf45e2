#pragma once

// Discrete-time leaky integrate-and-fire substrate with the resource limits
// of a 1024-neuron, 4-core mixed-signal processor: 64 CAM synapses per
// neuron, 4-bit weight codes, one excitatory and one inhibitory first-order
// synaptic current per neuron.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wtarm/rng.hpp"
#include "wtarm/types.hpp"

namespace wtarm {

enum class Branch : std::uint8_t { excitatory, inhibitory };
enum class SourceKind : std::uint8_t { neuron, external };

struct NeuronParams
{
    double tau_mem_ms{20.0};
    double v_threshold{1.0};
    double v_reset{0.0};
    double v_rest{0.0};
    double refractory_ms{2.0};
    double tau_syn_exc_ms{5.0};
    double tau_syn_inh_ms{5.0};
    // Exponential spike-initiation sharpness. Zero selects the linear LIF.
    double exp_sharpness{0.0};

    void validate() const
    {
        if (!(tau_mem_ms > 0) || !(tau_syn_exc_ms > 0) || !(tau_syn_inh_ms > 0))
            throw ConfigError("neuron time constants must be positive");
        if (!(v_threshold > v_reset))
            throw ConfigError("v_threshold must exceed v_reset");
        if (!(refractory_ms >= 0))
            throw ConfigError("refractory period must be non-negative");
        if (!(exp_sharpness >= 0))
            throw ConfigError("exp_sharpness must be non-negative");
    }
};

struct SynapseEntry
{
    SourceKind source{SourceKind::neuron};
    NeuronId pre_id{0};
    int weight_code{0};
    Branch branch{Branch::excitatory};
    double weight_scale{1.0};

    double amplitude() const { return weight_code * weight_scale; }
};

/// Immutable network description plus a precomputed fan-out index.
class Network
{
public:
    struct Target
    {
        NeuronId post;
        double amplitude;
        Branch branch;
    };

    std::size_t size() const { return params_.size(); }
    std::size_t num_external_inputs() const { return input_targets_.size(); }
    const NeuronParams& params(NeuronId id) const { return params_.at(id); }
    std::span<const SynapseEntry> synapses(NeuronId id) const { return synapses_.at(id); }
    static std::size_t core_of(NeuronId id) { return id / kNeuronsPerCore; }

    std::span<const Target> targets_of_neuron(NeuronId pre) const { return neuron_targets_[pre]; }
    std::span<const Target> targets_of_input(NeuronId input) const { return input_targets_[input]; }

    std::size_t core_population(std::size_t core) const
    {
        const std::size_t lo = core * kNeuronsPerCore;
        const std::size_t hi = std::min(size(), lo + kNeuronsPerCore);
        return hi > lo ? hi - lo : 0;
    }

private:
    friend class NetworkBuilder;

    std::vector<NeuronParams> params_;
    std::vector<std::vector<SynapseEntry>> synapses_;
    std::vector<std::vector<Target>> neuron_targets_;
    std::vector<std::vector<Target>> input_targets_;
};

class NetworkBuilder
{
public:
    NeuronId add_neuron(const NeuronParams& p = {})
    {
        p.validate();
        if (params_.size() >= kMaxNeurons)
            throw ConfigError("network exceeds " + std::to_string(kMaxNeurons) + " neurons");
        params_.push_back(p);
        synapses_.emplace_back();
        return static_cast<NeuronId>(params_.size() - 1);
    }

    void declare_external_inputs(std::size_t n) { num_inputs_ = n; }

    void connect(NeuronId post, const SynapseEntry& syn)
    {
        if (post >= params_.size())
            throw ConfigError("synapse targets unknown neuron " + std::to_string(post));
        if (syn.weight_code < 0 || syn.weight_code > kMaxWeightCode)
            throw ConfigError("weight code " + std::to_string(syn.weight_code) + " does not fit in 4 bits");
        if (!(syn.weight_scale >= 0))
            throw ConfigError("weight scale must be non-negative");
        auto& list = synapses_[post];
        if (list.size() >= kMaxSynapsesPerNeuron)
            throw ConfigError("neuron " + std::to_string(post) + " exceeds " +
                              std::to_string(kMaxSynapsesPerNeuron) + " CAM synapses");
        list.push_back(syn);
    }

    std::size_t fan_in(NeuronId post) const { return synapses_.at(post).size(); }
    std::size_t size() const { return params_.size(); }

    Network build() const
    {
        Network net;
        net.params_ = params_;
        net.synapses_ = synapses_;
        net.neuron_targets_.resize(params_.size());
        net.input_targets_.resize(num_inputs_);
        for (NeuronId post = 0; post < synapses_.size(); ++post) {
            for (const auto& syn : synapses_[post]) {
                const Network::Target target{post, syn.amplitude(), syn.branch};
                if (syn.source == SourceKind::neuron) {
                    if (syn.pre_id >= params_.size())
                        throw ConfigError("synapse references unknown neuron " + std::to_string(syn.pre_id));
                    net.neuron_targets_[syn.pre_id].push_back(target);
                } else {
                    if (syn.pre_id >= num_inputs_)
                        throw ConfigError("synapse references undeclared external input " +
                                          std::to_string(syn.pre_id));
                    net.input_targets_[syn.pre_id].push_back(target);
                }
            }
        }
        return net;
    }

private:
    std::vector<NeuronParams> params_;
    std::vector<std::vector<SynapseEntry>> synapses_;
    std::size_t num_inputs_{0};
};

struct NeuronState
{
    double v{0.0};
    double i_exc{0.0};
    double i_inh{0.0};
    Micros refractory_until{0};
};

/// Exact subthreshold propagator for one neuron over a span of h
/// microseconds with exponentially decaying synaptic currents.
class Propagator
{
public:
    Propagator() = default;
    Propagator(const NeuronParams& p, double h_us) : h_us_(h_us)
    {
        const double h = h_us / kMicrosPerMs;
        decay_mem_ = std::exp(-h / p.tau_mem_ms);
        decay_exc_ = std::exp(-h / p.tau_syn_exc_ms);
        decay_inh_ = std::exp(-h / p.tau_syn_inh_ms);
        gain_exc_ = current_gain(p.tau_syn_exc_ms, p.tau_mem_ms, h);
        gain_inh_ = current_gain(p.tau_syn_inh_ms, p.tau_mem_ms, h);
    }

    double h_us() const { return h_us_; }
    double decay_exc() const { return decay_exc_; }
    double decay_inh() const { return decay_inh_; }

    double membrane(const NeuronParams& p, const NeuronState& s) const
    {
        double v = p.v_rest + (s.v - p.v_rest) * decay_mem_ + s.i_exc * gain_exc_ - s.i_inh * gain_inh_;
        if (p.exp_sharpness > 0) {
            const double x = std::min((s.v - p.v_threshold) / p.exp_sharpness, 20.0);
            v += (h_us_ / kMicrosPerMs) * p.exp_sharpness * std::exp(x) / p.tau_mem_ms;
        }
        return v;
    }

private:
    // Response at time h of tau_m dv/dt = -v + I0 exp(-t/tau_s), v(0) = 0,
    // per unit I0.
    static double current_gain(double tau_s, double tau_m, double h)
    {
        if (std::abs(tau_s - tau_m) < 1e-12)
            return (h / tau_m) * std::exp(-h / tau_m);
        return tau_s / (tau_s - tau_m) * (std::exp(-h / tau_s) - std::exp(-h / tau_m));
    }

    double h_us_{0};
    double decay_mem_{1};
    double decay_exc_{1};
    double decay_inh_{1};
    double gain_exc_{0};
    double gain_inh_{0};
};

/// Tick-driven simulator over an immutable Network. External inputs are
/// applied at their exact microsecond inside the tick; spikes emitted by
/// network neurons reach their targets at the start of the next tick.
class Simulator
{
public:
    Simulator(const Network& net, Micros dt_us) : net_(&net), dt_(dt_us)
    {
        if (dt_us <= 0)
            throw ValidationError("dt must be positive");
        state_.resize(net.size());
        tick_.reserve(net.size());
        for (NeuronId id = 0; id < net.size(); ++id) {
            const auto& p = net.params(id);
            state_[id].v = p.v_reset;
            tick_.emplace_back(p, static_cast<double>(dt_us));
            refractory_us_.push_back(ms_to_us(p.refractory_ms));
        }
        pending_exc_.assign(net.size(), 0.0);
        pending_inh_.assign(net.size(), 0.0);
    }

    Micros now() const { return now_; }
    Micros dt() const { return dt_; }
    std::span<const NeuronState> state() const { return state_; }

    /// Advance one tick. `inputs` are external-line events with
    /// t in [now, now + dt); `neuron_id` is the external input index.
    std::vector<SpikeEvent> step(std::span<const SpikeEvent> inputs = {})
    {
        const Micros t0 = now_;
        const Micros t1 = now_ + dt_;

        arrivals_.clear();
        for (const auto& in : inputs) {
            if (in.neuron_id >= net_->num_external_inputs())
                throw ConfigError("input spike references undeclared external index " +
                                  std::to_string(in.neuron_id));
            if (in.t < t0 || in.t >= t1)
                throw ValidationError("input spike at t=" + std::to_string(in.t) + " outside tick [" +
                                      std::to_string(t0) + ", " + std::to_string(t1) + ")");
            for (const auto& target : net_->targets_of_input(in.neuron_id))
                arrivals_.push_back({target.post, in.t, target.amplitude, target.branch});
        }
        std::sort(arrivals_.begin(), arrivals_.end(), [](const Arrival& a, const Arrival& b) {
            return std::tie(a.post, a.t) < std::tie(b.post, b.t);
        });

        std::vector<SpikeEvent> out;
        std::size_t cursor = 0;
        for (NeuronId id = 0; id < state_.size(); ++id) {
            auto& s = state_[id];
            s.i_exc += pending_exc_[id];
            s.i_inh += pending_inh_[id];
            pending_exc_[id] = 0.0;
            pending_inh_[id] = 0.0;

            Micros cur = t0;
            while (cursor < arrivals_.size() && arrivals_[cursor].post == id) {
                const Arrival& a = arrivals_[cursor];
                advance(id, cur, a.t, out);
                cur = a.t;
                (a.branch == Branch::excitatory ? s.i_exc : s.i_inh) += a.amplitude;
                ++cursor;
            }
            advance(id, cur, t1, out);
        }

        std::sort(out.begin(), out.end());
        for (const auto& spike : out) {
            for (const auto& target : net_->targets_of_neuron(spike.neuron_id))
                (target.branch == Branch::excitatory ? pending_exc_ : pending_inh_)[target.post] += target.amplitude;
        }
        now_ = t1;
        return out;
    }

private:
    struct Arrival
    {
        NeuronId post;
        Micros t;
        double amplitude;
        Branch branch;
    };

    static void decay(NeuronState& s, const NeuronParams& p, Micros h)
    {
        const double hm = static_cast<double>(h) / kMicrosPerMs;
        s.i_exc *= std::exp(-hm / p.tau_syn_exc_ms);
        s.i_inh *= std::exp(-hm / p.tau_syn_inh_ms);
    }

    void advance(NeuronId id, Micros from, Micros to, std::vector<SpikeEvent>& out)
    {
        auto& s = state_[id];
        const auto& p = net_->params(id);
        Micros cur = from;
        while (cur < to) {
            if (s.refractory_until > cur) {
                const Micros seg_end = std::min(to, s.refractory_until);
                decay(s, p, seg_end - cur);
                s.v = p.v_reset;
                cur = seg_end;
                continue;
            }
            const Micros h = to - cur;
            const Propagator local = (h == dt_) ? tick_[id] : Propagator(p, static_cast<double>(h));
            const double v_next = local.membrane(p, s);
            if (v_next < p.v_threshold) {
                s.v = v_next;
                s.i_exc *= local.decay_exc();
                s.i_inh *= local.decay_inh();
                cur = to;
                continue;
            }
            // Linear interpolation of the crossing inside the segment.
            const double frac = v_next > s.v ? std::clamp((p.v_threshold - s.v) / (v_next - s.v), 0.0, 1.0) : 1.0;
            Micros t_spike = cur + static_cast<Micros>(std::llround(frac * static_cast<double>(h)));
            t_spike = std::clamp(t_spike, cur + 1, to);
            decay(s, p, t_spike - cur);
            s.v = p.v_reset;
            s.refractory_until = t_spike + refractory_us_[id];
            out.push_back({t_spike, id});
            cur = t_spike;
        }
    }

    const Network* net_;
    Micros dt_;
    Micros now_{0};
    std::vector<NeuronState> state_;
    std::vector<Propagator> tick_;
    std::vector<Micros> refractory_us_;
    std::vector<double> pending_exc_;
    std::vector<double> pending_inh_;
    std::vector<Arrival> arrivals_;
};

struct StateSample
{
    Micros t;
    NeuronId neuron_id;
    double v;
};

struct SpikeTrace
{
    Micros duration{0};
    std::vector<SpikeEvent> events;
    std::vector<StateSample> samples;
};

struct RunOptions
{
    Micros dt{100};
    std::vector<NeuronId> probes;
    Micros sample_every{0};
};

/// Homogeneous Poisson train on external line `input` over [t_start, t_end).
inline std::vector<SpikeEvent> poisson_generator(double rate_hz, Micros t_start, Micros t_end, std::uint64_t seed,
                                                 NeuronId input = 0)
{
    if (!(rate_hz >= 0))
        throw ValidationError("rate must be non-negative");
    if (t_end <= t_start)
        throw ValidationError("duration must be positive");
    std::vector<SpikeEvent> out;
    if (rate_hz == 0)
        return out;
    Rng rng(seed);
    const double mean_us = kMicrosPerSecond / rate_hz;
    double t = static_cast<double>(t_start);
    for (;;) {
        t += rng.exponential(mean_us);
        const auto ti = static_cast<Micros>(std::floor(t));
        if (ti >= t_end)
            break;
        out.push_back({ti, input});
    }
    return out;
}

inline std::vector<SpikeEvent> poisson_generator(double rate_hz, double duration_ms, std::uint64_t seed)
{
    return poisson_generator(rate_hz, 0, ms_to_us(duration_ms), seed, 0);
}

/// Verbatim replay of a (t, input index) schedule.
inline std::vector<SpikeEvent> custom_generator(std::span<const std::pair<Micros, NeuronId>> schedule)
{
    std::vector<SpikeEvent> out;
    out.reserve(schedule.size());
    for (const auto& [t, input] : schedule) {
        const SpikeEvent e{t, input};
        if (!out.empty() && e < out.back())
            throw ValidationError("custom schedule is not sorted at t=" + std::to_string(t));
        out.push_back(e);
    }
    return out;
}

/// Simulate `net` for `duration` microseconds driven by sorted external events.
inline SpikeTrace run(const Network& net, std::span<const SpikeEvent> inputs, Micros duration,
                      const RunOptions& opts = {})
{
    if (duration <= 0)
        throw ValidationError("duration must be positive");
    if (!std::is_sorted(inputs.begin(), inputs.end()))
        throw ValidationError("input stream is not sorted");
    if (!inputs.empty() && (inputs.front().t < 0 || inputs.back().t > duration))
        throw ValidationError("input events outside [0, duration]");

    SpikeTrace trace;
    trace.duration = duration;
    Simulator sim(net, opts.dt);
    std::size_t cursor = 0;
    while (sim.now() < duration) {
        const Micros t1 = sim.now() + sim.dt();
        const std::size_t begin = cursor;
        while (cursor < inputs.size() && inputs[cursor].t < t1)
            ++cursor;
        auto spikes = sim.step(inputs.subspan(begin, cursor - begin));
        for (const auto& e : spikes)
            if (e.t <= duration)
                trace.events.push_back(e);
        if (opts.sample_every > 0 && sim.now() % opts.sample_every == 0) {
            for (NeuronId id : opts.probes)
                trace.samples.push_back({sim.now(), id, sim.state()[id].v});
        }
    }
    return trace;
}

inline void write_spike_csv(std::ostream& os, std::span<const SpikeEvent> events)
{
    os << "t_us,neuron_id\n";
    for (const auto& e : events)
        os << e.t << ',' << e.neuron_id << '\n';
}

} // namespace wtarm
