#pragma once

// Closed-loop run: WTA chip -> AER port -> decoder -> angle selector ->
// reference generator -> SPID <-> joint, ticked at the scenario's dt.

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "wtarm/aer.hpp"
#include "wtarm/analysis.hpp"
#include "wtarm/angle_selector.hpp"
#include "wtarm/plant.hpp"
#include "wtarm/rng.hpp"
#include "wtarm/scenario.hpp"
#include "wtarm/spid.hpp"
#include "wtarm/spiking_core.hpp"
#include "wtarm/wta.hpp"

namespace wtarm {

struct StimulusEvents
{
    // Events on external input lines.
    std::vector<SpikeEvent> network;
    // Events injected at the chip output port as neuron ids.
    std::vector<SpikeEvent> direct;
};

inline StimulusEvents build_stimulus(const Scenario& s, const ClusterLayout& layout)
{
    StimulusEvents out;
    for (std::size_t i = 0; i < s.stimulus.size(); ++i) {
        const auto& st = s.stimulus[i];
        const Micros t0 = ms_to_us(st.t_start_ms) + ms_to_us(st.phase_ms);
        const Micros t1 = ms_to_us(st.t_end_ms);
        if (st.rate_hz <= 0 || t0 >= t1)
            continue;
        const NeuronId line = st.route == StimulusRoute::network ? WtaNetwork::input_line(st.cluster)
                                                                 : layout.first(st.cluster);
        std::vector<SpikeEvent> ev;
        if (st.pattern == StimulusPattern::poisson) {
            ev = poisson_generator(st.rate_hz, t0, t1, mix_seed(s.seed * 0x100000001b3ULL + i), line);
        } else {
            const double period = kMicrosPerSecond / st.rate_hz;
            for (std::int64_t k = 0;; ++k) {
                const Micros t = t0 + static_cast<Micros>(std::floor(static_cast<double>(k) * period));
                if (t >= t1)
                    break;
                ev.push_back({t, line});
            }
        }
        auto& dst = st.route == StimulusRoute::network ? out.network : out.direct;
        dst.insert(dst.end(), ev.begin(), ev.end());
    }
    std::sort(out.network.begin(), out.network.end());
    std::sort(out.direct.begin(), out.direct.end());
    return out;
}

struct LinkCounters
{
    std::uint64_t chip_spikes{0};
    std::uint64_t words_sent{0};
    std::uint64_t words_delivered{0};
    std::uint64_t handshake_errors{0};
    std::uint64_t decoder_resyncs{0};
    std::uint64_t decoded_events{0};
    std::uint64_t filter_events{0};
    std::uint64_t motor_pulses{0};
    std::uint64_t motor_pulses_received{0};
    std::uint64_t encoder_spikes{0};
    std::uint64_t link_framing_errors{0};
    // Per-tick comparisons of the feedback estimate with the encoder.
    std::uint64_t loop_checks{0};
    std::uint64_t drift_ticks{0};
};

struct ExclusivityCheck
{
    std::size_t stimulus_index{0};
    int cluster{0};
    std::size_t windows{0};
    std::size_t won{0};
};

struct RunReport
{
    std::string scenario;
    std::uint64_t seed{0};
    Micros duration{0};
    std::optional<WinnerTransition> initial_winner;
    std::vector<WinnerTransition> transitions;
    std::vector<Command> commands;
    std::vector<SettleStep> steps;
    std::vector<ExclusivityCheck> exclusivity;
    LinkCounters counters;
    std::int32_t final_position{kHomePosition};
    std::int32_t final_error_counts{0};
    double final_error_deg{0};
    std::vector<std::string> violations;
};

struct RunResult
{
    SpikeTrace chip_trace;
    std::vector<TelemetryRow> telemetry;
    std::vector<GroundTruthRow> ground_truth;
    aer::WireTap wiretap;
    RunReport report;
};

namespace detail {

/// Produces the chip output port's spikes, one tick at a time.
class ChipStage
{
public:
    ChipStage(const WtaNetwork& wta, const StimulusEvents& stim, Micros dt)
        : sim_(wta.network, dt), stim_(&stim)
    {
    }

    std::vector<SpikeEvent> next()
    {
        const Micros t1 = sim_.now() + sim_.dt();
        const std::size_t begin = net_cursor_;
        while (net_cursor_ < stim_->network.size() && stim_->network[net_cursor_].t < t1)
            ++net_cursor_;
        auto out = sim_.step(std::span(stim_->network).subspan(begin, net_cursor_ - begin));
        const std::size_t dbegin = direct_cursor_;
        while (direct_cursor_ < stim_->direct.size() && stim_->direct[direct_cursor_].t < t1)
            ++direct_cursor_;
        if (direct_cursor_ > dbegin) {
            out.insert(out.end(), stim_->direct.begin() + static_cast<std::ptrdiff_t>(dbegin),
                       stim_->direct.begin() + static_cast<std::ptrdiff_t>(direct_cursor_));
            std::sort(out.begin(), out.end());
        }
        return out;
    }

private:
    Simulator sim_;
    const StimulusEvents* stim_;
    std::size_t net_cursor_{0};
    std::size_t direct_cursor_{0};
};

// Inter-board link words: bit 15 marks an encoder spike, bit 14 a motor
// pulse; bit 13 carries the direction (set = positive).
inline constexpr std::uint16_t kEncoderWord = 0x8000;
inline constexpr std::uint16_t kMotorWord = 0x4000;
inline constexpr std::uint16_t kPositiveBit = 0x2000;

/// Everything downstream of the chip output port.
class LoopStage
{
public:
    LoopStage(const Scenario& s, RunResult& result)
        : s_(&s), r_(&result), link_(s.handshake), selector_(s.filter), ref_(s.spid.ref_rate_unit_hz),
          spid_(s.spid), joint_(s.plant), motor_rx_(100), encoder_rx_(100)
    {
        for (const auto& f : s.faults)
            faults_[f.word_index].push_back(f);
        r_->ground_truth.push_back(sample_ground_truth(0));
    }

    void consume(Micros t0, std::span<const SpikeEvent> chip_spikes)
    {
        const Micros dt = s_->dt_us;
        const Micros t1 = t0 + dt;
        auto& c = r_->report.counters;

        for (const auto& e : chip_spikes) {
            r_->chip_trace.events.push_back(e);
            ++c.chip_spikes;
            const auto frame = aer::encode_spike(e);
            send_word(e.t, frame.word0);
            send_word(e.t, frame.word1);
        }

        ref_accum_.on_spikes(ref_.tick(t0, dt));
        const auto cmd = spid_.step(ref_accum_.position(), feedback_.position(), t0, dt);
        if (t0 % s_->trace_every_us == 0)
            r_->telemetry.push_back({t0, ref_accum_.position(), feedback_.position(), cmd.u, cmd.pulse_freq_hz});

        for (Micros p : cmd.pulses) {
            ++c.motor_pulses;
            const std::uint16_t w = kMotorWord | (cmd.direction > 0 ? kPositiveBit : 0);
            if (auto got = link_word(motor_rx_, p, w, "motor"); got && (*got & kMotorWord))
                ++c.motor_pulses_received;
        }

        for (const auto& sp : joint_.step(t0, cmd.on_time_us, cmd.drive_direction, dt)) {
            ++c.encoder_spikes;
            const std::uint16_t w = kEncoderWord | (sp.sign > 0 ? kPositiveBit : 0);
            if (auto got = link_word(encoder_rx_, sp.t, w, "encoder"); got && (*got & kEncoderWord))
                feedback_.on_spike({sp.t, (*got & kPositiveBit) ? 1 : -1});
        }
        c.link_framing_errors = motor_rx_.framing_errors() + encoder_rx_.framing_errors();

        const auto& st = joint_.state();
        ++c.loop_checks;
        if (feedback_.position() != st.encoder_count)
            ++c.drift_ticks;
        if (feedback_.position() != st.encoder_count && !drift_reported_) {
            drift_reported_ = true;
            r_->report.violations.push_back("loop-closure drift at t_us=" + std::to_string(t1) + ": estimate " +
                                            std::to_string(feedback_.position()) + " vs encoder " +
                                            std::to_string(st.encoder_count));
        }
        if ((st.angle_deg < s_->plant.limit_min_deg || st.angle_deg > s_->plant.limit_max_deg) && !limit_reported_) {
            limit_reported_ = true;
            r_->report.violations.push_back("joint limit exceeded at t_us=" + std::to_string(t1));
        }
        if (t1 % s_->trace_every_us == 0)
            r_->ground_truth.push_back(sample_ground_truth(t1));
    }

    void finish()
    {
        auto& c = r_->report.counters;
        c.handshake_errors = link_.error_count();
        c.decoder_resyncs = decoder_.resync_count();
        c.filter_events = selector_.accepted_events();
        r_->report.final_position = joint_.state().encoder_count;
    }

private:
    GroundTruthRow sample_ground_truth(Micros t) const
    {
        const auto& st = joint_.state();
        return {t, st.angle_deg, st.velocity_deg_s, st.encoder_count};
    }

    void send_word(Micros t, aer::AerWord w)
    {
        const std::size_t index = word_index_++;
        if (auto it = faults_.find(index); it != faults_.end()) {
            bool keep = true;
            for (const auto& f : it->second) {
                if (f.action == aer::FaultAction::insert)
                    transmit(t, aer::AerWord(f.payload));
                else if (f.action == aer::FaultAction::replace)
                    w = aer::AerWord(f.payload);
                else
                    keep = false;
            }
            if (!keep)
                return;
        }
        transmit(t, w);
    }

    void transmit(Micros t, aer::AerWord w)
    {
        auto& c = r_->report.counters;
        ++c.words_sent;
        if (s_->wiretap)
            r_->wiretap.record(t, "chip_out", w.payload());
        const auto d = link_.transfer(static_cast<aer::Nanos>(t) * 1000);
        if (!d.delivered)
            return;
        ++c.words_delivered;
        const Micros td = aer::ns_to_us_ceil(d.t_deliver);
        const auto res = decoder_.step(w);
        if (!res.neuron_id)
            return;
        ++c.decoded_events;
        if (auto cluster = selector_.on_event(*res.neuron_id, td)) {
            r_->report.commands.push_back({td, *cluster, selector_.accepted_events()});
            ref_.command(*cluster);
        }
    }

    std::optional<std::uint16_t> link_word(aer::NibbleReceiver& rx, Micros t, std::uint16_t w, const char* dir)
    {
        if (s_->wiretap)
            r_->wiretap.record(t, dir, w);
        std::optional<std::uint16_t> got;
        for (auto n : aer::nibble_serialize(w))
            got = rx.push(n, t);
        return got;
    }

    const Scenario* s_;
    RunResult* r_;
    aer::HandshakeLink link_;
    aer::DecoderFsm decoder_;
    std::map<std::size_t, std::vector<aer::Fault>> faults_;
    std::size_t word_index_{0};
    AngleSelector selector_;
    ReferenceGenerator ref_;
    IntegrateAndGenerate ref_accum_;
    IntegrateAndGenerate feedback_;
    SpidController spid_;
    Joint joint_;
    aer::NibbleReceiver motor_rx_;
    aer::NibbleReceiver encoder_rx_;
    bool drift_reported_{false};
    bool limit_reported_{false};
};

/// Single-producer single-consumer queue of per-tick spike batches.
class BatchQueue
{
public:
    explicit BatchQueue(std::size_t capacity) : capacity_(capacity) {}

    void push(std::vector<SpikeEvent> batch)
    {
        std::unique_lock lock(m_);
        not_full_.wait(lock, [&] { return q_.size() < capacity_; });
        q_.push_back(std::move(batch));
        not_empty_.notify_one();
    }

    std::vector<SpikeEvent> pop()
    {
        std::unique_lock lock(m_);
        not_empty_.wait(lock, [&] { return !q_.empty(); });
        auto b = std::move(q_.front());
        q_.pop_front();
        not_full_.notify_one();
        return b;
    }

private:
    std::size_t capacity_;
    std::mutex m_;
    std::condition_variable not_full_, not_empty_;
    std::deque<std::vector<SpikeEvent>> q_;
};

inline void check_conservation(const Scenario& s, RunReport& rep)
{
    for (const auto& st : s.stimulus)
        if (st.route == StimulusRoute::direct)
            return;
    const Micros tol = ms_to_us(s.analysis.match_window_ms);
    std::vector<WinnerTransition> onsets = rep.transitions;
    if (rep.initial_winner)
        onsets.push_back(*rep.initial_winner);
    for (const auto& cmd : rep.commands) {
        const bool backed = std::any_of(onsets.begin(), onsets.end(), [&](const auto& tr) {
            return tr.new_cluster == cmd.cluster && tr.t >= cmd.t - tol && tr.t <= cmd.t + tol;
        });
        if (!backed)
            rep.violations.push_back("phantom command at t_us=" + std::to_string(cmd.t) + " to cluster " +
                                     std::to_string(cmd.cluster) + " without a matching winner transition");
    }
}

inline void check_exclusivity(const Scenario& s, const SpikeTrace& trace, const ClusterLayout& layout,
                              RunReport& rep)
{
    const Micros win = ms_to_us(s.analysis.window_ms);
    const Micros settle = ms_to_us(s.analysis.wta_settle_ms);
    for (std::size_t i = 0; i < s.stimulus.size(); ++i) {
        const auto& st = s.stimulus[i];
        if (st.route != StimulusRoute::network || st.rate_hz <= 0)
            continue;
        ExclusivityCheck chk{i, st.cluster, 0, 0};
        for (Micros t = ms_to_us(st.t_start_ms) + settle; t + win <= ms_to_us(st.t_end_ms); t += win) {
            ++chk.windows;
            if (winner(trace, t, t + win, layout) == st.cluster)
                ++chk.won;
        }
        rep.exclusivity.push_back(chk);
    }
}

} // namespace detail

/// Execute a validated scenario. With `threads == 2` the chip runs on its
/// own thread; results are identical to sequential execution.
inline RunResult run_scenario(const Scenario& s)
{
    const WtaNetwork wta = build_wta(s.wta);
    const StimulusEvents stim = build_stimulus(s, wta.layout);
    const Micros duration = s.duration_us();
    const Micros ticks = (duration + s.dt_us - 1) / s.dt_us;

    RunResult result;
    result.chip_trace.duration = ticks * s.dt_us;
    auto& rep = result.report;
    rep.scenario = s.name;
    rep.seed = s.seed;
    rep.duration = duration;

    detail::ChipStage chip(wta, stim, s.dt_us);
    detail::LoopStage loop(s, result);
    if (s.threads == 2) {
        detail::BatchQueue q(1024);
        std::thread producer([&] {
            for (Micros k = 0; k < ticks; ++k)
                q.push(chip.next());
        });
        for (Micros k = 0; k < ticks; ++k) {
            auto batch = q.pop();
            loop.consume(k * s.dt_us, batch);
        }
        producer.join();
    } else {
        for (Micros k = 0; k < ticks; ++k)
            loop.consume(k * s.dt_us, chip.next());
    }
    loop.finish();

    rep.initial_winner = first_winner(result.chip_trace, ms_to_us(s.analysis.window_ms), wta.layout);
    rep.transitions = transitions(result.chip_trace, ms_to_us(s.analysis.window_ms), wta.layout);
    detail::check_conservation(s, rep);
    detail::check_exclusivity(s, result.chip_trace, wta.layout, rep);
    if (!rep.commands.empty())
        rep.steps = analyze_settling(result.ground_truth, rep.commands,
                                     {s.analysis.settle_band_deg, s.analysis.settle_hold_ms});
    const int final_cluster = rep.commands.empty() ? 1 : rep.commands.back().cluster;
    const auto& target = map_angle(final_cluster);
    rep.final_error_counts = rep.final_position - static_cast<std::int32_t>(target.position16);
    rep.final_error_deg = result.ground_truth.back().angle_deg - target.angle_deg;
    return result;
}

inline nlohmann::ordered_json report_to_json(const RunReport& r)
{
    using nlohmann::ordered_json;
    ordered_json j;
    j["scenario"] = r.scenario;
    j["seed"] = r.seed;
    j["duration_us"] = r.duration;
    j["final_position"] = r.final_position;
    j["final_error_counts"] = r.final_error_counts;
    j["final_error_deg"] = r.final_error_deg;
    ordered_json steps = ordered_json::array();
    for (const auto& s : r.steps) {
        ordered_json e;
        e["t_command_us"] = s.t_command;
        e["from"] = s.from_cluster;
        e["to"] = s.to_cluster;
        e["step"] = s.step_clusters();
        e["settle_ms"] = s.settle_ms ? ordered_json(*s.settle_ms) : ordered_json(nullptr);
        e["final_error_deg"] = s.final_error_deg;
        e["final_error_counts"] = s.final_error_counts;
        steps.push_back(e);
    }
    j["steps"] = steps;
    ordered_json lat = ordered_json::object();
    for (const auto& [k, v] : latency_by_step(r.steps))
        lat[std::to_string(k)] = v;
    j["mean_settle_ms_by_step"] = lat;
    if (r.initial_winner)
        j["initial_winner"] = {{"t_us", r.initial_winner->t}, {"cluster", r.initial_winner->new_cluster}};
    else
        j["initial_winner"] = nullptr;
    ordered_json tr = ordered_json::array();
    for (const auto& t : r.transitions)
        tr.push_back({{"t_us", t.t}, {"prev", t.prev_cluster.value_or(0)}, {"new", t.new_cluster}});
    j["transitions"] = tr;
    ordered_json ex = ordered_json::array();
    for (const auto& e : r.exclusivity)
        ex.push_back({{"stimulus", e.stimulus_index}, {"cluster", e.cluster}, {"windows", e.windows}, {"won", e.won}});
    j["exclusivity"] = ex;
    const auto& c = r.counters;
    j["counters"] = {{"chip_spikes", c.chip_spikes},
                     {"words_sent", c.words_sent},
                     {"words_delivered", c.words_delivered},
                     {"handshake_errors", c.handshake_errors},
                     {"decoder_resyncs", c.decoder_resyncs},
                     {"decoded_events", c.decoded_events},
                     {"filter_events", c.filter_events},
                     {"motor_pulses", c.motor_pulses},
                     {"motor_pulses_received", c.motor_pulses_received},
                     {"encoder_spikes", c.encoder_spikes},
                     {"link_framing_errors", c.link_framing_errors},
                     {"loop_checks", c.loop_checks},
                     {"drift_ticks", c.drift_ticks}};
    j["violations"] = r.violations;
    return j;
}

/// Write every trace file of a run into `dir` (created if needed).
inline void write_run(const std::filesystem::path& dir, const RunResult& r)
{
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream os(dir / name, std::ios::binary);
        if (!os)
            throw ConfigError("cannot write '" + (dir / name).string() + "'");
        return os;
    };
    {
        auto os = open("spikes.csv");
        write_spike_csv(os, r.chip_trace.events);
    }
    {
        auto os = open("transitions.csv");
        write_transitions_csv(os, r.report.transitions);
    }
    {
        auto os = open("commands.csv");
        write_command_csv(os, r.report.commands);
    }
    {
        auto os = open("telemetry.csv");
        write_telemetry_csv(os, r.telemetry);
    }
    {
        auto os = open("ground_truth.csv");
        write_ground_truth_csv(os, r.ground_truth);
    }
    {
        auto os = open("settling.csv");
        write_settling_csv(os, r.report.steps);
    }
    if (r.wiretap.size() > 0) {
        auto os = open("wiretap.csv");
        r.wiretap.write_csv(os);
    }
    {
        auto os = open("report.json");
        os << report_to_json(r.report).dump(2) << '\n';
    }
}

} // namespace wtarm
