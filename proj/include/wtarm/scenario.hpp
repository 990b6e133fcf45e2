#pragma once

// Scenario files: YAML documents describing one closed-loop run.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "wtarm/aer.hpp"
#include "wtarm/angle_selector.hpp"
#include "wtarm/plant.hpp"
#include "wtarm/spid.hpp"
#include "wtarm/types.hpp"
#include "wtarm/wta.hpp"

namespace wtarm {

enum class StimulusPattern : std::uint8_t { poisson, regular };
enum class StimulusRoute : std::uint8_t { network, direct };

/// One stimulus interval. `network` drives the cluster's external input
/// line; `direct` injects events of the cluster's first neuron straight
/// into the chip output port, bypassing the network.
struct Stimulus
{
    double t_start_ms{0};
    double t_end_ms{0};
    int cluster{1};
    double rate_hz{0};
    StimulusPattern pattern{StimulusPattern::poisson};
    double phase_ms{0};
    StimulusRoute route{StimulusRoute::network};
};

struct AnalysisConfig
{
    double window_ms{50.0};
    double settle_band_deg{0.5};
    double settle_hold_ms{200.0};
    // A command is backed by a winner transition into the same cluster
    // within this distance of the command time.
    double match_window_ms{500.0};
    // Windows this soon after a stimulus change are not checked for the
    // stimulated cluster winning.
    double wta_settle_ms{250.0};
};

struct Scenario
{
    std::string name{"unnamed"};
    double duration_ms{1000.0};
    std::uint64_t seed{1};
    Micros dt_us{100};
    WtaConfig wta{};
    FilterConfig filter{};
    SpidParams spid{};
    MotorParams plant{};
    aer::HandshakeTiming handshake{};
    std::vector<aer::Fault> faults;
    bool wiretap{false};
    AnalysisConfig analysis{};
    Micros trace_every_us{1000};
    int threads{1};
    std::vector<Stimulus> stimulus;

    Micros duration_us() const { return ms_to_us(duration_ms); }
};

namespace detail {

class ScenarioReader
{
public:
    std::vector<std::string> errors;

    void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> allowed)
    {
        if (!node.IsMap()) {
            errors.push_back(path + ": expected a mapping");
            return;
        }
        const std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (!ok.contains(key))
                errors.push_back(join(path, key) + ": unknown key");
        }
    }

    template <class T>
    void read(const YAML::Node& node, const std::string& path, const char* key, T& out)
    {
        if (!node.IsMap() || !node[key])
            return;
        try {
            out = node[key].as<T>();
        } catch (const YAML::Exception&) {
            errors.push_back(join(path, key) + ": cannot parse '" + scalar_text(node[key]) + "'");
        }
    }

    void require(bool cond, const std::string& field, const std::string& msg)
    {
        if (!cond)
            errors.push_back(field + ": " + msg);
    }

    static std::string join(const std::string& path, const std::string& key)
    {
        return path.empty() ? key : path + "." + key;
    }

private:
    static std::string scalar_text(const YAML::Node& n)
    {
        if (n.IsScalar())
            return n.Scalar();
        std::ostringstream os;
        os << n;
        return os.str();
    }
};

inline void read_weight(ScenarioReader& r, const YAML::Node& parent, const std::string& path, const char* key,
                        WeightSpec& w)
{
    if (!parent[key])
        return;
    const auto node = parent[key];
    const auto p = ScenarioReader::join(path, key);
    r.check_keys(node, p, {"code", "scale"});
    r.read(node, p, "code", w.code);
    r.read(node, p, "scale", w.scale);
    r.require(w.code >= 0 && w.code <= kMaxWeightCode, p + ".code", "must be in 0..15");
    r.require(w.scale >= 0, p + ".scale", "must be non-negative");
}

inline void read_neuron(ScenarioReader& r, const YAML::Node& parent, const std::string& path, const char* key,
                        NeuronParams& n)
{
    if (!parent[key])
        return;
    const auto node = parent[key];
    const auto p = ScenarioReader::join(path, key);
    r.check_keys(node, p,
                 {"tau_mem_ms", "v_threshold", "v_reset", "refractory_ms", "tau_syn_exc_ms", "tau_syn_inh_ms",
                  "exp_sharpness"});
    r.read(node, p, "tau_mem_ms", n.tau_mem_ms);
    r.read(node, p, "v_threshold", n.v_threshold);
    r.read(node, p, "v_reset", n.v_reset);
    r.read(node, p, "refractory_ms", n.refractory_ms);
    r.read(node, p, "tau_syn_exc_ms", n.tau_syn_exc_ms);
    r.read(node, p, "tau_syn_inh_ms", n.tau_syn_inh_ms);
    r.read(node, p, "exp_sharpness", n.exp_sharpness);
    r.require(n.tau_mem_ms > 0, p + ".tau_mem_ms", "must be positive");
    r.require(n.tau_syn_exc_ms > 0, p + ".tau_syn_exc_ms", "must be positive");
    r.require(n.tau_syn_inh_ms > 0, p + ".tau_syn_inh_ms", "must be positive");
    r.require(n.v_threshold > n.v_reset, p + ".v_threshold", "must exceed v_reset");
    r.require(n.refractory_ms >= 0, p + ".refractory_ms", "must be non-negative");
    r.require(n.exp_sharpness >= 0, p + ".exp_sharpness", "must be non-negative");
}

} // namespace detail

/// Parse a scenario document. Relative fault schedule paths resolve
/// against `base_dir`. Returns every field-level problem found.
inline std::vector<std::string> parse_scenario(const std::string& text, Scenario& s,
                                               const std::filesystem::path& base_dir = {})
{
    detail::ScenarioReader r;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        return {std::string("yaml: ") + e.what()};
    }
    if (!root.IsMap())
        return {"scenario: top level must be a mapping"};

    r.check_keys(root, "",
                 {"name", "duration_ms", "seed", "dt_us", "wta", "filter", "spid", "plant", "aer", "analysis",
                  "output", "stimulus"});
    r.read(root, "", "name", s.name);
    r.read(root, "", "duration_ms", s.duration_ms);
    r.read(root, "", "seed", s.seed);
    r.read(root, "", "dt_us", s.dt_us);
    r.require(s.duration_ms > 0, "duration_ms", "must be positive");
    r.require(s.dt_us > 0, "dt_us", "must be positive");

    if (const auto w = root["wta"]) {
        r.check_keys(w, "wta",
                     {"n_inh", "exc_to_inh_fanout", "seed", "w_input", "w_exc_exc", "w_exc_inh", "w_inh_exc",
                      "exc_neuron", "inh_neuron"});
        r.read(w, "wta", "n_inh", s.wta.n_inh);
        r.read(w, "wta", "exc_to_inh_fanout", s.wta.exc_to_inh_fanout);
        r.read(w, "wta", "seed", s.wta.seed);
        detail::read_weight(r, w, "wta", "w_input", s.wta.w_input);
        detail::read_weight(r, w, "wta", "w_exc_exc", s.wta.w_exc_exc);
        detail::read_weight(r, w, "wta", "w_exc_inh", s.wta.w_exc_inh);
        detail::read_weight(r, w, "wta", "w_inh_exc", s.wta.w_inh_exc);
        detail::read_neuron(r, w, "wta", "exc_neuron", s.wta.exc_params);
        detail::read_neuron(r, w, "wta", "inh_neuron", s.wta.inh_params);
        r.require(s.wta.n_inh >= 0, "wta.n_inh", "must be non-negative");
        r.require(s.wta.exc_to_inh_fanout >= 1, "wta.exc_to_inh_fanout", "must be at least 1");
    }

    if (const auto f = root["filter"]) {
        r.check_keys(f, "filter", {"mode", "threshold", "leak_period_ms"});
        std::string mode = s.filter.mode == FilterMode::isi ? "isi" : "integrate_fire";
        double leak_ms = us_to_ms(s.filter.leak_period_us);
        r.read(f, "filter", "mode", mode);
        r.read(f, "filter", "threshold", s.filter.threshold);
        r.read(f, "filter", "leak_period_ms", leak_ms);
        if (mode == "integrate_fire")
            s.filter.mode = FilterMode::integrate_fire;
        else if (mode == "isi")
            s.filter.mode = FilterMode::isi;
        else
            r.errors.push_back("filter.mode: expected integrate_fire or isi, got '" + mode + "'");
        r.require(s.filter.threshold >= 1, "filter.threshold", "must be at least 1");
        r.require(leak_ms >= 0, "filter.leak_period_ms", "must be non-negative");
        s.filter.leak_period_us = ms_to_us(leak_ms);
    }

    if (const auto p = root["spid"]) {
        r.check_keys(p, "spid",
                     {"kp", "ki", "kd", "pfm_max_hz", "pulse_width_ms", "freq_scale_hz_per_count", "i_clamp",
                      "d_window_ms", "ref_rate_unit_hz"});
        r.read(p, "spid", "kp", s.spid.kp);
        r.read(p, "spid", "ki", s.spid.ki);
        r.read(p, "spid", "kd", s.spid.kd);
        r.read(p, "spid", "pfm_max_hz", s.spid.pfm_max_hz);
        r.read(p, "spid", "pulse_width_ms", s.spid.pulse_width_ms);
        r.read(p, "spid", "freq_scale_hz_per_count", s.spid.freq_scale_hz_per_count);
        r.read(p, "spid", "i_clamp", s.spid.i_clamp);
        r.read(p, "spid", "d_window_ms", s.spid.d_window_ms);
        r.read(p, "spid", "ref_rate_unit_hz", s.spid.ref_rate_unit_hz);
        r.require(s.spid.pfm_max_hz > 0, "spid.pfm_max_hz", "must be positive");
        r.require(s.spid.pulse_width_ms > 0, "spid.pulse_width_ms", "must be positive");
        r.require(s.spid.i_clamp >= 0, "spid.i_clamp", "must be non-negative");
        r.require(s.spid.freq_scale_hz_per_count > 0, "spid.freq_scale_hz_per_count", "must be positive");
        r.require(s.spid.d_window_ms > 0, "spid.d_window_ms", "must be positive");
        r.require(s.spid.ref_rate_unit_hz > 0, "spid.ref_rate_unit_hz", "must be positive");
    }

    if (const auto p = root["plant"]) {
        r.check_keys(p, "plant", {"gain_deg_s", "tau_motor_ms", "v_max_deg_s", "limits_deg", "viscous_per_s"});
        r.read(p, "plant", "gain_deg_s", s.plant.gain_deg_s);
        r.read(p, "plant", "tau_motor_ms", s.plant.tau_motor_ms);
        r.read(p, "plant", "v_max_deg_s", s.plant.v_max_deg_s);
        r.read(p, "plant", "viscous_per_s", s.plant.viscous_per_s);
        if (p["limits_deg"]) {
            std::vector<double> lim;
            r.read(p, "plant", "limits_deg", lim);
            if (lim.size() == 2) {
                s.plant.limit_min_deg = lim[0];
                s.plant.limit_max_deg = lim[1];
            } else {
                r.errors.push_back("plant.limits_deg: expected [min, max]");
            }
        }
        r.require(s.plant.tau_motor_ms > 0, "plant.tau_motor_ms", "must be positive");
        r.require(s.plant.v_max_deg_s > 0, "plant.v_max_deg_s", "must be positive");
        r.require(s.plant.limit_min_deg < s.plant.limit_max_deg, "plant.limits_deg", "must satisfy min < max");
        r.require(s.plant.viscous_per_s >= 0, "plant.viscous_per_s", "must be non-negative");
    }

    if (const auto a = root["aer"]) {
        r.check_keys(a, "aer", {"req_latency_us", "ack_latency_us", "timeout_us", "wiretap", "fault_schedule"});
        r.read(a, "aer", "req_latency_us", s.handshake.req_latency_us);
        r.read(a, "aer", "ack_latency_us", s.handshake.ack_latency_us);
        r.read(a, "aer", "timeout_us", s.handshake.timeout_us);
        r.read(a, "aer", "wiretap", s.wiretap);
        r.require(s.handshake.req_latency_us >= 0, "aer.req_latency_us", "must be non-negative");
        r.require(s.handshake.ack_latency_us >= 0, "aer.ack_latency_us", "must be non-negative");
        r.require(s.handshake.timeout_us > 0, "aer.timeout_us", "must be positive");
        if (a["fault_schedule"]) {
            std::string file;
            r.read(a, "aer", "fault_schedule", file);
            std::filesystem::path fp(file);
            if (fp.is_relative())
                fp = base_dir / fp;
            std::ifstream in(fp);
            if (!in) {
                r.errors.push_back("aer.fault_schedule: cannot open '" + fp.string() + "'");
            } else {
                try {
                    s.faults = aer::parse_fault_schedule(in);
                } catch (const std::exception& e) {
                    r.errors.push_back(std::string("aer.fault_schedule: ") + e.what());
                }
            }
        }
    }

    if (const auto a = root["analysis"]) {
        r.check_keys(a, "analysis", {"window_ms", "settle_band_deg", "settle_hold_ms", "match_window_ms", "wta_settle_ms"});
        r.read(a, "analysis", "window_ms", s.analysis.window_ms);
        r.read(a, "analysis", "settle_band_deg", s.analysis.settle_band_deg);
        r.read(a, "analysis", "settle_hold_ms", s.analysis.settle_hold_ms);
        r.read(a, "analysis", "match_window_ms", s.analysis.match_window_ms);
        r.read(a, "analysis", "wta_settle_ms", s.analysis.wta_settle_ms);
        r.require(s.analysis.window_ms > 0, "analysis.window_ms", "must be positive");
        r.require(s.analysis.settle_band_deg > 0, "analysis.settle_band_deg", "must be positive");
        r.require(s.analysis.settle_hold_ms >= 0, "analysis.settle_hold_ms", "must be non-negative");
        r.require(s.analysis.match_window_ms >= 0, "analysis.match_window_ms", "must be non-negative");
        r.require(s.analysis.wta_settle_ms >= 0, "analysis.wta_settle_ms", "must be non-negative");
    }

    if (const auto o = root["output"]) {
        r.check_keys(o, "output", {"trace_every_us", "threads"});
        r.read(o, "output", "trace_every_us", s.trace_every_us);
        r.read(o, "output", "threads", s.threads);
        r.require(s.trace_every_us > 0, "output.trace_every_us", "must be positive");
        r.require(s.threads == 1 || s.threads == 2, "output.threads", "must be 1 or 2");
    }

    if (s.dt_us > 0 && s.trace_every_us > 0 && s.trace_every_us % s.dt_us != 0)
        r.errors.push_back("output.trace_every_us: must be a multiple of dt_us");

    if (const auto st = root["stimulus"]) {
        if (!st.IsSequence()) {
            r.errors.push_back("stimulus: expected a list");
        } else {
            for (std::size_t i = 0; i < st.size(); ++i) {
                const auto n = st[i];
                const std::string p = "stimulus[" + std::to_string(i) + "]";
                r.check_keys(n, p, {"t_start_ms", "t_end_ms", "cluster", "rate_hz", "pattern", "phase_ms", "route"});
                Stimulus x;
                std::string pattern = "poisson", route = "network";
                r.read(n, p, "t_start_ms", x.t_start_ms);
                r.read(n, p, "t_end_ms", x.t_end_ms);
                r.read(n, p, "cluster", x.cluster);
                r.read(n, p, "rate_hz", x.rate_hz);
                r.read(n, p, "pattern", pattern);
                r.read(n, p, "phase_ms", x.phase_ms);
                r.read(n, p, "route", route);
                for (const char* k : {"t_start_ms", "t_end_ms", "cluster", "rate_hz"})
                    if (n.IsMap() && !n[k])
                        r.errors.push_back(p + "." + k + ": required");
                if (pattern == "poisson")
                    x.pattern = StimulusPattern::poisson;
                else if (pattern == "regular")
                    x.pattern = StimulusPattern::regular;
                else
                    r.errors.push_back(p + ".pattern: expected poisson or regular, got '" + pattern + "'");
                if (route == "network")
                    x.route = StimulusRoute::network;
                else if (route == "direct")
                    x.route = StimulusRoute::direct;
                else
                    r.errors.push_back(p + ".route: expected network or direct, got '" + route + "'");
                r.require(x.cluster >= 1 && x.cluster <= s.wta.n_clusters, p + ".cluster", "must be in 1..12");
                r.require(x.rate_hz >= 0, p + ".rate_hz", "must be non-negative");
                r.require(x.t_start_ms >= 0, p + ".t_start_ms", "must be non-negative");
                r.require(x.t_end_ms > x.t_start_ms, p + ".t_end_ms", "must exceed t_start_ms");
                r.require(x.t_end_ms <= s.duration_ms, p + ".t_end_ms", "must not exceed duration_ms");
                r.require(x.phase_ms >= 0, p + ".phase_ms", "must be non-negative");
                s.stimulus.push_back(x);
            }
        }
    }

    if (r.errors.empty()) {
        try {
            build_wta(s.wta);
        } catch (const ConfigError& e) {
            r.errors.push_back(std::string("wta: ") + e.what());
        }
    }
    return r.errors;
}

inline std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Load and validate; throws ConfigError listing every problem.
inline Scenario load_scenario(const std::filesystem::path& path)
{
    Scenario s;
    const auto errors = parse_scenario(read_text_file(path), s, path.parent_path());
    if (!errors.empty()) {
        std::string msg = path.string() + ": invalid scenario";
        for (const auto& e : errors)
            msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return s;
}

} // namespace wtarm
