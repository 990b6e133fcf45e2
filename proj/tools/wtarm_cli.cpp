// wtarm: run, analyze, plot and validate closed-loop scenarios.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "wtarm/wtarm.hpp"

namespace fs = std::filesystem;
using namespace wtarm;

namespace {

std::ifstream open_in(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open '" + p.string() + "'");
    return in;
}

void print_steps(const std::vector<SettleStep>& steps)
{
    std::printf("%-10s %5s %5s %5s %10s %12s\n", "t_cmd_ms", "from", "to", "step", "settle_ms", "final_err");
    for (const auto& s : steps) {
        char settle[32];
        if (s.settle_ms)
            std::snprintf(settle, sizeof settle, "%.1f", *s.settle_ms);
        else
            std::snprintf(settle, sizeof settle, "unsettled");
        std::printf("%-10.1f %5d %5d %5d %10s %9.3f deg\n", us_to_ms(s.t_command), s.from_cluster, s.to_cluster,
                    s.step_clusters(), settle, s.final_error_deg);
    }
    const auto lat = latency_by_step(steps);
    std::printf("mean settling by step size:");
    for (const auto& [k, v] : lat)
        std::printf("  %d:%.1fms", k, v);
    std::printf("\nstrictly increasing with step: %s\n", latency_strictly_increasing(lat) ? "yes" : "no");
}

int cmd_run(const fs::path& scenario, std::optional<std::uint64_t> seed, std::optional<fs::path> out,
            std::optional<int> threads)
{
    Scenario s = load_scenario(scenario);
    if (seed)
        s.seed = *seed;
    if (threads)
        s.threads = *threads;
    const fs::path dir = out ? *out : fs::path("runs") / (s.name + "-seed" + std::to_string(s.seed));
    const auto result = run_scenario(s);
    write_run(dir, result);

    const auto& r = result.report;
    std::printf("%s: %zu chip spikes, %zu commands, %zu winner transitions -> %s\n", s.name.c_str(),
                static_cast<std::size_t>(r.counters.chip_spikes), r.commands.size(), r.transitions.size(),
                dir.string().c_str());
    std::printf("final position %d (error %d counts, %.3f deg)\n", r.final_position, r.final_error_counts,
                r.final_error_deg);
    for (const auto& v : r.violations)
        std::printf("VIOLATION: %s\n", v.c_str());
    return r.violations.empty() ? 0 : 1;
}

int cmd_analyze(const fs::path& dir, double band, double hold)
{
    auto gt_in = open_in(dir / "ground_truth.csv");
    auto cmd_in = open_in(dir / "commands.csv");
    const auto gt = read_ground_truth_csv(gt_in);
    const auto cmds = read_command_csv(cmd_in);
    if (cmds.empty()) {
        std::printf("no commands in %s\n", (dir / "commands.csv").string().c_str());
    } else {
        const auto steps = analyze_settling(gt, cmds, {band, hold});
        print_steps(steps);
        std::size_t unsettled = 0;
        for (const auto& s : steps)
            unsettled += s.settle_ms ? 0 : 1;
        if (unsettled)
            std::printf("%zu step(s) never settled\n", unsettled);
    }

    std::size_t violations = 0;
    if (fs::exists(dir / "report.json")) {
        auto in = open_in(dir / "report.json");
        const auto j = nlohmann::json::parse(in);
        for (const auto& v : j.at("violations")) {
            std::printf("VIOLATION: %s\n", v.get<std::string>().c_str());
            ++violations;
        }
    }
    return violations == 0 ? 0 : 1;
}

int cmd_plot(const fs::path& dir)
{
    {
        auto in = open_in(dir / "spikes.csv");
        std::vector<SpikeEvent> events;
        for (const auto& c : wtarm::detail::read_csv(in, "t_us,neuron_id"))
            events.push_back({std::stoll(c[0]), static_cast<NeuronId>(std::stoul(c[1]))});
        Micros duration = events.empty() ? 1 : events.back().t;
        if (fs::exists(dir / "ground_truth.csv")) {
            auto gin = open_in(dir / "ground_truth.csv");
            const auto gt = read_ground_truth_csv(gin);
            if (!gt.empty())
                duration = gt.back().t;
        }
        std::ofstream os(dir / "raster.svg");
        plot::raster_svg(os, events, duration);
    }
    {
        auto gin = open_in(dir / "ground_truth.csv");
        auto cin = open_in(dir / "commands.csv");
        const auto gt = read_ground_truth_csv(gin);
        const auto cmds = read_command_csv(cin);
        std::ofstream os(dir / "position.svg");
        plot::position_svg(os, gt, cmds);
    }
    std::printf("wrote %s and %s\n", (dir / "raster.svg").string().c_str(), (dir / "position.svg").string().c_str());
    return 0;
}

int cmd_validate(const fs::path& path)
{
    Scenario s;
    const auto errors = parse_scenario(read_text_file(path), s, path.parent_path());
    for (const auto& e : errors)
        std::printf("%s: %s\n", path.string().c_str(), e.c_str());
    if (errors.empty())
        std::printf("%s: ok (%zu stimulus entries, %.0f ms)\n", path.string().c_str(), s.stimulus.size(),
                    s.duration_ms);
    return errors.empty() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Neuromorphic WTA robot-arm joint controller simulator"};
    app.require_subcommand(1);

    std::string run_path, run_out;
    std::uint64_t run_seed = 0;
    int run_threads = 1;
    auto* run = app.add_subcommand("run", "Run a scenario and write its traces");
    run->add_option("scenario", run_path, "Scenario file")->required();
    auto* seed_opt = run->add_option("--seed", run_seed, "Override the scenario seed");
    auto* out_opt = run->add_option("--out", run_out, "Output directory");
    auto* threads_opt = run->add_option("--threads", run_threads, "1 = sequential, 2 = chip on its own thread")
                            ->check(CLI::Range(1, 2));

    std::string an_dir;
    double band = 0.5, hold = 200.0;
    auto* analyze = app.add_subcommand("analyze", "Settling analysis of a run directory");
    analyze->add_option("run_dir", an_dir, "Run directory")->required();
    analyze->add_option("--band", band, "Settling band in degrees");
    analyze->add_option("--hold", hold, "Hold time in ms");

    std::string plot_dir;
    auto* plot_cmd = app.add_subcommand("plot", "Render raster.svg and position.svg for a run directory");
    plot_cmd->add_option("run_dir", plot_dir, "Run directory")->required();

    std::string val_path;
    auto* validate = app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("scenario", val_path, "Scenario file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run)
            return cmd_run(run_path, *seed_opt ? std::optional(run_seed) : std::nullopt,
                           *out_opt ? std::optional<fs::path>(run_out) : std::nullopt,
                           *threads_opt ? std::optional(run_threads) : std::nullopt);
        if (*analyze)
            return cmd_analyze(an_dir, band, hold);
        if (*plot_cmd)
            return cmd_plot(plot_dir);
        if (*validate)
            return cmd_validate(val_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
