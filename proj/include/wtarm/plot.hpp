#pragma once

// Minimal SVG renderings of a run: spike raster and joint position.

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>

#include "wtarm/analysis.hpp"
#include "wtarm/angle_selector.hpp"
#include "wtarm/types.hpp"

namespace wtarm::plot {

struct Frame
{
    double width{960};
    double height{360};
    double margin{48};
};

namespace detail {

inline void header(std::ostream& os, const Frame& f, const std::string& title)
{
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                  "font-family=\"sans-serif\" font-size=\"11\">\n",
                  f.width, f.height);
    os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"20\" font-size=\"13\">", f.margin);
    os << buf << title << "</text>\n";
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n",
                  f.margin, f.margin, f.width - 2 * f.margin, f.height - 2 * f.margin);
    os << buf;
}

inline void label(std::ostream& os, double x, double y, const std::string& text, const char* anchor = "middle")
{
    char buf[128];
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"%s\">", x, y, anchor);
    os << buf << text << "</text>\n";
}

} // namespace detail

/// One dot per spike; neuron id on the vertical axis, time in seconds.
inline void raster_svg(std::ostream& os, std::span<const SpikeEvent> events, Micros duration, const Frame& f = {})
{
    detail::header(os, f, "Spike raster");
    NeuronId max_id = 1;
    for (const auto& e : events)
        max_id = std::max(max_id, e.neuron_id);
    const double pw = f.width - 2 * f.margin, ph = f.height - 2 * f.margin;
    const double span = static_cast<double>(std::max<Micros>(duration, 1));
    char buf[128];
    for (const auto& e : events) {
        const double x = f.margin + pw * static_cast<double>(e.t) / span;
        const double y = f.margin + ph * (1.0 - static_cast<double>(e.neuron_id) / (max_id + 1));
        std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"1\" height=\"1\" fill=\"#135\"/>\n", x, y);
        os << buf;
    }
    detail::label(os, f.width / 2, f.height - 12, "time (s), 0 .. " + std::to_string(us_to_s(duration)).substr(0, 6));
    detail::label(os, 14, f.height / 2, "id", "start");
    os << "</svg>\n";
}

/// Joint angle over time with the commanded table targets as steps.
inline void position_svg(std::ostream& os, std::span<const GroundTruthRow> trace, std::span<const Command> cmds,
                         const Frame& f = {})
{
    detail::header(os, f, "Joint position");
    if (trace.empty()) {
        os << "</svg>\n";
        return;
    }
    double lo = 0, hi = kAngleTable.back().angle_deg;
    for (const auto& r : trace) {
        lo = std::min(lo, r.angle_deg);
        hi = std::max(hi, r.angle_deg);
    }
    lo -= 5;
    hi += 5;
    const double t_end = static_cast<double>(std::max<Micros>(trace.back().t, 1));
    const double pw = f.width - 2 * f.margin, ph = f.height - 2 * f.margin;
    auto px = [&](Micros t) { return f.margin + pw * static_cast<double>(t) / t_end; };
    auto py = [&](double a) { return f.margin + ph * (1.0 - (a - lo) / (hi - lo)); };
    char buf[96];

    if (!cmds.empty()) {
        os << "<polyline fill=\"none\" stroke=\"#c63\" stroke-dasharray=\"4 3\" points=\"";
        double target = 0;
        std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(0), py(target));
        os << buf;
        for (const auto& c : cmds) {
            const double next = map_angle(c.cluster).angle_deg;
            std::snprintf(buf, sizeof buf, "%.1f,%.1f %.1f,%.1f ", px(c.t), py(target), px(c.t), py(next));
            os << buf;
            target = next;
        }
        std::snprintf(buf, sizeof buf, "%.1f,%.1f", px(trace.back().t), py(target));
        os << buf << "\"/>\n";
    }

    os << "<polyline fill=\"none\" stroke=\"#135\" stroke-width=\"1.2\" points=\"";
    const std::size_t stride = std::max<std::size_t>(1, trace.size() / 4000);
    for (std::size_t i = 0; i < trace.size(); i += stride) {
        std::snprintf(buf, sizeof buf, "%.1f,%.2f ", px(trace[i].t), py(trace[i].angle_deg));
        os << buf;
    }
    os << "\"/>\n";
    for (double a = 0; a <= hi; a += 20) {
        std::snprintf(buf, sizeof buf, "%.0f", a);
        detail::label(os, f.margin - 6, py(a) + 4, buf, "end");
    }
    detail::label(os, f.width / 2, f.height - 12, "time (s), 0 .. " + std::to_string(us_to_s(trace.back().t)).substr(0, 6));
    detail::label(os, 14, f.margin - 8, "deg", "start");
    os << "</svg>\n";
}

} // namespace wtarm::plot
