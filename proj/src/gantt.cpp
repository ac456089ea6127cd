#include "shopgraph/gantt.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

namespace shopgraph {
namespace {

constexpr std::array<const char*, 20> kPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896",
    "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
};

constexpr double kLeft = 60.0;
constexpr double kTop = 20.0;
constexpr double kLane = 32.0;
constexpr double kPlotWidth = 800.0;
constexpr double kAxisSpace = 40.0;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

Time tick_step(Time horizon) {
    Time step = 1;
    while (horizon / step > 10) {
        if (horizon / (step * 2) <= 10) return step * 2;
        if (horizon / (step * 5) <= 10) return step * 5;
        step *= 10;
    }
    return step;
}

}  // namespace

std::string render_gantt(const Instance& instance, const Schedule& schedule) {
    if (!is_complete(instance, schedule))
        throw std::invalid_argument("render_gantt: schedule is incomplete");

    const Time horizon = std::max<Time>(makespan(schedule), 1);
    const double scale = kPlotWidth / static_cast<double>(horizon);
    const int lanes = instance.num_machines();
    const double plot_bottom = kTop + kLane * lanes;
    const double width = kLeft + kPlotWidth + 20.0;
    const double height = plot_bottom + kAxisSpace;

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(width) << "\" height=\""
        << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
        << "<title>" << escape(instance.name().empty() ? "schedule" : instance.name()) << "</title>\n";

    for (int m = 0; m < lanes; ++m) {
        const double y = kTop + kLane * m;
        svg << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(y + kLane / 2 + 4)
            << "\" text-anchor=\"end\">M" << (m + 1) << "</text>\n";
        svg << "<line class=\"lane\" x1=\"" << num(kLeft) << "\" y1=\"" << num(y + kLane) << "\" x2=\"" << num(kLeft + kPlotWidth)
            << "\" y2=\"" << num(y + kLane) << "\" stroke=\"#e0e0e0\"/>\n";
    }

    for (const auto& [op, a] : schedule) {
        const double x = kLeft + scale * static_cast<double>(a.start);
        const double w = scale * static_cast<double>(a.end - a.start);
        const double y = kTop + kLane * a.machine + 3;
        svg << "<rect class=\"op\" x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
            << "\" height=\"" << num(kLane - 6) << "\" fill=\"" << kPalette[op.job % kPalette.size()]
            << "\" stroke=\"#333333\" stroke-width=\"0.5\"/>\n";
        svg << "<text x=\"" << num(x + w / 2) << "\" y=\"" << num(y + (kLane - 6) / 2 + 4)
            << "\" text-anchor=\"middle\">O" << (op.job + 1) << "," << (op.index + 1) << "</text>\n";
    }

    // time axis
    svg << "<line class=\"axis\" x1=\"" << num(kLeft) << "\" y1=\"" << num(plot_bottom) << "\" x2=\"" << num(kLeft + kPlotWidth)
        << "\" y2=\"" << num(plot_bottom) << "\" stroke=\"black\"/>\n";
    svg << "<line class=\"axis\" x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft) << "\" y2=\""
        << num(plot_bottom) << "\" stroke=\"black\"/>\n";
    const Time step = tick_step(horizon);
    for (Time t = 0; t <= horizon; t += step) {
        const double x = kLeft + scale * static_cast<double>(t);
        svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(plot_bottom) << "\" x2=\"" << num(x) << "\" y2=\""
            << num(plot_bottom + 5) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << num(x) << "\" y=\"" << num(plot_bottom + 17) << "\" text-anchor=\"middle\">" << t
            << "</text>\n";
    }
    svg << "<text x=\"" << num(kLeft + kPlotWidth / 2) << "\" y=\"" << num(plot_bottom + 33)
        << "\" text-anchor=\"middle\">time</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace shopgraph
