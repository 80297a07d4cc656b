#include "hpm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace hpm::svg {
namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 400;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 60;

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

std::string header(const std::string& title, const std::string& y_label) {
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                      num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
           escape(title) + "</text>\n";
    out += "<text transform=\"translate(16," + num(kHeight / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           escape(y_label) + "</text>\n";
    const double x0 = kLeft, y0 = kHeight - kBottom;
    out += "<line x1=\"" + num(x0) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y0) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(kWidth - kRight) + "\" y2=\"" +
           num(y0) + "\" stroke=\"black\"/>\n";
    return out;
}

std::string y_ticks(double lo, double hi, bool log_scale) {
    std::string out;
    const double plot_h = kHeight - kTop - kBottom;
    for (int i = 0; i <= 4; ++i) {
        const double frac = i / 4.0;
        const double v = lo + frac * (hi - lo);
        const double y = kHeight - kBottom - frac * plot_h;
        out += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" +
               tick_label(log_scale ? std::pow(10.0, v) : v) + "</text>\n";
        out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kWidth - kRight) + "\" y2=\"" +
               num(y) + "\" stroke=\"#dddddd\"/>\n";
    }
    return out;
}

}  // namespace

std::string bar_chart(const std::string& title, const std::string& y_label, std::span<const Bar> bars) {
    std::string out = header(title, y_label);
    double hi = 0.0;
    for (const auto& b : bars) hi = std::max(hi, b.value);
    if (!(hi > 0.0)) hi = 1.0;
    hi *= 1.05;
    out += y_ticks(0.0, hi, false);
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const double slot = bars.empty() ? plot_w : plot_w / static_cast<double>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double h = std::max(0.0, bars[i].value) / hi * plot_h;
        const double x = kLeft + slot * static_cast<double>(i) + 0.1 * slot;
        const double y = kHeight - kBottom - h;
        out += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(0.8 * slot) + "\" height=\"" +
               num(h) + "\" fill=\"" + bars[i].color + "\"/>\n";
        out += "<text x=\"" + num(x + 0.4 * slot) + "\" y=\"" + num(kHeight - kBottom + 16) +
               "\" text-anchor=\"middle\" font-size=\"10\">" + escape(bars[i].label) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string log_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const Series> series) {
    std::string out = header(title, y_label);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::size_t longest = 1;
    for (const auto& s : series) {
        longest = std::max(longest, s.values.size());
        for (double v : s.values) {
            if (v > 0.0) {
                lo = std::min(lo, std::log10(v));
                hi = std::max(hi, std::log10(v));
            }
        }
    }
    if (!(hi >= lo)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-9) {
        lo -= 0.5;
        hi += 0.5;
    }
    out += y_ticks(lo, hi, true);
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const double step = longest > 1 ? plot_w / static_cast<double>(longest - 1) : 0.0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        std::string points;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            if (!(s.values[i] > 0.0)) continue;
            const double x = kLeft + step * static_cast<double>(i);
            const double y = kHeight - kBottom - (std::log10(s.values[i]) - lo) / (hi - lo) * plot_h;
            points += num(x) + "," + num(y) + " ";
        }
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" + points +
               "\"/>\n";
        const double ly = kTop + 14.0 * static_cast<double>(k) + 6;
        out += "<rect x=\"" + num(kWidth - kRight - 170) + "\" y=\"" + num(ly - 8) +
               "\" width=\"10\" height=\"10\" fill=\"" + s.color + "\"/>\n";
        out += "<text x=\"" + num(kWidth - kRight - 155) + "\" y=\"" + num(ly + 1) + "\">" + escape(s.name) +
               "</text>\n";
    }
    out += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 20) + "\" text-anchor=\"middle\">" +
           escape(x_label) + "</text>\n";
    out += "</svg>\n";
    return out;
}

}  // namespace hpm::svg
