#pragma once

// Minimal standalone SVG charts for the diagnostics output.

#include <span>
#include <string>
#include <vector>

namespace hpm::svg {

struct Bar {
    std::string label;
    double value = 0.0;
    std::string color = "#4c72b0";
};

std::string bar_chart(const std::string& title, const std::string& y_label, std::span<const Bar> bars);

struct Series {
    std::string name;
    std::vector<double> values;
    std::string color = "#4c72b0";
};

// Index on x, log10(value) on y; non-positive values are dropped.
std::string log_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, std::span<const Series> series);

}  // namespace hpm::svg
