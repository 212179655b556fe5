#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "preprocess.hpp"

namespace fraudkit::svg {

inline std::string escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

class Document {
public:
    Document(double width, double height) : w_(width), h_(height) {}

    void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = "") {
        body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
              << "\" fill=\"" << fill << '"' << (extra.empty() ? "" : " " + extra) << "/>\n";
    }
    void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#333") {
        body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
              << "\" stroke=\"" << stroke << "\"/>\n";
    }
    void text(double x, double y, std::string_view s, const std::string& anchor = "start", double size = 11,
              const std::string& extra = "") {
        body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
              << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << '"' << (extra.empty() ? "" : " " + extra) << '>'
              << escape(s) << "</text>\n";
    }

    std::string str() const {
        std::ostringstream out;
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
            << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_) << "\">\n"
            << "<rect x=\"0\" y=\"0\" width=\"" << num(w_) << "\" height=\"" << num(h_) << "\" fill=\"white\"/>\n"
            << body_.str() << "</svg>\n";
        return out.str();
    }

private:
    double w_, h_;
    std::ostringstream body_;
};

inline const std::array<const char*, 10> kPalette = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                                     "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

/// One bar series: a label plus one value per group (nullopt draws an
/// "undef" placeholder bar of zero height).
struct Series {
    std::string label;
    std::vector<std::optional<double>> values;
};

/// Grouped bar chart with values in [0, 1]. Every (series, group) pair yields
/// exactly one <rect class="bar">.
inline std::string grouped_bar_chart(const std::string& title, const std::vector<std::string>& groups,
                                     const std::vector<Series>& series) {
    const double margin_l = 50, margin_t = 40, plot_h = 260, legend_row = 16;
    const double bar_w = 14, group_gap = 24;
    const double group_w = std::max<double>(1, static_cast<double>(series.size())) * bar_w + group_gap;
    const double plot_w = std::max(200.0, group_w * static_cast<double>(groups.size()));
    const double width = margin_l + plot_w + 20;
    const double height = margin_t + plot_h + 40 + legend_row * static_cast<double>(series.size()) + 10;
    Document doc(width, height);
    doc.text(width / 2, 22, title, "middle", 14);
    const double base = margin_t + plot_h;
    for (int t = 0; t <= 4; ++t) {
        const double v = t / 4.0, y = base - v * plot_h;
        doc.line(margin_l - 4, y, margin_l + plot_w, y, "#ddd");
        doc.text(margin_l - 6, y + 4, num(v), "end", 10);
    }
    doc.line(margin_l, margin_t, margin_l, base);
    doc.line(margin_l, base, margin_l + plot_w, base);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double gx = margin_l + group_gap / 2 + static_cast<double>(g) * group_w;
        for (std::size_t s = 0; s < series.size(); ++s) {
            const auto& v = series[s].values.at(g);
            const double x = gx + static_cast<double>(s) * bar_w;
            const std::string color = kPalette[s % kPalette.size()];
            const std::string meta = "data-series=\"" + escape(series[s].label) + "\" data-group=\"" + escape(groups[g]) + "\"";
            if (v) {
                const double h = std::clamp(*v, 0.0, 1.0) * plot_h;
                doc.rect(x, base - h, bar_w - 2, h, color, "class=\"bar\" " + meta + " data-value=\"" + num(*v) + "\"");
            } else {
                doc.rect(x, base, bar_w - 2, 0, color, "class=\"bar undef\" " + meta + " data-value=\"undef\"");
                doc.text(x + bar_w / 2, base - 3, "undef", "middle", 7);
            }
        }
        doc.text(gx + static_cast<double>(series.size()) * bar_w / 2, base + 16, groups[g], "middle", 11);
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const double y = base + 34 + legend_row * static_cast<double>(s);
        doc.rect(margin_l, y - 9, 10, 10, kPalette[s % kPalette.size()], "class=\"legend\"");
        doc.text(margin_l + 16, y, series[s].label, "start", 10);
    }
    return doc.str();
}

/// Diverging color, linear in [-1, 1]: blue (-1), white (0), red (+1).
inline std::string diverging_color(double v) {
    v = std::clamp(v, -1.0, 1.0);
    auto lerp = [](double a, double b, double t) { return static_cast<int>(std::lround(a + (b - a) * t)); };
    int r, g, b;
    if (v >= 0) {
        r = lerp(255, 178, v);
        g = lerp(255, 24, v);
        b = lerp(255, 43, v);
    } else {
        r = lerp(255, 33, -v);
        g = lerp(255, 102, -v);
        b = lerp(255, 172, -v);
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

inline std::string correlation_heatmap(const Correlation& c, const std::string& title) {
    const double cell = 28, label_w = 160, top = 50;
    const double n = static_cast<double>(c.names.size());
    Document doc(label_w + n * cell + 20, top + label_w + n * cell + 20);
    doc.text(label_w, 24, title, "start", 14);
    for (std::size_t i = 0; i < c.names.size(); ++i) {
        const double y = top + static_cast<double>(i) * cell;
        doc.text(label_w - 6, y + cell / 2 + 4, c.names[i], "end", 10);
        for (std::size_t j = 0; j < c.names.size(); ++j) {
            const double x = label_w + static_cast<double>(j) * cell;
            const double v = c.values(i, j);
            doc.rect(x, y, cell, cell, diverging_color(v), "class=\"cell\" data-value=\"" + num(v) + "\"");
            doc.text(x + cell / 2, y + cell / 2 + 3, num(v), "middle", 7);
        }
    }
    const double ly = top + n * cell + 8;
    for (std::size_t j = 0; j < c.names.size(); ++j) {
        const double x = label_w + static_cast<double>(j) * cell + cell / 2;
        doc.text(x, ly, c.names[j], "end", 10,
                 "transform=\"rotate(-60 " + num(x) + ' ' + num(ly) + ")\"");
    }
    return doc.str();
}

}  // namespace fraudkit::svg
