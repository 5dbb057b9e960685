#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace softhjb {

// Minimal static line chart. Each series is (label, y-values) plotted against
// its index; y is log-scaled when all values are positive and span > 2 decades.
struct SvgChart {
    std::string title;
    std::string x_label = "n";
    std::string y_label;
    int width = 640;
    int height = 400;

    struct Series {
        std::string label;
        std::vector<double> y;
    };
    std::vector<Series> series;

    void add_series(std::string label, std::vector<double> y) {
        series.push_back({std::move(label), std::move(y)});
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("svg: cannot open " + path);
        const double ml = 60, mr = 20, mt = 40, mb = 45;
        const double pw = width - ml - mr, ph = height - mt - mb;

        double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
        size_t nmax = 2;
        bool positive = true;
        for (const auto& s : series)
            for (double v : s.y) {
                if (!std::isfinite(v)) continue;
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
                positive = positive && v > 0.0;
            }
        for (const auto& s : series) nmax = std::max(nmax, s.y.size());
        if (!std::isfinite(ymin)) {
            ymin = 0.0;
            ymax = 1.0;
        }
        bool logscale = positive && ymax / std::max(ymin, 1e-300) > 100.0;
        auto ty = [&](double v) {
            double lo = logscale ? std::log10(ymin) : ymin;
            double hi = logscale ? std::log10(ymax) : ymax;
            if (hi - lo < 1e-12) hi = lo + 1.0;
            double t = ((logscale ? std::log10(v) : v) - lo) / (hi - lo);
            return mt + ph * (1.0 - t);
        };
        auto tx = [&](size_t i) { return ml + pw * double(i) / double(nmax - 1); };

        const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
            << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
        out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
        out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\""
            << ph << "\" fill=\"none\" stroke=\"#333\"/>\n";
        out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
            << x_label << "</text>\n";
        out << "<text x=\"15\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 15 "
            << mt + ph / 2 << ")\">" << y_label << (logscale ? " (log)" : "") << "</text>\n";

        int ci = 0;
        double ly = mt + 14;
        for (const auto& s : series) {
            const char* color = colors[ci % 5];
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (size_t i = 0; i < s.y.size(); ++i)
                if (std::isfinite(s.y[i])) out << tx(i) << "," << ty(s.y[i]) << " ";
            out << "\"/>\n";
            out << "<text x=\"" << ml + pw - 6 << "\" y=\"" << ly
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
                << color << "\">" << s.label << "</text>\n";
            ly += 16;
            ++ci;
        }
        out << "</svg>\n";
    }
};

}  // namespace softhjb
