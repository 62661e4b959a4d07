#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace degen {

using Json = nlohmann::ordered_json;

inline std::string fmt_num(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// JSON has no inf/nan; store them as strings so the manifest round-trips.
inline Json json_num(double v)
{
    if (std::isfinite(v)) return v;
    return fmt_num(v);
}

inline Json json_array(const std::vector<double>& v)
{
    Json a = Json::array();
    for (double x : v) a.push_back(json_num(x));
    return a;
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    template <class... Ts>
    void add(const Ts&... cells)
    {
        std::vector<std::string> r;
        (r.push_back(cell(cells)), ...);
        if (r.size() != columns.size()) throw std::invalid_argument("row width mismatch");
        rows.push_back(std::move(r));
    }

private:
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(double v) { return fmt_num(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(long v) { return std::to_string(v); }
    static std::string cell(unsigned long long v) { return std::to_string(v); }
    static std::string cell(unsigned long v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }
};

inline void write_csv(std::ostream& os, const Table& t)
{
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (k) os << ',';
            if (r[k].find_first_of(",\"\n") != std::string::npos) {
                os << '"';
                for (char c : r[k]) os << (c == '"' ? "\"\"" : std::string(1, c));
                os << '"';
            } else {
                os << r[k];
            }
        }
        os << '\n';
    };
    line(t.columns);
    for (const auto& r : t.rows) line(r);
}

inline std::string to_csv(const Table& t)
{
    std::ostringstream os;
    write_csv(os, t);
    return os.str();
}

struct Series {
    std::string name;
    std::vector<double> x, y;
};

struct PlotSpec {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool log_y = false;
    std::string stamp;  // rendered in a comment
};

inline std::string xml_escape(const std::string& s)
{
    std::string o;
    for (char c : s) {
        switch (c) {
        case '&': o += "&amp;"; break;
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
        }
    }
    return o;
}

inline std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series)
{
    const double W = 640, H = 420, L = 70, R = 150, Tm = 40, B = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto ty = [&](double y) { return spec.log_y ? std::log10(std::abs(y)) : y; };
    auto usable = [&](double y) { return std::isfinite(y) && (!spec.log_y || y != 0.0); };
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            if (!usable(s.y[k]) || !std::isfinite(s.x[k])) continue;
            x0 = std::min(x0, s.x[k]), x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, ty(s.y[k])), y1 = std::max(y1, ty(s.y[k]));
        }
    if (!(x1 >= x0)) x0 = 0, x1 = 1;
    if (!(y1 >= y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - Tm - B); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

    std::ostringstream o;
    char buf[160];
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n";
    if (!spec.stamp.empty()) o << "<!-- generated " << xml_escape(spec.stamp) << " -->\n";
    o << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(spec.title)
      << "</text>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", L,
                  Tm, W - L - R, H - Tm - B);
    o << buf;
    for (int k = 0; k <= 4; ++k) {
        double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" font-size=\"11\">%.3g</text>\n",
                      px(xv), H - B + 16, xv);
        o << buf;
        double yp = H - B - (yv - y0) / (y1 - y0) * (H - Tm - B);
        if (spec.log_y) std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\" font-size=\"11\">1e%.2g</text>\n", L - 6, yp + 4, yv);
        else std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\" font-size=\"11\">%.3g</text>\n", L - 6, yp + 4, yv);
        o << buf;
    }
    o << "<text x=\"" << L + (W - L - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << xml_escape(spec.xlabel) << "</text>\n";
    o << "<text x=\"16\" y=\"" << Tm + (H - Tm - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << Tm + (H - Tm - B) / 2 << ")\">" << xml_escape(spec.ylabel) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* col = palette[k % 7];
        o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t q = 0; q < s.x.size() && q < s.y.size(); ++q) {
            if (!usable(s.y[q])) continue;
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", first ? "" : " ", px(s.x[q]), py(s.y[q]));
            o << buf;
            first = false;
        }
        o << "\"/>\n";
        double ly = Tm + 14 + 18.0 * k;
        std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                      W - R + 10, ly - 4, W - R + 30, ly - 4, col);
        o << buf;
        o << "<text x=\"" << W - R + 36 << "\" y=\"" << ly << "\" font-size=\"11\">" << xml_escape(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

// UTC stamp from SOURCE_DATE_EPOCH when set, wall clock otherwise.
inline std::string report_timestamp()
{
    std::time_t t = std::time(nullptr);
    if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) {
        try {
            t = std::time_t(std::stoll(e));
        } catch (...) {
        }
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

inline std::string alpha_tag(double alpha)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", alpha);
    return buf;
}

// Files are named <command>-<alpha>-<timestamp>[-<part>].<ext>.
class ReportSink {
public:
    ReportSink(std::filesystem::path dir, std::string command, double alpha, std::string stamp = report_timestamp())
        : dir_(std::move(dir)), stem_(command + "-" + alpha_tag(alpha) + "-" + stamp), stamp_(std::move(stamp))
    {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (!std::filesystem::is_directory(dir_)) throw std::runtime_error("cannot create output directory " + dir_.string());
    }

    std::filesystem::path path(const std::string& ext, const std::string& part = {}) const
    {
        return dir_ / (stem_ + (part.empty() ? "" : "-" + part) + "." + ext);
    }

    std::filesystem::path write(const std::string& ext, const std::string& content, const std::string& part = {})
    {
        auto p = path(ext, part);
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        f << content;
        if (!f) throw std::runtime_error("cannot write " + p.string());
        written_.push_back(p);
        return p;
    }

    std::filesystem::path csv(const Table& t, const std::string& part = {}) { return write("csv", to_csv(t), part); }
    std::filesystem::path json(const Json& j, const std::string& part = {}) { return write("json", j.dump(2) + "\n", part); }
    std::filesystem::path svg(PlotSpec spec, const std::vector<Series>& s, const std::string& part = {})
    {
        spec.stamp = stamp_;
        return write("svg", render_svg(spec, s), part);
    }

    const std::vector<std::filesystem::path>& written() const { return written_; }
    const std::string& stamp() const { return stamp_; }

private:
    std::filesystem::path dir_;
    std::string stem_;
    std::string stamp_;
    std::vector<std::filesystem::path> written_;
};

}  // namespace degen
