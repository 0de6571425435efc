#include "shiftkit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "shiftkit/common.hpp"

namespace shiftkit::svg {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 36;
constexpr int kMarginBottom = 48;

std::string num(double v) {
    // Two decimals are plenty for pixel coordinates and keep files small.
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Axis {
    double lo = 0.0, hi = 1.0;

    void expand(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (hi <= lo) {
            hi = lo + 1.0;
        }
        const double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
};

std::vector<double> ticks(double lo, double hi, int target = 5) {
    const double span = hi - lo;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double mult : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * mult >= raw) {
            step = mag * mult;
            break;
        }
    }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12 * span; t += step)
        out.push_back(std::fabs(t) < step * 1e-9 ? 0.0 : t);
    return out;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

class Canvas {
public:
    Canvas() {
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
             << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
        out_ << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& color,
              double width = 1.0, bool dashed = false) {
        out_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
             << "\" y2=\"" << num(y2) << "\" stroke=\"" << color << "\" stroke-width=\""
             << num(width) << '"';
        if (dashed) out_ << " stroke-dasharray=\"6 4\"";
        out_ << "/>\n";
    }

    void circle(double cx, double cy, double r, const std::string& color) {
        out_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r)
             << "\" fill=\"" << color << "\" fill-opacity=\"0.75\"/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& color) {
        out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
             << "\" height=\"" << num(h) << "\" fill=\"" << color << "\"/>\n";
    }

    void text(double x, double y, const std::string& s, int size = 12,
              const std::string& anchor = "start", double rotate = 0.0) {
        out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
             << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << '"';
        if (rotate != 0.0)
            out_ << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y)
                 << ")\"";
        out_ << '>' << escape(s) << "</text>\n";
    }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    std::ostringstream out_;
};

struct Frame {
    Axis x, y;
    bool log_scale = false;

    double tx(double v) const {
        const double t = log_scale ? std::log10(v) : v;
        return kMarginLeft + (t - x.lo) / (x.hi - x.lo) * (kWidth - kMarginLeft - kMarginRight);
    }
    double ty(double v) const {
        const double t = log_scale ? std::log10(v) : v;
        return kHeight - kMarginBottom -
               (t - y.lo) / (y.hi - y.lo) * (kHeight - kMarginTop - kMarginBottom);
    }
};

void draw_axes(Canvas& canvas, const Frame& frame, const std::string& title,
               const std::string& x_label, const std::string& y_label) {
    const double x0 = kMarginLeft, x1 = kWidth - kMarginRight;
    const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    canvas.line(x0, y0, x1, y0, "#333");
    canvas.line(x0, y0, x0, y1, "#333");
    for (double t : ticks(frame.x.lo, frame.x.hi)) {
        const double px = kMarginLeft + (t - frame.x.lo) / (frame.x.hi - frame.x.lo) * (x1 - x0);
        canvas.line(px, y0, px, y0 + 4, "#333");
        canvas.text(px, y0 + 18, frame.log_scale ? "1e" + tick_label(t) : tick_label(t), 10,
                    "middle");
    }
    for (double t : ticks(frame.y.lo, frame.y.hi)) {
        const double py = y0 - (t - frame.y.lo) / (frame.y.hi - frame.y.lo) * (y0 - y1);
        canvas.line(x0 - 4, py, x0, py, "#333");
        canvas.text(x0 - 8, py + 3, frame.log_scale ? "1e" + tick_label(t) : tick_label(t), 10,
                    "end");
    }
    canvas.text((x0 + x1) / 2, kHeight - 12, x_label, 12, "middle");
    canvas.text(16, (y0 + y1) / 2, y_label, 12, "middle", -90);
    canvas.text((x0 + x1) / 2, 20, title, 14, "middle");
}

}  // namespace

std::string render_scatter(const ScatterSpec& spec) {
    Frame frame;
    frame.log_scale = spec.log_scale;
    bool first = true;
    for (const auto& s : spec.series) {
        for (const auto& p : s.points) {
            double px = p.x, py = p.y;
            if (spec.log_scale) {
                if (px <= 0.0 || py <= 0.0) continue;
                px = std::log10(px);
                py = std::log10(py);
            }
            if (first) {
                frame.x = {px, px};
                frame.y = {py, py};
                first = false;
            } else {
                frame.x.expand(px);
                frame.y.expand(py);
            }
        }
    }
    if (first) {
        frame.x = {0.0, 1.0};
        frame.y = {0.0, 1.0};
    }
    if (spec.diagonal) {
        frame.x.expand(frame.y.lo);
        frame.x.expand(frame.y.hi);
        frame.y.expand(frame.x.lo);
        frame.y.expand(frame.x.hi);
    }
    frame.x.pad();
    frame.y.pad();

    Canvas canvas;
    draw_axes(canvas, frame, spec.title, spec.x_label, spec.y_label);

    if (spec.diagonal) {
        const double lo = std::max(frame.x.lo, frame.y.lo);
        const double hi = std::min(frame.x.hi, frame.y.hi);
        const auto unlog = [&](double t) { return spec.log_scale ? std::pow(10.0, t) : t; };
        canvas.line(frame.tx(unlog(lo)), frame.ty(unlog(lo)), frame.tx(unlog(hi)),
                    frame.ty(unlog(hi)), "#cc3333", 1.2);
    }
    for (const auto& ln : spec.lines) {
        // Clip the line to the data x-range (linear axes only).
        const double xa = frame.x.lo, xb = frame.x.hi;
        const double ya = ln.intercept + ln.slope * xa;
        const double yb = ln.intercept + ln.slope * xb;
        canvas.line(frame.tx(xa), frame.ty(ya), frame.tx(xb), frame.ty(yb), ln.color, 1.5,
                    ln.dashed);
    }
    for (const auto& s : spec.series)
        for (const auto& p : s.points) {
            if (spec.log_scale && (p.x <= 0.0 || p.y <= 0.0)) continue;
            canvas.circle(frame.tx(p.x), frame.ty(p.y), 3.0, s.color);
        }

    // Legend, top-left inside the plot area.
    double ly = kMarginTop + 14;
    for (const auto& s : spec.series) {
        canvas.circle(kMarginLeft + 12, ly - 3, 3.0, s.color);
        canvas.text(kMarginLeft + 20, ly, s.name, 10);
        ly += 14;
    }
    for (const auto& ln : spec.lines) {
        canvas.line(kMarginLeft + 6, ly - 3, kMarginLeft + 18, ly - 3, ln.color, 1.5, ln.dashed);
        canvas.text(kMarginLeft + 22, ly, ln.name, 10);
        ly += 14;
    }
    return canvas.finish();
}

std::string render_grouped_bars(const BarGroupSpec& spec) {
    Frame frame;
    frame.x = {0.0, static_cast<double>(spec.groups.size())};
    frame.y = {0.0, 0.0};
    for (const auto& s : spec.series)
        for (double v : s.values)
            if (is_defined(v)) frame.y.expand(v);
    frame.y.pad();
    frame.y.lo = std::min(0.0, frame.y.lo);

    Canvas canvas;
    draw_axes(canvas, frame, spec.title, "", spec.y_label);

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double group_w = plot_w / std::max<std::size_t>(1, spec.groups.size());
    const double bar_w = group_w * 0.8 / std::max<std::size_t>(1, spec.series.size());

    for (std::size_t g = 0; g < spec.groups.size(); ++g) {
        const double gx = kMarginLeft + group_w * (static_cast<double>(g) + 0.1);
        for (std::size_t s = 0; s < spec.series.size(); ++s) {
            if (g >= spec.series[s].values.size()) continue;
            const double v = spec.series[s].values[g];
            if (!is_defined(v)) continue;
            const double top = frame.ty(std::max(0.0, v));
            const double bottom = frame.ty(std::min(0.0, v));
            canvas.rect(gx + bar_w * static_cast<double>(s), top, bar_w * 0.92,
                        std::max(0.5, bottom - top), spec.series[s].color);
        }
        canvas.text(gx + group_w * 0.4, kHeight - kMarginBottom + 18, spec.groups[g], 10,
                    "middle");
    }

    double ly = kMarginTop + 14;
    for (const auto& s : spec.series) {
        canvas.rect(kMarginLeft + 8, ly - 9, 10, 10, s.color);
        canvas.text(kMarginLeft + 22, ly, s.name, 10);
        ly += 14;
    }
    return canvas.finish();
}

}  // namespace shiftkit::svg
