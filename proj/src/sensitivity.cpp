#include "shiftkit/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace shiftkit::sensitivity {

namespace {

void check_x_spread(const std::vector<PointXY>& points) {
    const double x0 = points.front().x;
    for (const auto& p : points)
        if (p.x != x0) return;
    throw NumericalError("all x values identical; regression slope undefined");
}

double sse(const std::vector<PointXY>& points, double slope, double intercept) {
    double s = 0.0;
    for (const auto& p : points) {
        const double r = p.y - (intercept + slope * p.x);
        s += r * r;
    }
    return s;
}

// Weighted least squares for y ~ a + b x.
void weighted_ls(const std::vector<PointXY>& points, const std::vector<double>& w, double& slope,
                 double& intercept) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        sw += w[i];
        sx += w[i] * points[i].x;
        sy += w[i] * points[i].y;
        sxx += w[i] * points[i].x * points[i].x;
        sxy += w[i] * points[i].x * points[i].y;
    }
    const double det = sw * sxx - sx * sx;
    if (std::fabs(det) < 1e-300) return;  // keep previous iterate
    slope = (sw * sxy - sx * sy) / det;
    intercept = (sxx * sy - sx * sxy) / det;
}

}  // namespace

RegressionFit ols_fit(const std::vector<PointXY>& points) {
    if (points.size() < 2) throw ValidationError("OLS needs at least 2 points");
    check_x_spread(points);

    double mx = 0, my = 0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(points.size());
    my /= static_cast<double>(points.size());
    double sxx = 0, sxy = 0;
    for (const auto& p : points) {
        sxx += (p.x - mx) * (p.x - mx);
        sxy += (p.x - mx) * (p.y - my);
    }
    RegressionFit fit;
    fit.kind = FitKind::Ols;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.n_points = points.size();
    fit.loss = sse(points, fit.slope, fit.intercept);
    return fit;
}

double pinball_loss(const std::vector<PointXY>& points, double slope, double intercept,
                    double tau) {
    double loss = 0.0;
    for (const auto& p : points) {
        const double r = p.y - (intercept + slope * p.x);
        loss += r >= 0.0 ? tau * r : (tau - 1.0) * r;
    }
    return loss;
}

RegressionFit quantile_fit(const std::vector<PointXY>& points, double tau) {
    if (points.size() < 3) throw ValidationError("quantile regression needs at least 3 points");
    if (tau <= 0.0 || tau >= 1.0) throw ValidationError("tau must be inside (0, 1)");
    check_x_spread(points);

    // IRLS on the smoothed pinball objective, annealing the smoothing eps.
    RegressionFit init = ols_fit(points);
    double slope = init.slope, intercept = init.intercept;
    double eps = 1e-2;
    std::vector<double> w(points.size());
    for (int iter = 0; iter < 120; ++iter) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double r = points[i].y - (intercept + slope * points[i].x);
            const double grad_weight = r >= 0.0 ? tau : 1.0 - tau;
            w[i] = grad_weight / std::max(std::fabs(r), eps);
        }
        weighted_ls(points, w, slope, intercept);
        eps = std::max(eps * 0.8, 1e-12);
    }

    double best_loss = pinball_loss(points, slope, intercept, tau);
    double best_slope = slope, best_intercept = intercept;

    // The LP optimum passes through two data points; on small instances an
    // exact sweep over point pairs pins it down.
    if (points.size() <= 64) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            for (std::size_t j = i + 1; j < points.size(); ++j) {
                const double dx = points[j].x - points[i].x;
                if (dx == 0.0) continue;
                const double b = (points[j].y - points[i].y) / dx;
                const double a = points[i].y - b * points[i].x;
                const double loss = pinball_loss(points, b, a, tau);
                if (loss < best_loss) {
                    best_loss = loss;
                    best_slope = b;
                    best_intercept = a;
                }
            }
        }
    }

    RegressionFit fit;
    fit.kind = FitKind::Quantile;
    fit.tau = tau;
    fit.slope = best_slope;
    fit.intercept = best_intercept;
    fit.n_points = points.size();
    fit.loss = best_loss;
    return fit;
}

double sensitivity_ratio(double drop, double distance) {
    if (distance <= 0.0) throw NumericalError("sensitivity ratio needs a positive distance");
    return drop / distance;
}

namespace {

std::vector<SensitivityRecord> slope_records(const std::vector<SubjectSeries>& series) {
    std::vector<SensitivityRecord> records;
    records.reserve(series.size());
    for (const auto& s : series) {
        SensitivityRecord rec;
        rec.subject = s.subject;
        rec.n_points = s.f1_points.size();
        auto slope_of = [](const std::vector<PointXY>& pts) -> double {
            if (pts.size() < 2) return kUndefined;
            try {
                return ols_fit(pts).slope;
            } catch (const NumericalError&) {
                return kUndefined;
            }
        };
        rec.q_acc = slope_of(s.acc_points);
        rec.q_f1 = slope_of(s.f1_points);
        records.push_back(std::move(rec));
    }
    return records;
}

void sort_by_qf1(std::vector<SensitivityRecord>& records) {
    std::stable_sort(records.begin(), records.end(),
                     [](const SensitivityRecord& a, const SensitivityRecord& b) {
                         if (a.eligible != b.eligible) return a.eligible;
                         const double qa = is_defined(a.q_f1) ? a.q_f1 : -1e300;
                         const double qb = is_defined(b.q_f1) ? b.q_f1 : -1e300;
                         if (qa != qb) return qa > qb;
                         return a.subject < b.subject;
                     });
}

}  // namespace

std::vector<SensitivityRecord> per_feature_sensitivities(const std::vector<SubjectSeries>& series) {
    if (series.empty()) throw ValidationError("no feature series given");
    auto records = slope_records(series);
    for (auto& rec : records) {
        if (rec.n_points < 2) {
            rec.eligible = false;
            rec.ineligible_reason = "fewer than 2 cells";
        }
    }
    sort_by_qf1(records);
    return records;
}

std::vector<SensitivityRecord> per_class_sensitivities(
    const std::vector<SubjectSeries>& series,
    const std::vector<std::vector<std::size_t>>& class_counts_per_cell, std::size_t min_count,
    std::size_t min_cells) {
    if (series.empty()) throw ValidationError("no class series given");
    if (class_counts_per_cell.size() != series.size())
        throw ValidationError("per-class counts do not align with series");

    auto records = slope_records(series);
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::size_t cells_with_support = 0;
        for (std::size_t count : class_counts_per_cell[i])
            if (count >= min_count) ++cells_with_support;
        if (cells_with_support < min_cells) {
            records[i].eligible = false;
            records[i].ineligible_reason =
                "occurs >= " + std::to_string(min_count) + " times in only " +
                std::to_string(cells_with_support) + " cells (need " + std::to_string(min_cells) +
                ")";
        } else if (records[i].n_points < 2) {
            records[i].eligible = false;
            records[i].ineligible_reason = "fewer than 2 usable cells";
        }
    }
    sort_by_qf1(records);
    return records;
}

namespace {

// Feature -> targeted-augmentation families. Color statistics map to color
// jittering; blurriness to Gaussian blur; shape ratios and all moments to
// random affine + random perspective; size features plus raw and
// translation-invariant moments to random resized crop.
const std::map<std::string, std::vector<std::string>>& augmentation_table() {
    static const std::map<std::string, std::vector<std::string>> table = [] {
        std::map<std::string, std::vector<std::string>> t;
        for (const char* f :
             {"intensity_R_mean", "intensity_G_mean", "intensity_B_mean", "intensity_R_std",
              "intensity_G_std", "intensity_B_std", "hue_mean", "saturation_mean",
              "brightness_mean", "hue_std", "saturation_std", "brightness_std"})
            t[f] = {"color jittering"};
        t["blurriness"] = {"gaussian blur"};
        for (const char* f : {"compactness", "formfactor", "eccentricity", "convexity"})
            t[f] = {"random affine", "random perspective"};
        for (const char* f : {"height", "hull_area", "ESD"}) t[f] = {"random resized crop"};
        for (const char* m : {"M00", "M10", "M01", "M20", "M11", "M02", "M30", "M21", "M12", "M03",
                              "mu20", "mu11", "mu02", "mu30", "mu21", "mu12", "mu03"})
            t[m] = {"random affine", "random perspective", "random resized crop"};
        for (const char* m : {"nu20", "nu11", "nu02", "nu30", "nu21", "nu12", "nu03", "I1", "I2",
                              "I3", "I4", "I5", "I6", "I7"})
            t[m] = {"random affine", "random perspective"};
        return t;
    }();
    return table;
}

}  // namespace

std::vector<std::string> augmentation_families(const std::string& feature) {
    const auto& table = augmentation_table();
    auto it = table.find(feature);
    return it == table.end() ? std::vector<std::string>{} : it->second;
}

RecommendationReport recommend_augmentations(const std::vector<SensitivityRecord>& records,
                                             double q_threshold) {
    if (records.empty()) throw ValidationError("no sensitivity records given");
    RecommendationReport report;
    std::map<std::string, std::vector<std::string>> by_family;
    for (const auto& rec : records) {
        if (!rec.eligible || !is_defined(rec.q_f1) || rec.q_f1 <= q_threshold) continue;
        const auto families = augmentation_families(rec.subject);
        if (families.empty()) {
            report.unmapped_features.push_back(rec.subject);
            continue;
        }
        for (const auto& fam : families) by_family[fam].push_back(rec.subject);
    }
    for (auto& [family, features] : by_family)
        report.recommendations.push_back({family, std::move(features)});
    if (report.recommendations.empty() && report.unmapped_features.empty())
        report.note = "no feature sensitivity exceeds Q_F1 threshold " + fmt_double(q_threshold);
    return report;
}

}  // namespace shiftkit::sensitivity
