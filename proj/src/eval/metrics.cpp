#include "esi/eval/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "esi/error.hpp"

namespace esi::eval {

namespace {

void require_estimate(const Tensor& S, const char* what) {
    if (S.rank() != 2) throw ParameterError(std::string(what) + ": expected an N_s x N_t estimate");
    S.require_finite(what);
}

void require_truth(const RegionSet& truth, const SourceSpace& space, const char* what) {
    if (truth.empty()) throw ParameterError(std::string(what) + ": ground-truth region set is empty");
    if (truth.regions().back() >= space.n_regions()) throw ParameterError(std::string(what) + ": region out of range");
}

MetricSummary summarize(const std::vector<double>& values, std::size_t excluded) {
    MetricSummary s;
    s.n = values.size();
    s.excluded = excluded;
    if (values.empty()) {
        s.mean = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

std::vector<double> region_energy(const Tensor& S) {
    require_estimate(S, "region_energy");
    std::vector<double> e(S.dim(0), 0.0);
    for (std::size_t j = 0; j < S.dim(0); ++j)
        for (double v : S.row(j)) e[j] += v * v;
    return e;
}

RegionSet threshold_active(const Tensor& S, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("active fraction must be in (0, 1]");
    const auto e = region_energy(S);
    double mx = 0.0;
    for (double v : e) mx = std::max(mx, v);
    if (mx == 0.0) return {};
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < e.size(); ++j)
        if (e[j] >= fraction * mx) active.push_back(j);
    return RegionSet(std::move(active));
}

std::size_t peak_region(const Tensor& S) {
    const auto e = region_energy(S);
    std::size_t best = 0;
    for (std::size_t j = 1; j < e.size(); ++j)
        if (e[j] > e[best]) best = j;
    if (e.empty() || e[best] == 0.0) throw UndefinedResultError("peak region of an all-zero estimate is undefined");
    return best;
}

PrecisionRecall precision_recall(const RegionSet& estimated, const RegionSet& truth) {
    if (truth.empty()) throw ParameterError("precision_recall: ground-truth region set is empty");
    const double hit = static_cast<double>(estimated.intersection_size(truth));
    PrecisionRecall pr;
    pr.precision = estimated.empty() ? 0.0 : 100.0 * hit / static_cast<double>(estimated.size());
    pr.recall = 100.0 * hit / static_cast<double>(truth.size());
    return pr;
}

double distance_to_set(const SourceSpace& space, std::size_t region, const RegionSet& truth) {
    if (truth.contains(region)) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g : truth) best = std::min(best, distance(space.centroid(region), space.centroid(g)));
    return best;
}

double localization_error(const Tensor& S, const RegionSet& truth, const SourceSpace& space) {
    require_truth(truth, space, "localization_error");
    if (S.dim(0) != space.n_regions()) throw ParameterError("localization_error: estimate rows != source regions");
    return distance_to_set(space, peak_region(S), truth);
}

double spatial_dispersion(const Tensor& S, const RegionSet& truth, const SourceSpace& space) {
    require_truth(truth, space, "spatial_dispersion");
    if (S.dim(0) != space.n_regions()) throw ParameterError("spatial_dispersion: estimate rows != source regions");
    const auto e = region_energy(S);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) {
        if (e[j] == 0.0) continue;
        const double d = distance_to_set(space, j, truth);
        num += d * d * e[j];
        den += e[j];
    }
    if (den == 0.0) throw UndefinedResultError("spatial dispersion of an all-zero estimate is undefined");
    return std::sqrt(num / den);
}

double nmse(const Tensor& estimate, const Tensor& truth) {
    require_same_dims(estimate, truth, "nmse");
    const double norm = truth.sum_squares();
    if (norm == 0.0) throw ParameterError("nmse: ground truth is all zero");
    double err = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = estimate[i] - truth[i];
        err += d * d;
    }
    return err / norm;
}

MetricReport evaluate(const Tensor& estimate, const PairedSample& sample, const SourceSpace& space,
                      double active_fraction) {
    const RegionSet truth = sample.active_regions();
    MetricReport r;
    const auto pr = precision_recall(threshold_active(estimate, active_fraction), truth);
    r.precision = pr.precision;
    r.recall = pr.recall;
    try {
        r.le_mm = localization_error(estimate, truth, space);
        r.sd_mm = spatial_dispersion(estimate, truth, space);
    } catch (const UndefinedResultError&) {
        r.le_mm.reset();
        r.sd_mm.reset();
    }
    r.nmse = nmse(estimate, sample.S);
    return r;
}

ReportSummary aggregate(std::span<const MetricReport> reports) {
    std::vector<double> p, r, le, sd, e;
    std::size_t undefined = 0;
    for (const auto& m : reports) {
        p.push_back(m.precision);
        r.push_back(m.recall);
        e.push_back(m.nmse);
        if (m.le_mm && m.sd_mm) {
            le.push_back(*m.le_mm);
            sd.push_back(*m.sd_mm);
        } else {
            ++undefined;
        }
    }
    return {summarize(p, 0), summarize(r, 0), summarize(le, undefined), summarize(sd, undefined), summarize(e, 0)};
}

nlohmann::json to_json(const MetricSummary& s) {
    nlohmann::json j = {{"n", s.n}, {"excluded_count", s.excluded}};
    j["mean"] = std::isnan(s.mean) ? nlohmann::json(nullptr) : nlohmann::json(s.mean);
    j["std"] = s.std;
    return j;
}

nlohmann::json to_json(const ReportSummary& s) {
    return {{"precision", to_json(s.precision)},
            {"recall", to_json(s.recall)},
            {"le_mm", to_json(s.le_mm)},
            {"sd_mm", to_json(s.sd_mm)},
            {"nmse", to_json(s.nmse)}};
}

std::string reports_to_csv(std::span<const MetricReport> reports, std::span<const std::string> sample_ids) {
    if (reports.size() != sample_ids.size()) throw ParameterError("reports_to_csv: one id per report required");
    std::string out = "sample,precision,recall,le_mm,sd_mm,nmse\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& m = reports[i];
        out += sample_ids[i] + "," + format_number(m.precision) + "," + format_number(m.recall) + "," +
               (m.le_mm ? format_number(*m.le_mm) : "") + "," + (m.sd_mm ? format_number(*m.sd_mm) : "") + "," +
               format_number(m.nmse) + "\n";
    }
    return out;
}

}  // namespace esi::eval
