#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esi/geometry.hpp"
#include "esi/nmm.hpp"
#include "esi/tensor.hpp"

namespace esi::eval {

inline constexpr double kDefaultActiveFraction = 0.5;

// e_j = sum_t S(j, t)^2 for an N_s x N_t estimate.
std::vector<double> region_energy(const Tensor& S);

// Regions with energy >= fraction * max energy; empty for an all-zero estimate.
RegionSet threshold_active(const Tensor& S, double fraction = kDefaultActiveFraction);

// argmax_j e_j, smallest index on ties. UndefinedResultError when all energies are zero.
std::size_t peak_region(const Tensor& S);

struct PrecisionRecall {
    double precision = 0.0;  // %
    double recall = 0.0;     // %
};

PrecisionRecall precision_recall(const RegionSet& estimated, const RegionSet& truth);

// Distance from region j's centroid to the nearest ground-truth centroid (0 inside gt).
double distance_to_set(const SourceSpace& space, std::size_t region, const RegionSet& truth);

double localization_error(const Tensor& S, const RegionSet& truth, const SourceSpace& space);
double spatial_dispersion(const Tensor& S, const RegionSet& truth, const SourceSpace& space);
double nmse(const Tensor& estimate, const Tensor& truth);

struct MetricReport {
    double precision = 0.0;
    double recall = 0.0;
    std::optional<double> le_mm;  // empty when undefined (all-zero estimate)
    std::optional<double> sd_mm;
    double nmse = 0.0;
};

MetricReport evaluate(const Tensor& estimate, const PairedSample& sample, const SourceSpace& space,
                      double active_fraction = kDefaultActiveFraction);

struct MetricSummary {
    double mean = 0.0;  // NaN when n == 0
    double std = 0.0;   // sample standard deviation; 0 when n < 2
    std::size_t n = 0;
    std::size_t excluded = 0;
};

struct ReportSummary {
    MetricSummary precision, recall, le_mm, sd_mm, nmse;
};

ReportSummary aggregate(std::span<const MetricReport> reports);

nlohmann::json to_json(const MetricSummary& s);
nlohmann::json to_json(const ReportSummary& s);

// One row per sample: sample,precision,recall,le_mm,sd_mm,nmse (undefined values left blank).
std::string reports_to_csv(std::span<const MetricReport> reports, std::span<const std::string> sample_ids);

}  // namespace esi::eval
