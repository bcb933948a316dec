#include "esi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <set>

#include "esi/error.hpp"
#include "esi/rng.hpp"
#include "esi/tensor_io.hpp"

namespace esi {
namespace {

using Mat3 = std::array<Vec3, 3>;

// Rotation matrix from a uniformly random unit quaternion.
Mat3 random_rotation(Rng& rng) {
    const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    const double w = a * std::sin(2.0 * std::numbers::pi * u2);
    const double x = a * std::cos(2.0 * std::numbers::pi * u2);
    const double y = b * std::sin(2.0 * std::numbers::pi * u3);
    const double z = b * std::cos(2.0 * std::numbers::pi * u3);
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
             {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
             {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

Vec3 rotate(const Mat3& m, const Vec3& v) {
    Vec3 out{};
    for (int i = 0; i < 3; ++i) out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2];
    return out;
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

}  // namespace

double distance(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

RegionSet::RegionSet(std::vector<std::size_t> regions) : regions_(std::move(regions)) {
    std::sort(regions_.begin(), regions_.end());
    regions_.erase(std::unique(regions_.begin(), regions_.end()), regions_.end());
}

bool RegionSet::contains(std::size_t region) const {
    return std::binary_search(regions_.begin(), regions_.end(), region);
}

bool RegionSet::is_subset_of(const RegionSet& other) const {
    return std::includes(other.regions_.begin(), other.regions_.end(), regions_.begin(), regions_.end());
}

bool RegionSet::intersects(const RegionSet& other) const { return intersection_size(other) > 0; }

std::size_t RegionSet::intersection_size(const RegionSet& other) const {
    std::size_t n = 0;
    auto a = regions_.begin();
    auto b = other.regions_.begin();
    while (a != regions_.end() && b != other.regions_.end()) {
        if (*a < *b) {
            ++a;
        } else if (*b < *a) {
            ++b;
        } else {
            ++n;
            ++a;
            ++b;
        }
    }
    return n;
}

RegionSet RegionSet::united(const RegionSet& other) const {
    std::vector<std::size_t> merged;
    std::set_union(regions_.begin(), regions_.end(), other.regions_.begin(), other.regions_.end(),
                   std::back_inserter(merged));
    return RegionSet(std::move(merged));
}

SourceSpace::SourceSpace(std::vector<Vec3> centroids, std::vector<std::vector<std::size_t>> adjacency)
    : centroids_(std::move(centroids)), adjacency_(std::move(adjacency)) {
    const std::size_t n = centroids_.size();
    if (n == 0) throw ParameterError("source space needs at least one region");
    if (adjacency_.size() != n) throw ParameterError("adjacency list count does not match region count");
    for (const auto& c : centroids_) {
        for (double v : c)
            if (!std::isfinite(v)) throw ParameterError("non-finite centroid coordinate");
    }
    for (std::size_t r = 0; r < n; ++r) {
        auto& nb = adjacency_[r];
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
        if (nb.empty()) throw ParameterError("region " + std::to_string(r) + " has no neighbors");
        for (auto m : nb) {
            if (m >= n) throw ParameterError("neighbor index out of range in region " + std::to_string(r));
            if (m == r) throw ParameterError("region " + std::to_string(r) + " lists itself as a neighbor");
        }
    }
    for (std::size_t r = 0; r < n; ++r) {
        for (auto m : adjacency_[r]) {
            if (!std::binary_search(adjacency_[m].begin(), adjacency_[m].end(), r)) {
                throw ParameterError("adjacency not symmetric between " + std::to_string(r) + " and " +
                                     std::to_string(m));
            }
        }
    }
}

nlohmann::json SourceSpace::to_json() const {
    nlohmann::json j;
    j["centroids"] = centroids_;
    j["adjacency"] = adjacency_;
    return j;
}

SourceSpace SourceSpace::from_json(const nlohmann::json& j) {
    try {
        return SourceSpace(j.at("centroids").get<std::vector<Vec3>>(),
                           j.at("adjacency").get<std::vector<std::vector<std::size_t>>>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed source space JSON: ") + e.what());
    }
}

LeadField::LeadField(Tensor matrix) : matrix_(std::move(matrix)) {
    if (matrix_.rank() != 2) throw FormatError("lead field must be a matrix, got " + dims_to_string(matrix_.dims()));
    if (!matrix_.all_finite()) throw FormatError("lead field contains non-finite entries");
    for (std::size_t s = 0; s < n_regions(); ++s) {
        bool nonzero = false;
        for (std::size_t c = 0; c < n_channels() && !nonzero; ++c) nonzero = matrix_(c, s) != 0.0;
        if (!nonzero) throw FormatError("lead field column " + std::to_string(s) + " is all zero");
    }
}

std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius) {
    std::vector<Vec3> pts(n);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double theta = golden * static_cast<double>(i);
        pts[i] = {radius * r * std::cos(theta), radius * r * std::sin(theta), radius * z};
    }
    return pts;
}

SourceSpace build_synthetic_source_space(std::size_t n_regions, std::size_t k_neighbors, std::uint64_t seed) {
    if (n_regions < 8) throw ParameterError("n_regions must be >= 8");
    if (k_neighbors < 1 || k_neighbors >= n_regions) throw ParameterError("k_neighbors must be in [1, n_regions)");

    Rng rng(seed);
    const Mat3 rot = random_rotation(rng);
    auto centroids = fibonacci_sphere(n_regions, kSourceSphereRadiusMm);
    for (auto& c : centroids) c = rotate(rot, c);

    std::vector<std::set<std::size_t>> sym(n_regions);
    std::vector<std::size_t> order(n_regions);
    for (std::size_t r = 0; r < n_regions; ++r) {
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> d(n_regions);
        for (std::size_t m = 0; m < n_regions; ++m) d[m] = distance(centroids[r], centroids[m]);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
        std::size_t taken = 0;
        for (std::size_t idx = 0; idx < n_regions && taken < k_neighbors; ++idx) {
            const std::size_t m = order[idx];
            if (m == r) continue;
            sym[r].insert(m);
            sym[m].insert(r);
            ++taken;
        }
    }
    std::vector<std::vector<std::size_t>> adjacency(n_regions);
    for (std::size_t r = 0; r < n_regions; ++r) adjacency[r].assign(sym[r].begin(), sym[r].end());
    return SourceSpace(std::move(centroids), std::move(adjacency));
}

LeadField build_lead_field(const SourceSpace& space, std::size_t n_channels, std::uint64_t seed) {
    if (n_channels < 2) throw ParameterError("n_channels must be >= 2");
    Rng rng(seed);
    const Mat3 rot = random_rotation(rng);
    auto sensors = fibonacci_sphere(n_channels, kSensorSphereRadiusMm);
    for (auto& s : sensors) s = rotate(rot, s);

    // Radial dipole orientation with a small seeded tilt; gain = (n . (r_c - r_s)) / d^3.
    constexpr double kOrientationJitter = 0.1;
    const std::size_t n_regions = space.n_regions();
    Tensor g({n_channels, n_regions});
    for (std::size_t s = 0; s < n_regions; ++s) {
        const Vec3& pos = space.centroid(s);
        const double norm = std::sqrt(dot(pos, pos));
        Vec3 orient{};
        for (int i = 0; i < 3; ++i) {
            const double radial = norm > 0.0 ? pos[i] / norm : (i == 2 ? 1.0 : 0.0);
            orient[i] = radial + kOrientationJitter * rng.normal();
        }
        const double on = std::sqrt(dot(orient, orient));
        for (auto& v : orient) v /= on;

        double col_norm = 0.0;
        for (std::size_t c = 0; c < n_channels; ++c) {
            const Vec3 diff{sensors[c][0] - pos[0], sensors[c][1] - pos[1], sensors[c][2] - pos[2]};
            const double d = std::sqrt(dot(diff, diff));
            if (d < 1e-9) {
                throw ParameterError("degenerate geometry: sensor " + std::to_string(c) + " coincides with region " +
                                     std::to_string(s));
            }
            const double gain = dot(orient, diff) / (d * d * d);
            g(c, s) = gain;
            col_norm += gain * gain;
        }
        col_norm = std::sqrt(col_norm);
        if (col_norm == 0.0) throw ParameterError("region " + std::to_string(s) + " is invisible to every sensor");
        for (std::size_t c = 0; c < n_channels; ++c) g(c, s) /= col_norm;
    }
    return LeadField(std::move(g));
}

std::vector<std::pair<std::size_t, std::size_t>> hop_distances(const SourceSpace& space, std::size_t center,
                                                              std::size_t max_hops) {
    if (center >= space.n_regions()) throw ParameterError("center region out of range");
    std::vector<std::size_t> hops(space.n_regions(), static_cast<std::size_t>(-1));
    std::vector<std::pair<std::size_t, std::size_t>> reached;
    std::deque<std::size_t> queue{center};
    hops[center] = 0;
    while (!queue.empty()) {
        const std::size_t r = queue.front();
        queue.pop_front();
        reached.emplace_back(r, hops[r]);
        if (hops[r] == max_hops) continue;
        for (auto m : space.neighbors(r)) {
            if (hops[m] != static_cast<std::size_t>(-1)) continue;
            hops[m] = hops[r] + 1;
            queue.push_back(m);
        }
    }
    std::sort(reached.begin(), reached.end());
    return reached;
}

RegionSet grow_patch(const SourceSpace& space, std::size_t center, std::size_t extent) {
    if (extent < 1) throw ParameterError("extent must be >= 1");
    std::vector<std::size_t> regions;
    for (const auto& [r, h] : hop_distances(space, center, extent - 1)) regions.push_back(r);
    return RegionSet(std::move(regions));
}

void save_lead_field(const LeadField& lf, const std::filesystem::path& path) { save_tensor(lf.matrix(), path); }

LeadField load_lead_field(const std::filesystem::path& path) { return LeadField(load_tensor(path)); }

void save_source_space(const SourceSpace& space, const std::filesystem::path& path) {
    write_text_file(path, space.to_json().dump(1));
}

SourceSpace load_source_space(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return SourceSpace::from_json(j);
}

}  // namespace esi
