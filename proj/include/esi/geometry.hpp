#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "esi/tensor.hpp"

namespace esi {

using Vec3 = std::array<double, 3>;

double distance(const Vec3& a, const Vec3& b);

// Sorted, duplicate-free set of region indices.
class RegionSet {
public:
    RegionSet() = default;
    explicit RegionSet(std::vector<std::size_t> regions);

    const std::vector<std::size_t>& regions() const noexcept { return regions_; }
    std::size_t size() const noexcept { return regions_.size(); }
    bool empty() const noexcept { return regions_.empty(); }
    bool contains(std::size_t region) const;
    auto begin() const noexcept { return regions_.begin(); }
    auto end() const noexcept { return regions_.end(); }

    bool is_subset_of(const RegionSet& other) const;
    bool intersects(const RegionSet& other) const;
    std::size_t intersection_size(const RegionSet& other) const;
    RegionSet united(const RegionSet& other) const;

    friend bool operator==(const RegionSet&, const RegionSet&) = default;

private:
    std::vector<std::size_t> regions_;
};

// Region centroids (mm) with a symmetric, irreflexive neighbor graph.
class SourceSpace {
public:
    // Validates finiteness, symmetry, irreflexivity and that every region has a neighbor.
    SourceSpace(std::vector<Vec3> centroids, std::vector<std::vector<std::size_t>> adjacency);

    std::size_t n_regions() const noexcept { return centroids_.size(); }
    const std::vector<Vec3>& centroids() const noexcept { return centroids_; }
    const Vec3& centroid(std::size_t r) const { return centroids_.at(r); }
    const std::vector<std::vector<std::size_t>>& adjacency() const noexcept { return adjacency_; }
    const std::vector<std::size_t>& neighbors(std::size_t r) const { return adjacency_.at(r); }

    nlohmann::json to_json() const;
    static SourceSpace from_json(const nlohmann::json& j);

    friend bool operator==(const SourceSpace&, const SourceSpace&) = default;

private:
    std::vector<Vec3> centroids_;
    std::vector<std::vector<std::size_t>> adjacency_;
};

// N_c x N_s gain matrix.
class LeadField {
public:
    explicit LeadField(Tensor matrix);

    const Tensor& matrix() const noexcept { return matrix_; }
    std::size_t n_channels() const noexcept { return matrix_.dim(0); }
    std::size_t n_regions() const noexcept { return matrix_.dim(1); }

    friend bool operator==(const LeadField&, const LeadField&) = default;

private:
    Tensor matrix_;
};

inline constexpr double kSourceSphereRadiusMm = 80.0;
inline constexpr double kSensorSphereRadiusMm = 100.0;

// Quasi-uniform points on a sphere (Fibonacci lattice).
std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius);

SourceSpace build_synthetic_source_space(std::size_t n_regions, std::size_t k_neighbors, std::uint64_t seed);
LeadField build_lead_field(const SourceSpace& space, std::size_t n_channels, std::uint64_t seed);

// Regions within graph distance extent-1 of center; extent 1 yields {center}.
RegionSet grow_patch(const SourceSpace& space, std::size_t center, std::size_t extent);
// Hop distance from center for every region reached within max_hops (others absent).
std::vector<std::pair<std::size_t, std::size_t>> hop_distances(const SourceSpace& space, std::size_t center,
                                                              std::size_t max_hops);

void save_lead_field(const LeadField& lf, const std::filesystem::path& path);
LeadField load_lead_field(const std::filesystem::path& path);

void save_source_space(const SourceSpace& space, const std::filesystem::path& path);
SourceSpace load_source_space(const std::filesystem::path& path);

}  // namespace esi
