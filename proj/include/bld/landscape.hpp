#pragma once
// Belief landscape: 2D embedded user-weeks, density-peak attractors and
// weekly attractor assignment.

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bld/beliefdyn.hpp"
#include "bld/datamodel.hpp"

namespace bld {

inline constexpr int kNoise = -1;

struct UserWeek {
    std::string user;
    int week = 0;

    auto operator<=>(const UserWeek&) const = default;
};

struct EmbeddedPoint {
    std::string user;
    int week = 0;
    double x = 0.0;
    double y = 0.0;

    UserWeek key() const { return {user, week}; }
    bool operator==(const EmbeddedPoint&) const = default;
};

/// Sorts points into canonical (user, week) order. Throws on duplicate keys
/// or non-finite coordinates.
void canonicalize(std::vector<EmbeddedPoint>& points);

/// embedding.csv with header user,week,x,y. Duplicate (user, week) is fatal.
std::vector<EmbeddedPoint> load_embedding(const std::filesystem::path& path);
std::vector<EmbeddedPoint> parse_embedding(std::istream& in);
/// Coordinates are written with 17 significant digits so they round-trip exactly.
void save_embedding(std::ostream& out, std::span<const EmbeddedPoint> points);

struct EmbeddingFilter {
    std::vector<EmbeddedPoint> points;
    std::vector<UserWeek> rejected;
};

/// Keeps points whose (user, week) has a belief vector in `series`.
EmbeddingFilter restrict_to_series(std::vector<EmbeddedPoint> points, const BeliefVectorSeries& series);

/// Deterministic rank-2 projection of every stored belief vector onto the two
/// leading principal axes (power iteration with deflation, fixed seed).
/// Throws InputError("degenerate projection") when all vectors coincide.
std::vector<EmbeddedPoint> fallback_project(const BeliefVectorSeries& series, std::uint64_t seed = 20200525,
                                            int threads = 1);

struct ClusterConfig {
    /// Fixed number of attractors. Takes precedence over gamma_threshold.
    std::optional<int> k;
    std::optional<double> gamma_threshold;
    /// Gaussian kernel bandwidth; default is 1/20 of the bounding-box diagonal.
    std::optional<double> bandwidth;
    /// Points with density below this are NOISE.
    double noise_floor = 0.0;
    int threads = 1;
};

struct AttractorSet {
    int k = 0;
    double bandwidth = 0.0;
    ClusterConfig config;
    /// Canonically ordered input points and per-point results.
    std::vector<EmbeddedPoint> points;
    std::vector<double> density;
    std::vector<double> delta;
    /// Nearest higher-density neighbor; -1 for the global density maximum.
    std::vector<std::ptrdiff_t> parent;
    std::vector<int> labels;
    /// Point index of each attractor's peak; attractor ids follow density order.
    std::vector<std::size_t> peak_points;

    std::array<double, 2> peak(int attractor) const;
    std::vector<std::size_t> member_counts() const;
    nlohmann::json to_json() const;
};

/// Density-peak clustering: Gaussian-kernel density, distance to the nearest
/// higher-density point, peaks by largest density * distance, and label
/// propagation down the nearest-higher-density chain.
AttractorSet density_peak_cluster(std::vector<EmbeddedPoint> points, const ClusterConfig& cfg);

/// (user, week) -> attractor id or kNoise.
class AssignmentTable {
public:
    AssignmentTable() = default;
    AssignmentTable(int k, std::map<UserWeek, int> labels) : k_(k), labels_(std::move(labels)) {}

    int k() const { return k_; }
    std::optional<int> at(const std::string& user, int week) const;
    const std::map<UserWeek, int>& entries() const { return labels_; }
    std::size_t size() const { return labels_.size(); }

    bool operator==(const AssignmentTable&) const = default;

private:
    int k_ = 0;
    std::map<UserWeek, int> labels_;
};

/// In-sample points keep their clustering label; any other point takes the
/// label of its nearest non-noise clustered point (ties -> lower attractor id).
AssignmentTable assign_weekly(std::span<const EmbeddedPoint> points, const AttractorSet& attractors);

void write_assignments_csv(std::ostream& out, const AssignmentTable& table);

struct AttractorProfile {
    int attractor = 0;
    /// Length-B relative belief frequency, sums to 1.
    std::vector<double> belief_frequency;
};

struct ProfileSet {
    std::vector<AttractorProfile> profiles;
    /// Attractors with no assigned activity; they get no profile.
    std::vector<int> empty_attractors;
};

/// Belief frequencies of all events from user-weeks assigned to each attractor,
/// optionally restricted to a week range.
ProfileSet attractor_profiles(const AssignmentTable& assignments, const WeeklyCounts& counts,
                              std::optional<WeekRange> weeks = std::nullopt);

/// One full vectors -> embedding -> clustering -> assignment run.
struct LandscapeModel {
    BeliefVectorSeries series;
    std::vector<EmbeddedPoint> embedding;
    /// External embedding rows with no matching belief vector.
    std::vector<UserWeek> rejected_embedding;
    bool projected = false;
    AttractorSet attractors;
    AssignmentTable assignments;
};

/// Uses `external` coordinates when given, otherwise fallback_project.
LandscapeModel build_landscape_model(const WeeklyCounts& counts, const SmoothingParams& smoothing,
                                     const ClusterConfig& cluster, const std::vector<EmbeddedPoint>* external,
                                     std::uint64_t projection_seed = 20200525);

} // namespace bld
