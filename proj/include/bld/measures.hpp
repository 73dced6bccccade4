#pragma once
// Attractor homogeneity and community bias.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bld/datamodel.hpp"
#include "bld/landscape.hpp"

namespace bld {

struct AttractorWeekCounts {
    /// Unique users active in the attractor that week, per community.
    std::array<std::uint64_t, kCommunities> active_users{};
    /// Events per community.
    std::array<std::uint64_t, kCommunities> tweets{};
};

class WeeklyAttractorCounts {
public:
    WeeklyAttractorCounts(int k, int n_weeks)
        : k_(k), n_weeks_(n_weeks), cells_(static_cast<std::size_t>(k) * static_cast<std::size_t>(n_weeks)) {}

    int k() const { return k_; }
    int n_weeks() const { return n_weeks_; }
    AttractorWeekCounts& at(int attractor, int week) { return cells_[index(attractor, week)]; }
    const AttractorWeekCounts& at(int attractor, int week) const { return cells_[index(attractor, week)]; }

private:
    std::size_t index(int a, int w) const {
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(a);
    }
    int k_;
    int n_weeks_;
    std::vector<AttractorWeekCounts> cells_;
};

/// Users count as active in (a, w) when they have at least one event in week w
/// and are assigned to a that week. NOISE assignments are ignored.
WeeklyAttractorCounts weekly_attractor_counts(const AssignmentTable& assignments, const WeeklyCounts& counts);

/// |b - a| / (a + b); nullopt when both are zero.
std::optional<double> homogeneity(double a, double b);

enum class HomogeneityBasis { UniqueUsers, TweetVolume };

struct HomogeneityRecord {
    int attractor = 0;
    int week = 0;
    double h = 0.0;
};

struct HomogeneityResult {
    std::vector<HomogeneityRecord> records;
    /// (attractor, week) cells with no activity from either community.
    std::vector<std::pair<int, int>> undefined;
};

HomogeneityResult weekly_homogeneity(const WeeklyAttractorCounts& counts,
                                     HomogeneityBasis basis = HomogeneityBasis::UniqueUsers);

struct RankedAttractor {
    int attractor = 0;
    double mean_h = 0.0;
    std::size_t n_weeks = 0;
};

struct HomogeneityRanking {
    /// Ascending mean H: most heterogeneous first. Ties by attractor id.
    std::vector<RankedAttractor> ranking;
    /// Attractors with no defined H before the cutoff.
    std::vector<int> excluded;
};

/// Unweighted mean of defined H over weeks < up_to_week, for attractors [0, k).
HomogeneityRanking mean_homogeneity_ranking(std::span<const HomogeneityRecord> records, int up_to_week, int k);

struct BeliefBias {
    int belief = 0;
    /// Share of GroupA's / GroupB's events that express this belief.
    double a_p = 0.0;
    double b_p = 0.0;
    double bias = 0.0;
};

struct BiasTable {
    std::vector<BeliefBias> beliefs;
    /// Beliefs never expressed by either community.
    std::vector<int> undefined;

    std::optional<double> bias_of(int belief) const;
};

/// bias = a_p / (a_p + b_p): 1 means GroupA-dominated, 0 GroupB-dominated.
/// Throws InputError when either community has no events in range.
BiasTable belief_bias(const WeeklyCounts& counts, std::optional<WeekRange> weeks = std::nullopt);

struct AttractorBias {
    int attractor = 0;
    double bias = 0.0;
    /// Profile mass on beliefs with undefined bias, removed before renormalizing.
    double dropped_mass = 0.0;
};

/// Profile-weighted mean of per-belief bias, one entry per profile.
std::vector<AttractorBias> attractor_bias(std::span<const AttractorProfile> profiles, const BiasTable& biases);

void write_homogeneity_csv(std::ostream& out, std::span<const HomogeneityRecord> records);
void write_belief_bias_csv(std::ostream& out, const BiasTable& table);
void write_attractor_bias_csv(std::ostream& out, std::span<const AttractorBias> biases);
void write_ranking_csv(std::ostream& out, const HomogeneityRanking& ranking);

} // namespace bld
