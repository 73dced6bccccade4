#pragma once
// Population-normalized spike detection over attractor activity.
//
// For each attractor a, week w and population pop:
//   p      = x(a,w,pop) / sum_i x(i,w,pop)
//   p_hat  = alpha * sum_{i>=1} (1-alpha)^(i-1) * p(a,w-i,pop)       (all prior weeks)
//   sigma2 = alpha * sum_{i>=1} (1-alpha)^(i-1) * (p(a,w-i,pop) - p_hat)^2
//   x_hat  = p_hat * sum_i x(i,w,pop)
//   z      = (p - p_hat) / sigma
// The expectation weights are not renormalized; they sum to 1 - (1-alpha)^w.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "bld/beliefdyn.hpp"
#include "bld/datamodel.hpp"
#include "bld/landscape.hpp"

namespace bld {

/// Event counts x(a, w, pop).
class ActivityTable {
public:
    ActivityTable(int k, int n_weeks);

    int k() const { return k_; }
    int n_weeks() const { return n_weeks_; }
    std::uint64_t& at(Community pop, int week, int attractor);
    std::uint64_t at(Community pop, int week, int attractor) const;
    std::uint64_t total(Community pop, int week) const;

private:
    std::size_t index(int week, int attractor) const {
        return static_cast<std::size_t>(week) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(attractor);
    }
    int k_;
    int n_weeks_;
    std::array<std::vector<std::uint64_t>, kCommunities> counts_;
};

/// Events of each community per (attractor, week); NOISE user-weeks are dropped.
ActivityTable attractor_activity(const AssignmentTable& assignments, const WeeklyCounts& counts);

struct SpikeParams {
    double threshold = 2.0;
    /// Default: ceil(half-life) weeks.
    std::optional<int> burn_in;
    double sigma_floor = 1e-9;

    int burn_in_for(const SmoothingParams& s) const;
};

struct SpikeStats {
    int attractor = 0;
    int week = 0;
    Community population = Community::A;
    double p = 0.0;
    double p_hat = 0.0;
    double x = 0.0;
    double x_hat = 0.0;
    double sigma = 0.0;
    /// +/-inf for degenerate cells, 0 when sigma and the deviation both vanish.
    double z = 0.0;
    bool is_spike = false;
    /// sigma below the floor while p deviates from p_hat by more than the floor.
    bool degenerate = false;
};

/// Canonical order (attractor, week, population). Weeks where a population has
/// no activity at all produce no records; their proportions enter later
/// expectations as 0.
std::vector<SpikeStats> detect_spikes(const ActivityTable& activity, const SmoothingParams& smoothing,
                                      const SpikeParams& params = {});
std::vector<SpikeStats> detect_spikes(const AssignmentTable& assignments, const WeeklyCounts& counts,
                                      const SmoothingParams& smoothing, const SpikeParams& params = {});

/// Attractors with at least one spike from each population inside `window`.
std::vector<int> coordinated_spikes(std::span<const SpikeStats> spikes, WeekRange window);

/// spikes.csv: attractor,week,population,p,p_hat,x,x_hat,sigma,z,is_spike,degenerate
void write_spikes_csv(std::ostream& out, std::span<const SpikeStats> spikes, const StreamHeader& header);
/// One attractor's expected traffic: week,population,x_hat,x
void write_expected_traffic_csv(std::ostream& out, std::span<const SpikeStats> spikes, int attractor,
                                const StreamHeader& header);

} // namespace bld
