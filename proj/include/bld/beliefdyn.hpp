#pragma once
// Exponentially decayed per-user belief vectors and belief lifespans.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bld/datamodel.hpp"

namespace bld {

/// EWMA smoothing factor for a half-life of `half_life_weeks`:
/// 1 - exp(ln(0.5) / h). Throws InputError for h <= 0.
double alpha_from_half_life(double half_life_weeks);

struct SmoothingParams {
    double half_life_weeks = 5.0;
    double alpha = 0.0;

    static SmoothingParams from_half_life(double h) { return {h, alpha_from_half_life(h)}; }
    bool operator==(const SmoothingParams&) const = default;
};

/// (belief, weight) pairs in ascending belief order.
using SparseVector = std::vector<std::pair<int, double>>;

/// L1-normalized belief vectors per (user, week). A user has vectors from the
/// week of their first event through the last week of the range; weeks without
/// events repeat the previous vector with active = false.
class BeliefVectorSeries {
public:
    struct Track {
        int first_week = -1;  // -1: no events, no vectors
        std::vector<SparseVector> vectors;  // index = week - first_week
        std::vector<bool> active;

        bool operator==(const Track&) const = default;
    };

    BeliefVectorSeries() = default;
    BeliefVectorSeries(int n_beliefs, int n_weeks, SmoothingParams params, std::vector<UserInfo> users,
                       std::vector<Track> tracks);

    int n_beliefs() const { return n_beliefs_; }
    int n_weeks() const { return n_weeks_; }
    const SmoothingParams& params() const { return params_; }
    std::size_t n_users() const { return users_.size(); }
    const std::vector<UserInfo>& users() const { return users_; }
    const Track& track(std::size_t u) const { return tracks_[u]; }

    /// nullptr when the user has no history yet at `week`.
    const SparseVector* vector(std::size_t u, int week) const;
    bool active(std::size_t u, int week) const;
    std::vector<double> dense(std::size_t u, int week) const;
    /// Number of stored (user, week) vectors.
    std::size_t size() const;

    bool operator==(const BeliefVectorSeries&) const = default;

private:
    int n_beliefs_ = 0;
    int n_weeks_ = 0;
    SmoothingParams params_;
    std::vector<UserInfo> users_;
    std::vector<Track> tracks_;
};

/// s(u,w,b) = alpha * c(u,w,b) + (1 - alpha) * s(u,w-1,b), normalized to unit L1 mass.
BeliefVectorSeries build_belief_vectors(const WeeklyCounts& counts, const SmoothingParams& params,
                                        int threads = 1);

/// CSV: user,week,cluster,weight (one row per nonzero component).
void write_vectors_csv(std::ostream& out, const BeliefVectorSeries& series);

/// Versioned binary cache. Throws InputError on a bad magic or version.
void save_vectors_binary(const std::filesystem::path& path, const BeliefVectorSeries& series);
BeliefVectorSeries load_vectors_binary(const std::filesystem::path& path);

struct BeliefLifespan {
    int first_week = 0;
    int last_week = 0;
    int lifespan() const { return last_week - first_week; }
};

struct LifespanHistogram {
    /// Only beliefs that were mentioned at least once.
    std::map<int, BeliefLifespan> per_belief;
    /// histogram[d] = number of beliefs with lifespan d weeks.
    std::vector<std::size_t> histogram;

    double mean_lifespan() const;
};

LifespanHistogram belief_lifespans(std::span<const BeliefEvent> events, std::int64_t epoch);

/// lifespans.csv: belief_cluster,first_week,last_week,lifespan_weeks
void write_lifespans_csv(std::ostream& out, const LifespanHistogram& hist);

} // namespace bld
