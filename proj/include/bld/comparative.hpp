#pragma once
// Cross-period and cross-model comparisons: amplifier flows, activity
// correlations, partition agreement (ARI), attractor matching (Jaccard) and
// the half-life sensitivity sweep.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bld/datamodel.hpp"
#include "bld/events.hpp"
#include "bld/landscape.hpp"
#include "bld/measures.hpp"

namespace bld {

struct Period {
    std::string name;
    WeekRange weeks;
};

/// Named, disjoint, ordered week ranges.
class PeriodSpec {
public:
    PeriodSpec() = default;
    explicit PeriodSpec(std::vector<Period> periods);

    /// "pre=0..19,event=20..23,post=24.." (last range may be open).
    static PeriodSpec parse(const std::string& text);
    /// pre = 0..19, event = 20..23, post = 24..end.
    static PeriodSpec defaults();

    const std::vector<Period>& periods() const { return periods_; }
    std::size_t size() const { return periods_.size(); }
    const Period& operator[](std::size_t i) const { return periods_[i]; }
    /// Range clipped to [0, n_weeks); throws when that leaves it empty.
    WeekRange clamp(std::size_t i, int n_weeks) const;
    std::string to_string() const;

private:
    std::vector<Period> periods_;
};

std::set<std::string> load_amplifiers(const std::filesystem::path& path);

struct PeriodFlow {
    std::string period;
    std::uint64_t amplifier_events = 0;
    /// attractor -> share of the period's amplifier events; empty when flagged.
    std::map<int, double> shares;
    /// Smallest set of attractors holding at least 90% of the activity.
    std::vector<int> cover90;
    bool no_activity = false;
};

struct FlowTable {
    std::vector<PeriodFlow> periods;
};

FlowTable amplifier_flows(const AssignmentTable& assignments, const WeeklyCounts& counts,
                          const std::set<std::string>& amplifiers, const PeriodSpec& periods);

/// sum_a share(period, a) * bias(a) for every period with amplifier activity.
std::vector<std::pair<std::string, double>> weighted_bias_by_period(const FlowTable& flows,
                                                                    const std::map<int, double>& biases);

enum class ActivityMode { PerAttractorMean, PerWeekCells };

/// Rows are attractors (mean mode) or (attractor, week) cells; columns are communities.
struct ActivityMatrix {
    std::vector<int> attractor;
    /// -1 in per-attractor-mean mode.
    std::vector<int> week;
    std::vector<std::array<double, kCommunities>> values;

    std::vector<double> column(Community c) const;
};

ActivityMatrix period_activity_matrix(const ActivityTable& activity, WeekRange period, ActivityMode mode);
ActivityMatrix period_activity_matrix(const AssignmentTable& assignments, const WeeklyCounts& counts,
                                      WeekRange period, ActivityMode mode);

struct CorrelationResult {
    double r = 0.0;
    std::size_t n = 0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

/// Pearson r with a Fisher-z interval tanh(atanh(r) +/- z_conf / sqrt(n - 3)).
/// Needs n >= 4 and nonzero variance in both inputs.
CorrelationResult pearson_ci(std::span<const double> xs, std::span<const double> ys, double conf = 0.95);

struct CorrelationRow {
    std::string group;
    std::string period;
    CorrelationResult result;
};

/// Within each community: per-attractor period means, every ordered pair of
/// periods. Between communities: per-(attractor, week) cells within each period.
std::vector<CorrelationRow> correlation_report(const ActivityTable& activity, const PeriodSpec& periods,
                                               const StreamHeader& header, double conf = 0.95);

/// Two-sided p-value of the two-sample Fisher-z test for r_a == r_b.
double compare_correlations(const CorrelationResult& a, const CorrelationResult& b);

/// ARI between two labelings of the same points; every label (NOISE included)
/// is its own block.
double adjusted_rand_index(std::span<const int> labels_a, std::span<const int> labels_b);
double adjusted_rand_index(const std::map<std::string, int>& labels_a, const std::map<std::string, int>& labels_b);

/// Each user's most frequent non-noise attractor (ties -> lower id), or NOISE.
std::map<std::string, int> modal_assignment(const AssignmentTable& assignments,
                                            std::optional<WeekRange> window = std::nullopt);

enum class JaccardBasis { MemberUsers, BeliefSupport };

/// Index = attractor id.
using MemberSets = std::vector<std::set<std::string>>;

MemberSets member_sets(const AssignmentTable& assignments, JaccardBasis basis, const WeeklyCounts& counts,
                       std::optional<WeekRange> window = std::nullopt);

/// |a & b| / |a | b|; 0 when either set is empty.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

struct JaccardMatch {
    int a_id = 0;
    /// -1 when B is empty.
    int b_id = -1;
    double jaccard = 0.0;
    bool empty_basis = false;
};

/// Best B match for every A attractor; ties -> lower B id.
std::vector<JaccardMatch> jaccard_match(const MemberSets& a, const MemberSets& b);

struct SweepConfig {
    std::vector<double> half_lives{4, 5, 6, 7, 8};
    double reference = 5;
    ClusterConfig cluster;
    SpikeParams spikes;
    /// Window in which reference attractors are flagged and matches must spike.
    WeekRange window{20, 23};
    /// Reference attractors to follow; empty = every attractor spiking in the window.
    std::vector<int> flagged;
    JaccardBasis basis = JaccardBasis::MemberUsers;
    std::uint64_t projection_seed = 20200525;
    /// Fixed external embedding per half-life; nullptr entries use fallback_project.
    std::function<const std::vector<EmbeddedPoint>*(double)> embedding_for;
    int threads = 1;
};

struct SpikeMatchRow {
    double half_life = 0.0;
    int reference_attractor = 0;
    int matched_attractor = -1;
    double jaccard = 0.0;
    bool spikes_in_window = false;
};

struct SweepResult {
    std::vector<double> half_lives;
    /// Pairwise ARI over modal user assignments.
    std::vector<std::vector<double>> ari;
    std::vector<int> flagged;
    std::vector<SpikeMatchRow> matches;
};

SweepResult sensitivity_sweep(const WeeklyCounts& counts, const SweepConfig& cfg);

void write_flows_csv(std::ostream& out, const FlowTable& flows);
void write_weighted_bias_csv(std::ostream& out, std::span<const std::pair<std::string, double>> rows);
void write_correlations_csv(std::ostream& out, std::span<const CorrelationRow> rows);
void write_ari_matrix_csv(std::ostream& out, const SweepResult& sweep);
void write_jaccard_matches_csv(std::ostream& out, const SweepResult& sweep);

} // namespace bld
