#pragma once
// Seeded synthetic event streams with planted structure, used as ground truth
// by the tests.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "bld/datamodel.hpp"
#include "bld/landscape.hpp"

namespace bld::synth {

/// mt19937_64 with explicitly defined derived draws, so a seed gives the same
/// sequence on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) from the top 53 bits.
    double uniform();
    /// Standard normal via Box-Muller (one draw per call, no caching).
    double normal();
    /// Inverse-CDF Poisson; large means are split into pieces of at most 64.
    std::uint32_t poisson(double mean);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

struct AttractorBlueprint {
    std::array<double, 2> center{};
    double spread = 0.1;
    /// belief -> weight, normalized on load.
    std::map<int, double> mixture;
    /// Fraction of each community's regular users homed here.
    std::array<double, kCommunities> share{};
};

struct PlantedEvent {
    int attractor = 0;
    int week = 0;
    Community population = Community::A;
    double multiplier = 1.0;
};

/// Rate multiplier for one attractor and population over a week range.
struct RateShift {
    int attractor = 0;
    Community population = Community::A;
    WeekRange weeks;
    double multiplier = 1.0;
};

struct AmplifierPhase {
    int from_week = 0;
    /// attractor -> fraction of the cohort, normalized on load.
    std::map<int, double> allocation;
};

struct AmplifierCohort {
    int size = 0;
    Community community = Community::A;
    /// Piecewise constant, ascending from_week; the cohort is silent before the first phase.
    std::vector<AmplifierPhase> schedule;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    int weeks = 30;
    int n_beliefs = 30;
    std::int64_t epoch = 1577836800;
    std::array<std::string, kCommunities> names{"GroupA", "GroupB"};
    std::array<int, kCommunities> users{100, 100};
    /// Poisson mean of events per user per week.
    double events_per_user_week = 3.0;
    std::vector<AttractorBlueprint> attractors;
    std::vector<PlantedEvent> planted;
    std::vector<RateShift> rate_shifts;
    std::optional<AmplifierCohort> amplifiers;

    /// Throws InputError on any inconsistency.
    void validate() const;
    static ScenarioConfig from_json(const nlohmann::json& j);
    static ScenarioConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

struct TrueUser {
    std::string id;
    Community community = Community::A;
    bool amplifier = false;
    /// kNoise for amplifiers, whose attractor changes by week.
    int home = kNoise;
};

struct GroundTruth {
    std::vector<TrueUser> users;
    /// amplifier id -> week -> attractor
    std::map<std::string, std::map<int, int>> amplifier_weeks;
    /// Planted cells with multiplier != 1.
    std::vector<PlantedEvent> spikes;
    /// Expected events per attractor, week and community: index [c][w * k + a].
    std::array<std::vector<double>, kCommunities> expected;
    /// Events actually emitted per attractor, week and community, same layout.
    std::array<std::vector<std::uint64_t>, kCommunities> emitted;
    /// Amplifier events per week and attractor.
    std::map<int, std::map<int, std::uint64_t>> amplifier_events;
    std::vector<std::vector<double>> mixtures;
    std::uint64_t n_events = 0;
    std::array<std::uint64_t, kCommunities> community_totals{};
    int k = 0;
    int weeks = 0;

    /// Attractor that generated (user, week), or nullopt if the user is unknown.
    std::optional<int> label(const std::string& user, int week) const;
    double expected_proportion(Community c, int week, int attractor) const;
    nlohmann::json to_json() const;
};

struct SyntheticStream {
    StreamHeader header;
    std::vector<BeliefEvent> events;
    std::vector<EmbeddedPoint> embedding;
    GroundTruth truth;
};

SyntheticStream generate_stream(const ScenarioConfig& cfg);

/// Writes events.jsonl, embedding.csv, ground_truth.json and, when the
/// scenario has amplifiers, amplifiers.txt.
void write_stream(const SyntheticStream& stream, const std::filesystem::path& dir);

} // namespace bld::synth
