#pragma once
// Event-stream data model: belief events, the stream header, validation and
// weekly binning. Everything downstream works on WeeklyCounts.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bld/common.hpp"

namespace bld {

inline constexpr std::int64_t kSecondsPerWeek = 604800;

/// The two populations. GroupA is the first community declared in the header
/// (BLM in the original study), GroupB the second (K-pop).
enum class Community : std::uint8_t { A = 0, B = 1 };
inline constexpr std::size_t kCommunities = 2;

inline std::size_t index_of(Community c) { return static_cast<std::size_t>(c); }

struct StreamHeader {
    int n_beliefs = 0;
    std::int64_t epoch = 0;
    /// Exclusive end of the study window, if declared.
    std::optional<std::int64_t> end;
    /// Row tokens ("A", "B") and display names ("BLM", "KPOP"), in header order.
    std::array<std::string, kCommunities> tokens{"A", "B"};
    std::array<std::string, kCommunities> names{"GroupA", "GroupB"};

    std::optional<Community> community_from_token(std::string_view token) const;
    const std::string& name(Community c) const { return names[index_of(c)]; }

    /// Number of weeks covered by the declared window, 0 when open-ended.
    int declared_weeks() const;

    /// Community order follows the order of keys in the document.
    static StreamHeader from_json(const nlohmann::ordered_json& j);
    nlohmann::ordered_json to_json() const;
};

struct BeliefEvent {
    std::string user;
    std::int64_t timestamp = 0;
    int belief = 0;
    Community community = Community::A;
    bool amplifier = false;
};

struct ValidationReport {
    std::size_t n_events = 0;
    std::size_t n_users = 0;
    std::size_t n_rejected = 0;
    std::map<std::string, std::size_t> rejection_reasons;
    std::array<std::size_t, kCommunities> per_community_totals{};

    nlohmann::json to_json(const StreamHeader& header) const;
};

struct EventStream {
    StreamHeader header;
    std::vector<BeliefEvent> events;
    ValidationReport report;
};

/// Reads an events.jsonl stream. The first line must be the "#!" header.
/// Malformed rows are tallied by reason; more than half rejected is fatal.
EventStream load_belief_events(const std::filesystem::path& path);
EventStream parse_belief_events(std::istream& in);

void write_belief_events(std::ostream& out, const StreamHeader& header,
                         std::span<const BeliefEvent> events);

inline int week_of(std::int64_t timestamp, std::int64_t epoch) {
    return static_cast<int>((timestamp - epoch) / kSecondsPerWeek);
}

struct UserInfo {
    std::string id;
    Community community = Community::A;
    bool amplifier = false;

    bool operator==(const UserInfo&) const = default;
};

/// Sparse (belief -> count) cell for one user-week.
using BeliefCounts = std::map<int, std::uint32_t>;

/// Event counts per (user, week, belief). Users are held in ascending id
/// order; weeks run contiguously over [0, n_weeks).
class WeeklyCounts {
public:
    WeeklyCounts() = default;
    WeeklyCounts(std::int64_t epoch, int n_beliefs, int n_weeks, std::vector<UserInfo> users,
                 std::vector<std::map<int, BeliefCounts>> cells);

    std::int64_t epoch() const { return epoch_; }
    int n_beliefs() const { return n_beliefs_; }
    int n_weeks() const { return n_weeks_; }
    std::size_t n_users() const { return users_.size(); }
    const std::vector<UserInfo>& users() const { return users_; }
    const UserInfo& user(std::size_t u) const { return users_[u]; }
    std::optional<std::size_t> find_user(std::string_view id) const;

    /// Non-empty weeks of one user, keyed by week index.
    const std::map<int, BeliefCounts>& user_weeks(std::size_t u) const { return cells_[u]; }
    const BeliefCounts* cell(std::size_t u, int week) const;
    std::uint32_t count(std::size_t u, int week, int belief) const;
    std::uint64_t week_total(std::size_t u, int week) const;
    std::uint64_t total() const { return total_; }

    bool operator==(const WeeklyCounts& other) const = default;

private:
    std::int64_t epoch_ = 0;
    int n_beliefs_ = 0;
    int n_weeks_ = 0;
    std::vector<UserInfo> users_;
    std::vector<std::map<int, BeliefCounts>> cells_;
    std::uint64_t total_ = 0;
};

/// Bins events into fixed 7-day weeks from `epoch`. The week range is
/// [0, max(min_weeks, last event week + 1)).
WeeklyCounts bin_weekly(std::span<const BeliefEvent> events, std::int64_t epoch, int n_beliefs,
                        int min_weeks = 0);

} // namespace bld
