#include "bld/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

namespace bld {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::optional<Community> StreamHeader::community_from_token(std::string_view token) const {
    for (std::size_t i = 0; i < kCommunities; ++i) {
        if (tokens[i] == token) return static_cast<Community>(i);
    }
    return std::nullopt;
}

int StreamHeader::declared_weeks() const {
    if (!end) return 0;
    const std::int64_t span = *end - epoch;
    if (span <= 0) return 0;
    return static_cast<int>((span + kSecondsPerWeek - 1) / kSecondsPerWeek);
}

StreamHeader StreamHeader::from_json(const ordered_json& j) {
    StreamHeader h;
    if (!j.is_object() || !j.contains("B") || !j.contains("epoch") || !j.contains("communities")) {
        throw InputError("header must declare B, epoch and communities");
    }
    if (!j["B"].is_number_integer() || j["B"].get<long long>() <= 0) {
        throw InputError("header B must be a positive integer");
    }
    if (!j["epoch"].is_number_integer()) throw InputError("header epoch must be an integer");
    h.n_beliefs = j["B"].get<int>();
    h.epoch = j["epoch"].get<std::int64_t>();
    if (j.contains("end")) {
        if (!j["end"].is_number_integer()) throw InputError("header end must be an integer");
        h.end = j["end"].get<std::int64_t>();
        if (*h.end <= h.epoch) throw InputError("header end must be after epoch");
    }
    const auto& comms = j["communities"];
    if (!comms.is_object() || comms.size() != kCommunities) {
        throw InputError("header communities must map exactly two labels");
    }
    std::size_t i = 0;
    for (auto it = comms.begin(); it != comms.end(); ++it, ++i) {
        h.tokens[i] = it.key();
        h.names[i] = it.value().is_string() ? it.value().get<std::string>() : it.key();
    }
    return h;
}

ordered_json StreamHeader::to_json() const {
    ordered_json j;
    j["B"] = n_beliefs;
    j["epoch"] = epoch;
    if (end) j["end"] = *end;
    ordered_json comms = ordered_json::object();
    for (std::size_t i = 0; i < kCommunities; ++i) comms[tokens[i]] = names[i];
    j["communities"] = comms;
    return j;
}

json ValidationReport::to_json(const StreamHeader& header) const {
    json j;
    j["n_events"] = n_events;
    j["n_users"] = n_users;
    j["n_rejected"] = n_rejected;
    json reasons = json::array();
    for (const auto& [code, count] : rejection_reasons) {
        reasons.push_back({{"reason", code}, {"count", count}});
    }
    j["rejection_reasons"] = reasons;
    json totals = json::object();
    for (std::size_t i = 0; i < kCommunities; ++i) totals[header.names[i]] = per_community_totals[i];
    j["per_community_totals"] = totals;
    return j;
}

namespace {

StreamHeader parse_header_line(const std::string& line) {
    if (line.rfind("#!", 0) != 0) throw InputError("missing header: first line must start with \"#!\"");
    ordered_json j;
    try {
        j = ordered_json::parse(line.substr(2));
    } catch (const json::parse_error& e) {
        throw InputError(std::string("unparseable header: ") + e.what());
    }
    return StreamHeader::from_json(j);
}

} // namespace

EventStream parse_belief_events(std::istream& in) {
    EventStream stream;
    std::string line;
    if (!std::getline(in, line)) throw InputError("missing header: empty input");
    stream.header = parse_header_line(line);
    const auto& header = stream.header;

    auto& report = stream.report;
    std::size_t n_rows = 0;
    std::unordered_map<std::string, Community> user_community;
    auto reject = [&](const char* reason) {
        ++report.n_rejected;
        ++report.rejection_reasons[reason];
    };

    while (std::getline(in, line)) {
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++n_rows;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error&) {
            reject("malformed_row");
            continue;
        }
        if (!row.is_object() || !row.contains("user") || !row["user"].is_string() ||
            !row.contains("belief") || !row["belief"].is_number_integer() ||
            !row.contains("community") || !row["community"].is_string()) {
            reject("malformed_row");
            continue;
        }
        if (!row.contains("ts") || !row["ts"].is_number_integer()) {
            reject("bad_timestamp");
            continue;
        }
        BeliefEvent ev;
        ev.user = row["user"].get<std::string>();
        ev.timestamp = row["ts"].get<std::int64_t>();
        const auto belief = row["belief"].get<long long>();
        if (ev.timestamp < header.epoch || (header.end && ev.timestamp >= *header.end)) {
            reject("timestamp_out_of_window");
            continue;
        }
        if (belief < 0 || belief >= header.n_beliefs) {
            reject("cluster_out_of_range");
            continue;
        }
        ev.belief = static_cast<int>(belief);
        const auto community = header.community_from_token(row["community"].get<std::string>());
        if (!community) {
            reject("unknown_community");
            continue;
        }
        ev.community = *community;
        if (row.contains("amp")) {
            if (!row["amp"].is_boolean()) {
                reject("malformed_row");
                continue;
            }
            ev.amplifier = row["amp"].get<bool>();
        }
        auto [it, inserted] = user_community.emplace(ev.user, ev.community);
        if (!inserted && it->second != ev.community) {
            reject("community_conflict");
            continue;
        }
        ++report.per_community_totals[index_of(ev.community)];
        stream.events.push_back(std::move(ev));
    }

    report.n_events = stream.events.size();
    report.n_users = user_community.size();
    if (n_rows > 0 && 2 * report.n_rejected > n_rows) {
        throw InputError("schema mismatch: " + std::to_string(report.n_rejected) + " of " +
                         std::to_string(n_rows) + " rows rejected");
    }
    return stream;
}

EventStream load_belief_events(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open events file: " + path.string());
    return parse_belief_events(in);
}

void write_belief_events(std::ostream& out, const StreamHeader& header,
                         std::span<const BeliefEvent> events) {
    out << "#!" << header.to_json().dump() << '\n';
    for (const auto& ev : events) {
        ordered_json row;
        row["user"] = ev.user;
        row["ts"] = ev.timestamp;
        row["belief"] = ev.belief;
        row["community"] = header.tokens[index_of(ev.community)];
        row["amp"] = ev.amplifier;
        out << row.dump() << '\n';
    }
}

WeeklyCounts::WeeklyCounts(std::int64_t epoch, int n_beliefs, int n_weeks, std::vector<UserInfo> users,
                           std::vector<std::map<int, BeliefCounts>> cells)
    : epoch_(epoch), n_beliefs_(n_beliefs), n_weeks_(n_weeks), users_(std::move(users)),
      cells_(std::move(cells)) {
    for (const auto& weeks : cells_) {
        for (const auto& [w, beliefs] : weeks) {
            for (const auto& [b, c] : beliefs) total_ += c;
        }
    }
}

std::optional<std::size_t> WeeklyCounts::find_user(std::string_view id) const {
    auto it = std::lower_bound(users_.begin(), users_.end(), id,
                               [](const UserInfo& u, std::string_view v) { return u.id < v; });
    if (it == users_.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - users_.begin());
}

const BeliefCounts* WeeklyCounts::cell(std::size_t u, int week) const {
    const auto& weeks = cells_[u];
    auto it = weeks.find(week);
    return it == weeks.end() ? nullptr : &it->second;
}

std::uint32_t WeeklyCounts::count(std::size_t u, int week, int belief) const {
    const auto* c = cell(u, week);
    if (!c) return 0;
    auto it = c->find(belief);
    return it == c->end() ? 0 : it->second;
}

std::uint64_t WeeklyCounts::week_total(std::size_t u, int week) const {
    const auto* c = cell(u, week);
    std::uint64_t sum = 0;
    if (c) {
        for (const auto& [b, n] : *c) sum += n;
    }
    return sum;
}

WeeklyCounts bin_weekly(std::span<const BeliefEvent> events, std::int64_t epoch, int n_beliefs,
                        int min_weeks) {
    std::map<std::string, UserInfo> users;
    int max_week = -1;
    for (const auto& ev : events) {
        if (ev.timestamp < epoch) throw InputError("pre-epoch event for user " + ev.user);
        if (ev.belief < 0 || ev.belief >= n_beliefs) {
            throw InputError("belief cluster out of range for user " + ev.user);
        }
        max_week = std::max(max_week, week_of(ev.timestamp, epoch));
        auto [it, inserted] = users.try_emplace(ev.user, UserInfo{ev.user, ev.community, ev.amplifier});
        if (!inserted) {
            if (it->second.community != ev.community) {
                throw InputError("user " + ev.user + " appears in both communities");
            }
            it->second.amplifier = it->second.amplifier || ev.amplifier;
        }
    }

    std::vector<UserInfo> user_list;
    user_list.reserve(users.size());
    std::unordered_map<std::string, std::size_t> index;
    for (auto& [id, info] : users) {
        index.emplace(id, user_list.size());
        user_list.push_back(std::move(info));
    }
    std::vector<std::map<int, BeliefCounts>> cells(user_list.size());
    for (const auto& ev : events) {
        ++cells[index.at(ev.user)][week_of(ev.timestamp, epoch)][ev.belief];
    }
    const int n_weeks = std::max(min_weeks, max_week + 1);
    return WeeklyCounts(epoch, n_beliefs, n_weeks, std::move(user_list), std::move(cells));
}

} // namespace bld
