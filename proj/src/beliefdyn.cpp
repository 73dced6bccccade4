#include "bld/beliefdyn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

#include "bld/report.hpp"

namespace bld {

double alpha_from_half_life(double half_life_weeks) {
    if (!(half_life_weeks > 0.0) || !std::isfinite(half_life_weeks)) {
        throw InputError("half-life must be a positive number of weeks");
    }
    return 1.0 - std::exp(std::log(0.5) / half_life_weeks);
}

BeliefVectorSeries::BeliefVectorSeries(int n_beliefs, int n_weeks, SmoothingParams params,
                                       std::vector<UserInfo> users, std::vector<Track> tracks)
    : n_beliefs_(n_beliefs), n_weeks_(n_weeks), params_(params), users_(std::move(users)),
      tracks_(std::move(tracks)) {}

const SparseVector* BeliefVectorSeries::vector(std::size_t u, int week) const {
    const auto& t = tracks_[u];
    if (t.first_week < 0 || week < t.first_week || week >= n_weeks_) return nullptr;
    return &t.vectors[static_cast<std::size_t>(week - t.first_week)];
}

bool BeliefVectorSeries::active(std::size_t u, int week) const {
    const auto& t = tracks_[u];
    if (t.first_week < 0 || week < t.first_week || week >= n_weeks_) return false;
    return t.active[static_cast<std::size_t>(week - t.first_week)];
}

std::vector<double> BeliefVectorSeries::dense(std::size_t u, int week) const {
    std::vector<double> out(static_cast<std::size_t>(n_beliefs_), 0.0);
    if (const auto* v = vector(u, week)) {
        for (const auto& [b, x] : *v) out[static_cast<std::size_t>(b)] = x;
    }
    return out;
}

std::size_t BeliefVectorSeries::size() const {
    std::size_t n = 0;
    for (const auto& t : tracks_) n += t.vectors.size();
    return n;
}

namespace {

// Carries the unnormalized decayed state as (direction, L1 mass) so long gaps
// cannot underflow the direction.
BeliefVectorSeries::Track build_track(const std::map<int, BeliefCounts>& weeks, int n_weeks, double alpha) {
    BeliefVectorSeries::Track track;
    if (weeks.empty()) return track;
    track.first_week = weeks.begin()->first;
    const auto len = static_cast<std::size_t>(n_weeks - track.first_week);
    track.vectors.reserve(len);
    track.active.reserve(len);

    SparseVector direction;
    double mass = 0.0;
    for (int w = track.first_week; w < n_weeks; ++w) {
        auto it = weeks.find(w);
        if (it == weeks.end()) {
            mass *= 1.0 - alpha;
            track.vectors.push_back(direction);
            track.active.push_back(false);
            continue;
        }
        const double carried = (1.0 - alpha) * mass;
        std::map<int, double> next;
        for (const auto& [b, x] : direction) next[b] += carried * x;
        double added = 0.0;
        for (const auto& [b, c] : it->second) {
            next[b] += alpha * c;
            added += alpha * c;
        }
        const double total = carried + added;
        direction.clear();
        for (const auto& [b, x] : next) {
            if (x > 0.0) direction.emplace_back(b, x / total);
        }
        mass = total;
        track.vectors.push_back(direction);
        track.active.push_back(true);
    }
    return track;
}

} // namespace

BeliefVectorSeries build_belief_vectors(const WeeklyCounts& counts, const SmoothingParams& params,
                                        int threads) {
    if (!(params.alpha > 0.0 && params.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    std::vector<BeliefVectorSeries::Track> tracks(counts.n_users());
    parallel_for(counts.n_users(), threads, [&](std::size_t u) {
        tracks[u] = build_track(counts.user_weeks(u), counts.n_weeks(), params.alpha);
    });
    return BeliefVectorSeries(counts.n_beliefs(), counts.n_weeks(), params, counts.users(), std::move(tracks));
}

void write_vectors_csv(std::ostream& out, const BeliefVectorSeries& series) {
    out << "user,week,cluster,weight\n";
    for (std::size_t u = 0; u < series.n_users(); ++u) {
        const auto& t = series.track(u);
        for (std::size_t i = 0; i < t.vectors.size(); ++i) {
            const auto week = std::to_string(t.first_week + static_cast<int>(i));
            for (const auto& [b, x] : t.vectors[i]) {
                write_row(out, {series.users()[u].id, week, std::to_string(b), fmt_num(x)});
            }
        }
    }
}

namespace {

constexpr char kMagic[4] = {'B', 'L', 'D', 'V'};
constexpr std::uint32_t kBinaryVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InputError("truncated vectors cache");
    return v;
}

} // namespace

void save_vectors_binary(const std::filesystem::path& path, const BeliefVectorSeries& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    put(out, kBinaryVersion);
    put<std::int32_t>(out, series.n_beliefs());
    put<std::int32_t>(out, series.n_weeks());
    put(out, series.params().half_life_weeks);
    put(out, series.params().alpha);
    put<std::uint64_t>(out, series.n_users());
    for (std::size_t u = 0; u < series.n_users(); ++u) {
        const auto& info = series.users()[u];
        put<std::uint32_t>(out, static_cast<std::uint32_t>(info.id.size()));
        out.write(info.id.data(), static_cast<std::streamsize>(info.id.size()));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(info.community));
        put<std::uint8_t>(out, info.amplifier ? 1 : 0);
        const auto& t = series.track(u);
        put<std::int32_t>(out, t.first_week);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.vectors.size()));
        for (std::size_t i = 0; i < t.vectors.size(); ++i) {
            put<std::uint8_t>(out, t.active[i] ? 1 : 0);
            put<std::uint32_t>(out, static_cast<std::uint32_t>(t.vectors[i].size()));
            for (const auto& [b, x] : t.vectors[i]) {
                put<std::int32_t>(out, b);
                put(out, x);
            }
        }
    }
}

BeliefVectorSeries load_vectors_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    char magic[4];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw InputError("not a vectors cache");
    if (take<std::uint32_t>(in) != kBinaryVersion) throw InputError("unsupported vectors cache version");
    const int n_beliefs = take<std::int32_t>(in);
    const int n_weeks = take<std::int32_t>(in);
    SmoothingParams params;
    params.half_life_weeks = take<double>(in);
    params.alpha = take<double>(in);
    const auto n_users = take<std::uint64_t>(in);
    std::vector<UserInfo> users;
    std::vector<BeliefVectorSeries::Track> tracks;
    for (std::uint64_t u = 0; u < n_users; ++u) {
        UserInfo info;
        info.id.resize(take<std::uint32_t>(in));
        in.read(info.id.data(), static_cast<std::streamsize>(info.id.size()));
        info.community = static_cast<Community>(take<std::uint8_t>(in));
        info.amplifier = take<std::uint8_t>(in) != 0;
        BeliefVectorSeries::Track t;
        t.first_week = take<std::int32_t>(in);
        const auto n_vec = take<std::uint32_t>(in);
        for (std::uint32_t i = 0; i < n_vec; ++i) {
            t.active.push_back(take<std::uint8_t>(in) != 0);
            SparseVector v(take<std::uint32_t>(in));
            for (auto& [b, x] : v) {
                b = take<std::int32_t>(in);
                x = take<double>(in);
            }
            t.vectors.push_back(std::move(v));
        }
        users.push_back(std::move(info));
        tracks.push_back(std::move(t));
    }
    return BeliefVectorSeries(n_beliefs, n_weeks, params, std::move(users), std::move(tracks));
}

double LifespanHistogram::mean_lifespan() const {
    if (per_belief.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [b, span] : per_belief) sum += span.lifespan();
    return sum / static_cast<double>(per_belief.size());
}

LifespanHistogram belief_lifespans(std::span<const BeliefEvent> events, std::int64_t epoch) {
    if (events.empty()) throw InputError("belief_lifespans needs a nonempty stream");
    LifespanHistogram out;
    for (const auto& ev : events) {
        if (ev.timestamp < epoch) throw InputError("pre-epoch event for user " + ev.user);
        const int w = week_of(ev.timestamp, epoch);
        auto [it, inserted] = out.per_belief.try_emplace(ev.belief, BeliefLifespan{w, w});
        if (!inserted) {
            it->second.first_week = std::min(it->second.first_week, w);
            it->second.last_week = std::max(it->second.last_week, w);
        }
    }
    for (const auto& [b, span] : out.per_belief) {
        const auto d = static_cast<std::size_t>(span.lifespan());
        if (out.histogram.size() <= d) out.histogram.resize(d + 1, 0);
        ++out.histogram[d];
    }
    return out;
}

void write_lifespans_csv(std::ostream& out, const LifespanHistogram& hist) {
    out << "belief_cluster,first_week,last_week,lifespan_weeks\n";
    for (const auto& [b, span] : hist.per_belief) {
        write_row(out, {std::to_string(b), std::to_string(span.first_week), std::to_string(span.last_week),
                        std::to_string(span.lifespan())});
    }
}

} // namespace bld
