#include "bld/events.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

#include "bld/report.hpp"

namespace bld {

ActivityTable::ActivityTable(int k, int n_weeks) : k_(k), n_weeks_(n_weeks) {
    if (k < 0 || n_weeks < 0) throw InputError("activity table dimensions must be non-negative");
    for (auto& c : counts_) c.assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(n_weeks), 0);
}

std::uint64_t& ActivityTable::at(Community pop, int week, int attractor) {
    return counts_[index_of(pop)][index(week, attractor)];
}

std::uint64_t ActivityTable::at(Community pop, int week, int attractor) const {
    return counts_[index_of(pop)][index(week, attractor)];
}

std::uint64_t ActivityTable::total(Community pop, int week) const {
    std::uint64_t sum = 0;
    for (int a = 0; a < k_; ++a) sum += at(pop, week, a);
    return sum;
}

ActivityTable attractor_activity(const AssignmentTable& assignments, const WeeklyCounts& counts) {
    ActivityTable out(assignments.k(), counts.n_weeks());
    for (std::size_t u = 0; u < counts.n_users(); ++u) {
        const auto& info = counts.user(u);
        for (const auto& [w, cell] : counts.user_weeks(u)) {
            const auto a = assignments.at(info.id, w);
            if (!a || *a == kNoise) continue;
            for (const auto& [b, x] : cell) out.at(info.community, w, *a) += x;
        }
    }
    return out;
}

int SpikeParams::burn_in_for(const SmoothingParams& s) const {
    return burn_in ? *burn_in : static_cast<int>(std::ceil(s.half_life_weeks));
}

std::vector<SpikeStats> detect_spikes(const ActivityTable& activity, const SmoothingParams& smoothing,
                                      const SpikeParams& params) {
    const double alpha = smoothing.alpha;
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    const int k = activity.k();
    const int n_weeks = activity.n_weeks();
    const int burn_in = params.burn_in_for(smoothing);

    // Proportions per population, week-major; weeks with no activity stay 0.
    std::array<std::vector<double>, kCommunities> prop;
    std::array<std::vector<std::uint64_t>, kCommunities> totals;
    for (std::size_t c = 0; c < kCommunities; ++c) {
        const auto pop = static_cast<Community>(c);
        prop[c].assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(n_weeks), 0.0);
        totals[c].assign(static_cast<std::size_t>(n_weeks), 0);
        for (int w = 0; w < n_weeks; ++w) {
            const auto t = activity.total(pop, w);
            totals[c][static_cast<std::size_t>(w)] = t;
            if (t == 0) continue;
            for (int a = 0; a < k; ++a) {
                prop[c][static_cast<std::size_t>(w * k + a)] =
                    static_cast<double>(activity.at(pop, w, a)) / static_cast<double>(t);
            }
        }
    }

    std::vector<SpikeStats> out;
    std::vector<double> series(static_cast<std::size_t>(n_weeks));
    for (int a = 0; a < k; ++a) {
        std::array<std::vector<SpikeStats>, kCommunities> per_pop;
        for (std::size_t c = 0; c < kCommunities; ++c) {
            for (int w = 0; w < n_weeks; ++w) series[static_cast<std::size_t>(w)] = prop[c][static_cast<std::size_t>(w * k + a)];
            double p_hat = 0.0;  // EW expectation over weeks < w
            for (int w = 0; w < n_weeks; ++w) {
                const double p = series[static_cast<std::size_t>(w)];
                const auto total = totals[c][static_cast<std::size_t>(w)];
                if (total > 0) {
                    double var = 0.0;
                    double weight = alpha;
                    for (int i = 1; i <= w; ++i) {
                        const double d = series[static_cast<std::size_t>(w - i)] - p_hat;
                        var += weight * d * d;
                        weight *= 1.0 - alpha;
                    }
                    SpikeStats s;
                    s.attractor = a;
                    s.week = w;
                    s.population = static_cast<Community>(c);
                    s.p = p;
                    s.p_hat = p_hat;
                    s.x = static_cast<double>(activity.at(s.population, w, a));
                    s.x_hat = p_hat * static_cast<double>(total);
                    s.sigma = std::sqrt(var);
                    const double dev = p - p_hat;
                    if (s.sigma >= params.sigma_floor) {
                        s.z = dev / s.sigma;
                        s.is_spike = s.z > params.threshold && w >= burn_in;
                    } else if (std::abs(dev) > params.sigma_floor) {
                        s.degenerate = true;
                        s.z = std::copysign(std::numeric_limits<double>::infinity(), dev);
                    }
                    per_pop[c].push_back(s);
                }
                p_hat = alpha * p + (1.0 - alpha) * p_hat;
            }
        }
        // Merge into (week, population) order for this attractor.
        std::size_t i0 = 0, i1 = 0;
        while (i0 < per_pop[0].size() || i1 < per_pop[1].size()) {
            if (i1 >= per_pop[1].size() || (i0 < per_pop[0].size() && per_pop[0][i0].week <= per_pop[1][i1].week)) {
                out.push_back(per_pop[0][i0++]);
            } else {
                out.push_back(per_pop[1][i1++]);
            }
        }
    }
    return out;
}

std::vector<SpikeStats> detect_spikes(const AssignmentTable& assignments, const WeeklyCounts& counts,
                                      const SmoothingParams& smoothing, const SpikeParams& params) {
    return detect_spikes(attractor_activity(assignments, counts), smoothing, params);
}

std::vector<int> coordinated_spikes(std::span<const SpikeStats> spikes, WeekRange window) {
    if (!window.open_ended() && window.last < window.first) throw InputError("empty spike window");
    std::array<std::set<int>, kCommunities> spiking;
    for (const auto& s : spikes) {
        if (s.is_spike && window.contains(s.week)) spiking[index_of(s.population)].insert(s.attractor);
    }
    std::vector<int> out;
    std::set_intersection(spiking[0].begin(), spiking[0].end(), spiking[1].begin(), spiking[1].end(),
                          std::back_inserter(out));
    return out;
}

void write_spikes_csv(std::ostream& out, std::span<const SpikeStats> spikes, const StreamHeader& header) {
    out << "attractor,week,population,p,p_hat,x,x_hat,sigma,z,is_spike,degenerate\n";
    for (const auto& s : spikes) {
        write_row(out, {std::to_string(s.attractor), std::to_string(s.week), header.name(s.population), fmt_num(s.p),
                        fmt_num(s.p_hat), fmt_num(s.x), fmt_num(s.x_hat), fmt_num(s.sigma), fmt_num(s.z),
                        s.is_spike ? "1" : "0", s.degenerate ? "1" : "0"});
    }
}

void write_expected_traffic_csv(std::ostream& out, std::span<const SpikeStats> spikes, int attractor,
                                const StreamHeader& header) {
    out << "week,population,x_hat,x\n";
    for (const auto& s : spikes) {
        if (s.attractor != attractor) continue;
        write_row(out, {std::to_string(s.week), header.name(s.population), fmt_num(s.x_hat), fmt_num(s.x)});
    }
}

} // namespace bld
