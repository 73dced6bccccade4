#include "bld/measures.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "bld/report.hpp"

namespace bld {

WeeklyAttractorCounts weekly_attractor_counts(const AssignmentTable& assignments, const WeeklyCounts& counts) {
    WeeklyAttractorCounts out(assignments.k(), counts.n_weeks());
    for (std::size_t u = 0; u < counts.n_users(); ++u) {
        const auto& info = counts.user(u);
        const auto c = index_of(info.community);
        for (const auto& [w, cell] : counts.user_weeks(u)) {
            const auto a = assignments.at(info.id, w);
            if (!a || *a == kNoise) continue;
            std::uint64_t n = 0;
            for (const auto& [b, x] : cell) n += x;
            if (n == 0) continue;
            auto& slot = out.at(*a, w);
            ++slot.active_users[c];
            slot.tweets[c] += n;
        }
    }
    return out;
}

std::optional<double> homogeneity(double a, double b) {
    if (a + b <= 0.0) return std::nullopt;
    return std::abs(b - a) / (a + b);
}

HomogeneityResult weekly_homogeneity(const WeeklyAttractorCounts& counts, HomogeneityBasis basis) {
    HomogeneityResult out;
    for (int a = 0; a < counts.k(); ++a) {
        for (int w = 0; w < counts.n_weeks(); ++w) {
            const auto& cell = counts.at(a, w);
            const auto& v = basis == HomogeneityBasis::UniqueUsers ? cell.active_users : cell.tweets;
            const auto h = homogeneity(static_cast<double>(v[0]), static_cast<double>(v[1]));
            if (h) {
                out.records.push_back({a, w, *h});
            } else {
                out.undefined.emplace_back(a, w);
            }
        }
    }
    return out;
}

HomogeneityRanking mean_homogeneity_ranking(std::span<const HomogeneityRecord> records, int up_to_week, int k) {
    if (k < 0) throw InputError("negative attractor count");
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<std::size_t> n(static_cast<std::size_t>(k), 0);
    for (const auto& r : records) {
        if (r.week >= up_to_week || r.attractor < 0 || r.attractor >= k) continue;
        sum[static_cast<std::size_t>(r.attractor)] += r.h;
        ++n[static_cast<std::size_t>(r.attractor)];
    }
    HomogeneityRanking out;
    for (int a = 0; a < k; ++a) {
        const auto i = static_cast<std::size_t>(a);
        if (n[i] == 0) {
            out.excluded.push_back(a);
        } else {
            out.ranking.push_back({a, sum[i] / static_cast<double>(n[i]), n[i]});
        }
    }
    std::stable_sort(out.ranking.begin(), out.ranking.end(),
                     [](const RankedAttractor& x, const RankedAttractor& y) { return x.mean_h < y.mean_h; });
    return out;
}

std::optional<double> BiasTable::bias_of(int belief) const {
    auto it = std::lower_bound(beliefs.begin(), beliefs.end(), belief,
                               [](const BeliefBias& b, int v) { return b.belief < v; });
    if (it == beliefs.end() || it->belief != belief) return std::nullopt;
    return it->bias;
}

BiasTable belief_bias(const WeeklyCounts& counts, std::optional<WeekRange> weeks) {
    const auto n_beliefs = static_cast<std::size_t>(counts.n_beliefs());
    std::array<std::vector<double>, kCommunities> per{std::vector<double>(n_beliefs, 0.0),
                                                      std::vector<double>(n_beliefs, 0.0)};
    std::array<double, kCommunities> totals{};
    for (std::size_t u = 0; u < counts.n_users(); ++u) {
        const auto c = index_of(counts.user(u).community);
        for (const auto& [w, cell] : counts.user_weeks(u)) {
            if (weeks && !weeks->contains(w)) continue;
            for (const auto& [b, x] : cell) {
                per[c][static_cast<std::size_t>(b)] += x;
                totals[c] += x;
            }
        }
    }
    if (totals[0] <= 0.0 || totals[1] <= 0.0) {
        throw InputError("community bias needs events from both communities");
    }
    BiasTable out;
    for (std::size_t b = 0; b < n_beliefs; ++b) {
        const double ap = per[0][b] / totals[0];
        const double bp = per[1][b] / totals[1];
        if (ap + bp <= 0.0) {
            out.undefined.push_back(static_cast<int>(b));
            continue;
        }
        out.beliefs.push_back({static_cast<int>(b), ap, bp, ap / (ap + bp)});
    }
    return out;
}

std::vector<AttractorBias> attractor_bias(std::span<const AttractorProfile> profiles, const BiasTable& biases) {
    std::vector<AttractorBias> out;
    out.reserve(profiles.size());
    for (const auto& p : profiles) {
        double weighted = 0.0;
        double kept = 0.0;
        double dropped = 0.0;
        for (std::size_t b = 0; b < p.belief_frequency.size(); ++b) {
            const double f = p.belief_frequency[b];
            if (f == 0.0) continue;
            if (const auto bias = biases.bias_of(static_cast<int>(b))) {
                weighted += f * *bias;
                kept += f;
            } else {
                dropped += f;
            }
        }
        if (kept <= 0.0) {
            throw InputError("attractor " + std::to_string(p.attractor) + " has no belief with a defined bias");
        }
        out.push_back({p.attractor, weighted / kept, dropped});
    }
    return out;
}

void write_homogeneity_csv(std::ostream& out, std::span<const HomogeneityRecord> records) {
    out << "attractor,week,H\n";
    for (const auto& r : records) write_row(out, {std::to_string(r.attractor), std::to_string(r.week), fmt_num(r.h)});
}

void write_belief_bias_csv(std::ostream& out, const BiasTable& table) {
    out << "belief,BLM_p,KPOP_p,bias\n";
    for (const auto& b : table.beliefs) {
        write_row(out, {std::to_string(b.belief), fmt_num(b.a_p), fmt_num(b.b_p), fmt_num(b.bias)});
    }
}

void write_attractor_bias_csv(std::ostream& out, std::span<const AttractorBias> biases) {
    out << "attractor,bias\n";
    for (const auto& b : biases) write_row(out, {std::to_string(b.attractor), fmt_num(b.bias)});
}

void write_ranking_csv(std::ostream& out, const HomogeneityRanking& ranking) {
    out << "rank,attractor,mean_H,weeks\n";
    for (std::size_t i = 0; i < ranking.ranking.size(); ++i) {
        const auto& r = ranking.ranking[i];
        write_row(out, {std::to_string(i + 1), std::to_string(r.attractor), fmt_num(r.mean_h), std::to_string(r.n_weeks)});
    }
}

} // namespace bld
