#include "bld/comparative.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "bld/report.hpp"

namespace bld {

namespace {

int parse_week(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size() || v < 0) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw InputError("bad week '" + s + "' in period " + context);
    }
}

constexpr double kClampR = 1.0 - 1e-12;

double fisher_z(double r) { return std::atanh(std::clamp(r, -kClampR, kClampR)); }

} // namespace

PeriodSpec::PeriodSpec(std::vector<Period> periods) : periods_(std::move(periods)) {
    if (periods_.empty()) throw InputError("period spec is empty");
    std::set<std::string> names;
    for (std::size_t i = 0; i < periods_.size(); ++i) {
        const auto& p = periods_[i];
        if (p.name.empty()) throw InputError("period names must be nonempty");
        if (!names.insert(p.name).second) throw InputError("duplicate period name " + p.name);
        if (p.weeks.first < 0) throw InputError("period " + p.name + " starts before week 0");
        if (!p.weeks.open_ended() && p.weeks.last < p.weeks.first) throw InputError("period " + p.name + " is empty");
        if (p.weeks.open_ended() && i + 1 != periods_.size()) {
            throw InputError("only the last period may be open-ended");
        }
        if (i > 0 && periods_[i - 1].weeks.last >= p.weeks.first) {
            throw InputError("periods must be ordered and disjoint (" + periods_[i - 1].name + ", " + p.name + ")");
        }
    }
}

PeriodSpec PeriodSpec::parse(const std::string& text) {
    std::vector<Period> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        const auto dots = item.find("..");
        if (eq == std::string::npos || dots == std::string::npos || dots < eq) {
            throw InputError("period '" + item + "' must look like name=first..last");
        }
        Period p;
        p.name = item.substr(0, eq);
        p.weeks.first = parse_week(item.substr(eq + 1, dots - eq - 1), p.name);
        const auto last = item.substr(dots + 2);
        p.weeks.last = last.empty() ? -1 : parse_week(last, p.name);
        out.push_back(std::move(p));
    }
    return PeriodSpec(std::move(out));
}

PeriodSpec PeriodSpec::defaults() { return PeriodSpec({{"pre", {0, 19}}, {"event", {20, 23}}, {"post", {24, -1}}}); }

WeekRange PeriodSpec::clamp(std::size_t i, int n_weeks) const {
    const auto& p = periods_.at(i);
    WeekRange r{p.weeks.first, p.weeks.open_ended() ? n_weeks - 1 : std::min(p.weeks.last, n_weeks - 1)};
    if (r.last < r.first) throw InputError("period " + p.name + " has no weeks inside the data");
    return r;
}

std::string PeriodSpec::to_string() const {
    std::string s;
    for (const auto& p : periods_) {
        if (!s.empty()) s += ',';
        s += p.name + '=' + std::to_string(p.weeks.first) + "..";
        if (!p.weeks.open_ended()) s += std::to_string(p.weeks.last);
    }
    return s;
}

std::set<std::string> load_amplifiers(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open amplifiers file: " + path.string());
    std::set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.insert(line);
    }
    return out;
}

FlowTable amplifier_flows(const AssignmentTable& assignments, const WeeklyCounts& counts,
                          const std::set<std::string>& amplifiers, const PeriodSpec& periods) {
    std::vector<std::size_t> users;
    for (const auto& id : amplifiers) {
        const auto u = counts.find_user(id);
        if (!u) throw InputError("amplifier " + id + " is not in the event stream");
        users.push_back(*u);
    }
    FlowTable out;
    for (std::size_t pi = 0; pi < periods.size(); ++pi) {
        const auto range = periods.clamp(pi, counts.n_weeks());
        PeriodFlow flow;
        flow.period = periods[pi].name;
        std::map<int, std::uint64_t> per_attractor;
        for (auto u : users) {
            for (const auto& [w, cell] : counts.user_weeks(u)) {
                if (!range.contains(w)) continue;
                const auto a = assignments.at(counts.user(u).id, w);
                if (!a || *a == kNoise) continue;
                for (const auto& [b, x] : cell) per_attractor[*a] += x;
            }
        }
        for (const auto& [a, n] : per_attractor) flow.amplifier_events += n;
        if (flow.amplifier_events == 0) {
            flow.no_activity = true;
            out.periods.push_back(std::move(flow));
            continue;
        }
        for (const auto& [a, n] : per_attractor) {
            flow.shares[a] = static_cast<double>(n) / static_cast<double>(flow.amplifier_events);
        }
        std::vector<std::pair<int, std::uint64_t>> ranked(per_attractor.begin(), per_attractor.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
        std::uint64_t covered = 0;
        for (const auto& [a, n] : ranked) {
            flow.cover90.push_back(a);
            covered += n;
            if (10 * covered >= 9 * flow.amplifier_events) break;
        }
        out.periods.push_back(std::move(flow));
    }
    return out;
}

std::vector<std::pair<std::string, double>> weighted_bias_by_period(const FlowTable& flows,
                                                                    const std::map<int, double>& biases) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& p : flows.periods) {
        if (p.no_activity) continue;
        double sum = 0.0;
        for (const auto& [a, share] : p.shares) {
            if (share == 0.0) continue;
            auto it = biases.find(a);
            if (it == biases.end()) {
                throw InputError("no bias for attractor " + std::to_string(a) + " active in period " + p.period);
            }
            sum += share * it->second;
        }
        out.emplace_back(p.period, sum);
    }
    return out;
}

std::vector<double> ActivityMatrix::column(Community c) const {
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& row : values) out.push_back(row[index_of(c)]);
    return out;
}

ActivityMatrix period_activity_matrix(const ActivityTable& activity, WeekRange period, ActivityMode mode) {
    if (period.open_ended()) period.last = activity.n_weeks() - 1;
    period.last = std::min(period.last, activity.n_weeks() - 1);
    if (period.first < 0 || period.last < period.first) throw InputError("empty period");
    ActivityMatrix m;
    const double n_weeks = static_cast<double>(period.last - period.first + 1);
    for (int a = 0; a < activity.k(); ++a) {
        if (mode == ActivityMode::PerAttractorMean) {
            std::array<double, kCommunities> mean{};
            for (int w = period.first; w <= period.last; ++w) {
                for (std::size_t c = 0; c < kCommunities; ++c) {
                    mean[c] += static_cast<double>(activity.at(static_cast<Community>(c), w, a));
                }
            }
            for (auto& v : mean) v /= n_weeks;
            m.attractor.push_back(a);
            m.week.push_back(-1);
            m.values.push_back(mean);
        } else {
            for (int w = period.first; w <= period.last; ++w) {
                m.attractor.push_back(a);
                m.week.push_back(w);
                m.values.push_back({static_cast<double>(activity.at(Community::A, w, a)),
                                    static_cast<double>(activity.at(Community::B, w, a))});
            }
        }
    }
    return m;
}

ActivityMatrix period_activity_matrix(const AssignmentTable& assignments, const WeeklyCounts& counts,
                                      WeekRange period, ActivityMode mode) {
    return period_activity_matrix(attractor_activity(assignments, counts), period, mode);
}

CorrelationResult pearson_ci(std::span<const double> xs, std::span<const double> ys, double conf) {
    if (xs.size() != ys.size()) throw InputError("correlation inputs differ in length");
    const std::size_t n = xs.size();
    if (n < 4) throw InputError("correlation needs at least 4 samples");
    if (!(conf > 0.0 && conf < 1.0)) throw InputError("confidence level must lie in (0, 1)");
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw InputError("undefined correlation: zero variance");
    CorrelationResult out;
    out.n = n;
    out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double zc = boost::math::quantile(boost::math::normal(), 0.5 + conf / 2.0);
    const double z = fisher_z(out.r);
    const double half = zc / std::sqrt(static_cast<double>(n - 3));
    out.ci_low = std::min(out.r, std::tanh(z - half));
    out.ci_high = std::max(out.r, std::tanh(z + half));
    return out;
}

std::vector<CorrelationRow> correlation_report(const ActivityTable& activity, const PeriodSpec& periods,
                                               const StreamHeader& header, double conf) {
    std::vector<ActivityMatrix> means;
    std::vector<ActivityMatrix> cells;
    for (std::size_t i = 0; i < periods.size(); ++i) {
        const auto range = periods.clamp(i, activity.n_weeks());
        means.push_back(period_activity_matrix(activity, range, ActivityMode::PerAttractorMean));
        cells.push_back(period_activity_matrix(activity, range, ActivityMode::PerWeekCells));
    }
    std::vector<CorrelationRow> rows;
    for (std::size_t c = 0; c < kCommunities; ++c) {
        const auto community = static_cast<Community>(c);
        for (std::size_t i = 0; i < periods.size(); ++i) {
            for (std::size_t j = i + 1; j < periods.size(); ++j) {
                const auto x = means[i].column(community);
                const auto y = means[j].column(community);
                rows.push_back({header.name(community), periods[i].name + "/" + periods[j].name,
                                pearson_ci(x, y, conf)});
            }
        }
    }
    for (std::size_t i = 0; i < periods.size(); ++i) {
        const auto x = cells[i].column(Community::A);
        const auto y = cells[i].column(Community::B);
        rows.push_back({"Between", periods[i].name, pearson_ci(x, y, conf)});
    }
    return rows;
}

double compare_correlations(const CorrelationResult& a, const CorrelationResult& b) {
    if (a.n <= 3 || b.n <= 3) throw InputError("correlation comparison needs n > 3 on both sides");
    const double se = std::sqrt(1.0 / static_cast<double>(a.n - 3) + 1.0 / static_cast<double>(b.n - 3));
    const double z = (fisher_z(a.r) - fisher_z(b.r)) / se;
    const double p = std::erfc(std::abs(z) / std::sqrt(2.0));
    return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

double adjusted_rand_index(std::span<const int> labels_a, std::span<const int> labels_b) {
    if (labels_a.size() != labels_b.size()) throw InputError("partitions cover different point sets");
    const std::size_t n = labels_a.size();
    if (n < 2) return 1.0;
    std::map<std::pair<int, int>, std::uint64_t> joint;
    std::map<int, std::uint64_t> rows, cols;
    for (std::size_t i = 0; i < n; ++i) {
        ++joint[{labels_a[i], labels_b[i]}];
        ++rows[labels_a[i]];
        ++cols[labels_b[i]];
    }
    auto comb2 = [](std::uint64_t x) { return static_cast<double>(x) * static_cast<double>(x - (x > 0)) / 2.0; };
    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, c] : joint) index += comb2(c);
    for (const auto& [key, c] : rows) sum_a += comb2(c);
    for (const auto& [key, c] : cols) sum_b += comb2(c);
    const double expected = sum_a * sum_b / comb2(n);
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

double adjusted_rand_index(const std::map<std::string, int>& labels_a, const std::map<std::string, int>& labels_b) {
    if (labels_a.size() != labels_b.size()) throw InputError("partitions cover different point sets");
    std::vector<int> a, b;
    a.reserve(labels_a.size());
    b.reserve(labels_b.size());
    auto ib = labels_b.begin();
    for (const auto& [key, la] : labels_a) {
        if (ib->first != key) throw InputError("partitions cover different point sets");
        a.push_back(la);
        b.push_back(ib->second);
        ++ib;
    }
    return adjusted_rand_index(a, b);
}

std::map<std::string, int> modal_assignment(const AssignmentTable& assignments, std::optional<WeekRange> window) {
    std::map<std::string, std::map<int, std::size_t>> tallies;
    for (const auto& [key, a] : assignments.entries()) {
        if (window && !window->contains(key.week)) continue;
        auto& t = tallies[key.user];
        if (a != kNoise) ++t[a];
    }
    std::map<std::string, int> out;
    for (const auto& [user, t] : tallies) {
        int best = kNoise;
        std::size_t best_n = 0;
        for (const auto& [a, n] : t) {
            if (n > best_n) {
                best = a;
                best_n = n;
            }
        }
        out.emplace(user, best);
    }
    return out;
}

MemberSets member_sets(const AssignmentTable& assignments, JaccardBasis basis, const WeeklyCounts& counts,
                       std::optional<WeekRange> window) {
    MemberSets out(static_cast<std::size_t>(assignments.k()));
    if (basis == JaccardBasis::MemberUsers) {
        for (const auto& [user, a] : modal_assignment(assignments, window)) {
            if (a != kNoise) out[static_cast<std::size_t>(a)].insert(user);
        }
    } else {
        for (const auto& p : attractor_profiles(assignments, counts, window).profiles) {
            for (std::size_t b = 0; b < p.belief_frequency.size(); ++b) {
                if (p.belief_frequency[b] > 0.0) out[static_cast<std::size_t>(p.attractor)].insert(std::to_string(b));
            }
        }
    }
    return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() || b.empty()) return 0.0;
    std::size_t inter = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++inter;
            ++ia;
            ++ib;
        }
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::vector<JaccardMatch> jaccard_match(const MemberSets& a, const MemberSets& b) {
    std::vector<JaccardMatch> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        JaccardMatch m;
        m.a_id = static_cast<int>(i);
        m.empty_basis = a[i].empty();
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double s = jaccard(a[i], b[j]);
            if (m.b_id < 0 || s > m.jaccard) {
                m.b_id = static_cast<int>(j);
                m.jaccard = s;
            }
        }
        out.push_back(m);
    }
    return out;
}

namespace {

struct SweepModel {
    AssignmentTable assignments;
    std::vector<SpikeStats> spikes;
    std::map<std::string, int> modal;
};

bool spikes_in(std::span<const SpikeStats> spikes, int attractor, WeekRange window) {
    return std::any_of(spikes.begin(), spikes.end(), [&](const SpikeStats& s) {
        return s.attractor == attractor && s.is_spike && window.contains(s.week);
    });
}

} // namespace

SweepResult sensitivity_sweep(const WeeklyCounts& counts, const SweepConfig& cfg) {
    if (cfg.half_lives.size() < 2) throw InputError("sensitivity sweep needs at least two half-lives");
    const auto ref_it = std::find_if(cfg.half_lives.begin(), cfg.half_lives.end(),
                                     [&](double h) { return std::abs(h - cfg.reference) < 1e-12; });
    if (ref_it == cfg.half_lives.end()) throw InputError("reference half-life is not in the sweep");
    const auto ref = static_cast<std::size_t>(ref_it - cfg.half_lives.begin());

    const std::size_t n = cfg.half_lives.size();
    for (double h : cfg.half_lives) alpha_from_half_life(h);
    std::vector<SweepModel> models(n);
    std::vector<std::string> errors(n);
    // Models run in parallel; each one's own inner work stays single-threaded
    // when the sweep itself is parallel.
    ClusterConfig inner = cfg.cluster;
    inner.threads = cfg.threads > 1 ? 1 : cfg.cluster.threads;
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        try {
            const auto smoothing = SmoothingParams::from_half_life(cfg.half_lives[i]);
            const auto* external = cfg.embedding_for ? cfg.embedding_for(cfg.half_lives[i]) : nullptr;
            auto model = build_landscape_model(counts, smoothing, inner, external, cfg.projection_seed);
            models[i].spikes = detect_spikes(model.assignments, counts, smoothing, cfg.spikes);
            models[i].modal = modal_assignment(model.assignments);
            models[i].assignments = std::move(model.assignments);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            throw InputError("half-life " + fmt_num(cfg.half_lives[i]) + ": " + errors[i]);
        }
    }

    SweepResult out;
    out.half_lives = cfg.half_lives;
    out.ari.assign(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            out.ari[i][j] = out.ari[j][i] = adjusted_rand_index(models[i].modal, models[j].modal);
        }
    }

    const auto& reference = models[ref];
    if (cfg.flagged.empty()) {
        for (int a = 0; a < reference.assignments.k(); ++a) {
            if (spikes_in(reference.spikes, a, cfg.window)) out.flagged.push_back(a);
        }
    } else {
        out.flagged = cfg.flagged;
    }
    const auto ref_sets = member_sets(reference.assignments, cfg.basis, counts);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == ref) continue;
        const auto sets = member_sets(models[i].assignments, cfg.basis, counts);
        const auto matches = jaccard_match(ref_sets, sets);
        for (int a : out.flagged) {
            if (a < 0 || static_cast<std::size_t>(a) >= matches.size()) {
                throw InputError("flagged attractor " + std::to_string(a) + " is not in the reference model");
            }
            const auto& m = matches[static_cast<std::size_t>(a)];
            out.matches.push_back({cfg.half_lives[i], a, m.b_id, m.jaccard,
                                   m.b_id >= 0 && spikes_in(models[i].spikes, m.b_id, cfg.window)});
        }
    }
    return out;
}

void write_flows_csv(std::ostream& out, const FlowTable& flows) {
    out << "period,attractor,share\n";
    for (const auto& p : flows.periods) {
        for (const auto& [a, s] : p.shares) write_row(out, {p.period, std::to_string(a), fmt_num(s)});
    }
}

void write_weighted_bias_csv(std::ostream& out, std::span<const std::pair<std::string, double>> rows) {
    out << "period,weighted_bias\n";
    for (const auto& [period, v] : rows) write_row(out, {period, fmt_num(v)});
}

void write_correlations_csv(std::ostream& out, std::span<const CorrelationRow> rows) {
    out << "Group,Period,r,ci_low,ci_high,n\n";
    for (const auto& row : rows) {
        write_row(out, {row.group, row.period, fmt_num(row.result.r), fmt_num(row.result.ci_low),
                        fmt_num(row.result.ci_high), std::to_string(row.result.n)});
    }
}

void write_ari_matrix_csv(std::ostream& out, const SweepResult& sweep) {
    std::vector<std::string> header{"half_life"};
    for (double h : sweep.half_lives) header.push_back(fmt_num(h));
    write_row(out, header);
    for (std::size_t i = 0; i < sweep.half_lives.size(); ++i) {
        std::vector<std::string> row{fmt_num(sweep.half_lives[i])};
        for (double v : sweep.ari[i]) row.push_back(fmt_num(v));
        write_row(out, row);
    }
}

void write_jaccard_matches_csv(std::ostream& out, const SweepResult& sweep) {
    out << "half_life,reference_attractor,matched_attractor,jaccard,spikes_in_window\n";
    for (const auto& m : sweep.matches) {
        write_row(out, {fmt_num(m.half_life), std::to_string(m.reference_attractor), std::to_string(m.matched_attractor),
                        fmt_num(m.jaccard), m.spikes_in_window ? "1" : "0"});
    }
}

} // namespace bld
