#include "bld/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "bld/report.hpp"

namespace bld {

void canonicalize(std::vector<EmbeddedPoint>& points) {
    std::sort(points.begin(), points.end(),
              [](const EmbeddedPoint& a, const EmbeddedPoint& b) { return a.key() < b.key(); });
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!std::isfinite(points[i].x) || !std::isfinite(points[i].y)) {
            throw InputError("non-finite coordinate for " + points[i].user + " week " +
                             std::to_string(points[i].week));
        }
        if (i > 0 && points[i].key() == points[i - 1].key()) {
            throw InputError("duplicate embedding row for " + points[i].user + " week " +
                             std::to_string(points[i].week));
        }
    }
}

std::vector<EmbeddedPoint> parse_embedding(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty embedding file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "user,week,x,y") throw InputError("embedding header must be user,week,x,y");
    std::vector<EmbeddedPoint> points;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string user, week, x, y;
        if (!std::getline(ss, user, ',') || !std::getline(ss, week, ',') || !std::getline(ss, x, ',') ||
            !std::getline(ss, y, ',')) {
            throw InputError("malformed embedding row at line " + std::to_string(lineno));
        }
        try {
            std::size_t pos = 0;
            EmbeddedPoint p{user, std::stoi(week, &pos), 0.0, 0.0};
            if (pos != week.size()) throw std::invalid_argument("week");
            p.x = std::stod(x);
            p.y = std::stod(y);
            points.push_back(std::move(p));
        } catch (const std::logic_error&) {
            throw InputError("malformed embedding row at line " + std::to_string(lineno));
        }
    }
    canonicalize(points);
    return points;
}

std::vector<EmbeddedPoint> load_embedding(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open embedding file: " + path.string());
    return parse_embedding(in);
}

void save_embedding(std::ostream& out, std::span<const EmbeddedPoint> points) {
    out << "user,week,x,y\n";
    for (const auto& p : points) {
        out << p.user << ',' << p.week << ',' << fmt::format("{:.17g}", p.x) << ','
            << fmt::format("{:.17g}", p.y) << '\n';
    }
}

EmbeddingFilter restrict_to_series(std::vector<EmbeddedPoint> points, const BeliefVectorSeries& series) {
    EmbeddingFilter out;
    std::map<std::string, std::size_t> index;
    for (std::size_t u = 0; u < series.n_users(); ++u) index.emplace(series.users()[u].id, u);
    for (auto& p : points) {
        auto it = index.find(p.user);
        if (it != index.end() && series.vector(it->second, p.week) != nullptr) {
            out.points.push_back(std::move(p));
        } else {
            out.rejected.push_back(p.key());
        }
    }
    canonicalize(out.points);
    return out;
}

namespace {

struct VectorRef {
    std::size_t user;
    int week;
    const SparseVector* v;
};

double dot(const SparseVector& x, const std::vector<double>& d) {
    double s = 0.0;
    for (const auto& [b, w] : x) s += w * d[static_cast<std::size_t>(b)];
    return s;
}

double norm(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

// Centered scores X v for every row, where X = rows - mean.
std::vector<double> scores(const std::vector<VectorRef>& rows, const std::vector<double>& mean,
                           const std::vector<double>& axis, int threads) {
    const double shift = std::inner_product(mean.begin(), mean.end(), axis.begin(), 0.0);
    std::vector<double> out(rows.size());
    parallel_for(rows.size(), threads, [&](std::size_t i) { out[i] = dot(*rows[i].v, axis) - shift; });
    return out;
}

// One application of the covariance operator, X^T X v / n.
std::vector<double> apply_cov(const std::vector<VectorRef>& rows, const std::vector<double>& mean,
                              const std::vector<double>& axis, int threads) {
    const auto s = scores(rows, mean, axis, threads);
    std::vector<double> out(mean.size(), 0.0);
    double s_sum = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& [b, w] : *rows[i].v) out[static_cast<std::size_t>(b)] += s[i] * w;
        s_sum += s[i];
    }
    const double n = static_cast<double>(rows.size());
    for (std::size_t b = 0; b < out.size(); ++b) out[b] = (out[b] - mean[b] * s_sum) / n;
    return out;
}

void orthogonalize(std::vector<double>& v, const std::vector<double>& against) {
    const double p = std::inner_product(v.begin(), v.end(), against.begin(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * against[i];
}

// Leading eigenpair of the covariance restricted to the complement of `deflate`.
std::pair<std::vector<double>, double> power_axis(const std::vector<VectorRef>& rows,
                                                  const std::vector<double>& mean,
                                                  const std::vector<double>* deflate, std::mt19937_64& rng,
                                                  int threads) {
    std::vector<double> v(mean.size());
    for (auto& x : v) x = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    if (deflate) orthogonalize(v, *deflate);
    double nv = norm(v);
    for (auto& x : v) x /= nv;
    double lambda = 0.0;
    for (int iter = 0; iter < 2000; ++iter) {
        auto next = apply_cov(rows, mean, v, threads);
        if (deflate) orthogonalize(next, *deflate);
        lambda = norm(next);
        if (lambda <= 1e-300) return {v, 0.0};
        for (auto& x : next) x /= lambda;
        double diff = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) diff = std::max(diff, std::abs(next[i] - v[i]));
        v = std::move(next);
        if (diff < 1e-13) break;
    }
    // Fix the sign: largest-magnitude component positive.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (std::abs(v[i]) > std::abs(v[arg]) + 1e-15) arg = i;
    }
    if (v[arg] < 0) {
        for (auto& x : v) x = -x;
    }
    return {v, lambda};
}

} // namespace

std::vector<EmbeddedPoint> fallback_project(const BeliefVectorSeries& series, std::uint64_t seed, int threads) {
    std::vector<VectorRef> rows;
    for (std::size_t u = 0; u < series.n_users(); ++u) {
        const auto& t = series.track(u);
        for (std::size_t i = 0; i < t.vectors.size(); ++i) {
            rows.push_back({u, t.first_week + static_cast<int>(i), &t.vectors[i]});
        }
    }
    if (rows.empty()) throw InputError("degenerate projection: no belief vectors");
    bool distinct = false;
    for (const auto& r : rows) {
        if (*r.v != *rows.front().v) {
            distinct = true;
            break;
        }
    }
    if (!distinct) throw InputError("degenerate projection: all belief vectors are identical");

    std::vector<double> mean(static_cast<std::size_t>(series.n_beliefs()), 0.0);
    for (const auto& r : rows) {
        for (const auto& [b, w] : *r.v) mean[static_cast<std::size_t>(b)] += w;
    }
    for (auto& m : mean) m /= static_cast<double>(rows.size());

    std::mt19937_64 rng(seed);
    auto [axis1, lambda1] = power_axis(rows, mean, nullptr, rng, threads);
    auto [axis2, lambda2] = power_axis(rows, mean, &axis1, rng, threads);
    const auto xs = scores(rows, mean, axis1, threads);
    // Two distinct vectors span one direction; the second coordinate is then zero.
    const bool flat = lambda2 <= 1e-12 * lambda1;
    const auto ys = flat ? std::vector<double>(rows.size(), 0.0) : scores(rows, mean, axis2, threads);

    std::vector<EmbeddedPoint> points;
    points.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        points.push_back({series.users()[rows[i].user].id, rows[i].week, xs[i], ys[i]});
    }
    return points;
}

std::array<double, 2> AttractorSet::peak(int attractor) const {
    const auto& p = points[peak_points[static_cast<std::size_t>(attractor)]];
    return {p.x, p.y};
}

std::vector<std::size_t> AttractorSet::member_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) {
        if (l != kNoise) ++counts[static_cast<std::size_t>(l)];
    }
    return counts;
}

namespace {
double sig9(double v) { return std::stod(fmt_num(v)); }
} // namespace

nlohmann::json AttractorSet::to_json() const {
    nlohmann::json j;
    j["k"] = k;
    nlohmann::json params;
    params["bandwidth"] = sig9(bandwidth);
    params["peak_rule"] = config.k ? "top_k_gamma" : "gamma_threshold";
    if (config.k) params["k"] = *config.k;
    if (config.gamma_threshold) params["gamma_threshold"] = sig9(*config.gamma_threshold);
    params["noise_floor"] = sig9(config.noise_floor);
    j["params"] = params;
    const auto members = member_counts();
    nlohmann::json list = nlohmann::json::array();
    for (int a = 0; a < k; ++a) {
        const auto idx = peak_points[static_cast<std::size_t>(a)];
        list.push_back({{"id", a},
                        {"peak", {sig9(points[idx].x), sig9(points[idx].y)}},
                        {"peak_user", points[idx].user},
                        {"peak_week", points[idx].week},
                        {"density", sig9(density[idx])},
                        {"members", members[static_cast<std::size_t>(a)]}});
    }
    j["attractors"] = list;
    j["noise_points"] = std::count(labels.begin(), labels.end(), kNoise);
    j["n_points"] = points.size();
    return j;
}

AttractorSet density_peak_cluster(std::vector<EmbeddedPoint> points, const ClusterConfig& cfg) {
    canonicalize(points);
    const std::size_t n = points.size();
    if (n == 0) throw InputError("density_peak_cluster needs at least one point");
    if (cfg.k) {
        if (*cfg.k < 1) throw InputError("k must be at least 1");
        if (static_cast<std::size_t>(*cfg.k) > n) {
            throw InputError("k = " + std::to_string(*cfg.k) + " exceeds the number of points (" +
                             std::to_string(n) + ")");
        }
    } else if (!cfg.gamma_threshold) {
        throw InputError("clustering needs either k or gamma_threshold");
    }

    double bw = 0.0;
    if (cfg.bandwidth) {
        bw = *cfg.bandwidth;
        if (!(bw > 0.0)) throw InputError("bandwidth must be positive");
    } else {
        double x0 = points[0].x, x1 = x0, y0 = points[0].y, y1 = y0;
        for (const auto& p : points) {
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y);
            y1 = std::max(y1, p.y);
        }
        const double diag = std::hypot(x1 - x0, y1 - y0);
        bw = diag > 0.0 ? diag / 20.0 : 1.0;
    }

    AttractorSet out;
    out.bandwidth = bw;
    out.config = cfg;
    out.density.assign(n, 0.0);
    const double inv = 1.0 / (2.0 * bw * bw);
    const double norm_by = n > 1 ? 1.0 / static_cast<double>(n - 1) : 1.0;
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        double rho = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = points[i].x - points[j].x;
            const double dy = points[i].y - points[j].y;
            rho += std::exp(-(dx * dx + dy * dy) * inv);
        }
        out.density[i] = rho * norm_by;
    });

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (out.density[a] != out.density[b]) return out.density[a] > out.density[b];
        return a < b;
    });
    std::vector<std::size_t> rank(n);
    for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

    out.delta.assign(n, 0.0);
    out.parent.assign(n, -1);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        double best = std::numeric_limits<double>::infinity();
        std::ptrdiff_t arg = -1;
        double farthest = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = points[i].x - points[j].x;
            const double dy = points[i].y - points[j].y;
            const double d2 = dx * dx + dy * dy;
            if (rank[j] < rank[i]) {
                if (d2 < best) {
                    best = d2;
                    arg = static_cast<std::ptrdiff_t>(j);
                }
            } else {
                farthest = std::max(farthest, d2);
            }
        }
        if (arg >= 0) {
            out.delta[i] = std::sqrt(best);
            out.parent[i] = arg;
        } else {
            out.delta[i] = std::sqrt(farthest);
        }
    });

    // The global maximum always heads a cluster, so every chain ends at a peak.
    std::vector<std::size_t> peaks{order[0]};
    std::vector<std::size_t> rest(order.begin() + 1, order.end());
    auto gamma = [&](std::size_t i) { return out.density[i] * out.delta[i]; };
    std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
        if (gamma(a) != gamma(b)) return gamma(a) > gamma(b);
        return a < b;
    });
    if (cfg.k) {
        peaks.insert(peaks.end(), rest.begin(), rest.begin() + (*cfg.k - 1));
    } else {
        for (auto i : rest) {
            if (gamma(i) > *cfg.gamma_threshold) peaks.push_back(i);
        }
    }
    std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
    out.k = static_cast<int>(peaks.size());
    out.peak_points = peaks;

    std::vector<int> peak_id(n, kNoise);
    for (std::size_t a = 0; a < peaks.size(); ++a) peak_id[peaks[a]] = static_cast<int>(a);
    out.labels.assign(n, kNoise);
    for (auto i : order) {
        out.labels[i] = peak_id[i] != kNoise ? peak_id[i] : out.labels[static_cast<std::size_t>(out.parent[i])];
    }
    if (cfg.noise_floor > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            if (peak_id[i] == kNoise && out.density[i] < cfg.noise_floor) out.labels[i] = kNoise;
        }
    }
    out.points = std::move(points);
    return out;
}

std::optional<int> AssignmentTable::at(const std::string& user, int week) const {
    auto it = labels_.find(UserWeek{user, week});
    if (it == labels_.end()) return std::nullopt;
    return it->second;
}

AssignmentTable assign_weekly(std::span<const EmbeddedPoint> points, const AttractorSet& attractors) {
    if (attractors.k == 0) throw InputError("empty attractor set");
    std::map<UserWeek, std::size_t> in_sample;
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < attractors.points.size(); ++i) {
        in_sample.emplace(attractors.points[i].key(), i);
        if (attractors.labels[i] != kNoise) labeled.push_back(i);
    }
    if (labeled.empty()) throw InputError("empty attractor set: every clustered point is noise");

    std::map<UserWeek, int> table;
    for (const auto& p : points) {
        auto it = in_sample.find(p.key());
        if (it != in_sample.end()) {
            const auto& q = attractors.points[it->second];
            if (q.x == p.x && q.y == p.y) {
                table[p.key()] = attractors.labels[it->second];
                continue;
            }
        }
        double best = std::numeric_limits<double>::infinity();
        int label = kNoise;
        for (auto j : labeled) {
            const auto& q = attractors.points[j];
            const double d2 = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
            const int l = attractors.labels[j];
            if (d2 < best || (d2 == best && l < label)) {
                best = d2;
                label = l;
            }
        }
        table[p.key()] = label;
    }
    return AssignmentTable(attractors.k, std::move(table));
}

void write_assignments_csv(std::ostream& out, const AssignmentTable& table) {
    out << "user,week,attractor\n";
    for (const auto& [key, a] : table.entries()) {
        write_row(out, {key.user, std::to_string(key.week), a == kNoise ? std::string("NOISE") : std::to_string(a)});
    }
}

ProfileSet attractor_profiles(const AssignmentTable& assignments, const WeeklyCounts& counts,
                              std::optional<WeekRange> weeks) {
    const auto k = static_cast<std::size_t>(assignments.k());
    const auto n_beliefs = static_cast<std::size_t>(counts.n_beliefs());
    std::vector<std::vector<double>> mass(k, std::vector<double>(n_beliefs, 0.0));
    for (std::size_t u = 0; u < counts.n_users(); ++u) {
        for (const auto& [w, cell] : counts.user_weeks(u)) {
            if (weeks && !weeks->contains(w)) continue;
            const auto a = assignments.at(counts.user(u).id, w);
            if (!a || *a == kNoise) continue;
            for (const auto& [b, c] : cell) mass[static_cast<std::size_t>(*a)][static_cast<std::size_t>(b)] += c;
        }
    }
    ProfileSet out;
    for (std::size_t a = 0; a < k; ++a) {
        const double total = std::accumulate(mass[a].begin(), mass[a].end(), 0.0);
        if (total <= 0.0) {
            out.empty_attractors.push_back(static_cast<int>(a));
            continue;
        }
        for (auto& x : mass[a]) x /= total;
        out.profiles.push_back({static_cast<int>(a), std::move(mass[a])});
    }
    return out;
}

LandscapeModel build_landscape_model(const WeeklyCounts& counts, const SmoothingParams& smoothing,
                                     const ClusterConfig& cluster, const std::vector<EmbeddedPoint>* external,
                                     std::uint64_t projection_seed) {
    LandscapeModel m;
    m.series = build_belief_vectors(counts, smoothing, cluster.threads);
    if (external) {
        auto filtered = restrict_to_series(*external, m.series);
        m.embedding = std::move(filtered.points);
        m.rejected_embedding = std::move(filtered.rejected);
    } else {
        m.embedding = fallback_project(m.series, projection_seed, cluster.threads);
        m.projected = true;
    }
    m.attractors = density_peak_cluster(m.embedding, cluster);
    m.assignments = assign_weekly(m.embedding, m.attractors);
    return m;
}

} // namespace bld
