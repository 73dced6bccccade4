// Acceptance checks: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "bld/beliefdyn.hpp"
#include "bld/cli.hpp"
#include "bld/comparative.hpp"
#include "bld/events.hpp"
#include "bld/landscape.hpp"
#include "bld/measures.hpp"
#include "bld/synth.hpp"
#include "oracles.hpp"

using namespace bld;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Table = std::vector<std::vector<std::string>>;

Table read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing " + path.string());
    Table rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int status = run_cli(args, out, err);
    if (status != 0) throw std::runtime_error("bld " + args.front() + " failed: " + err.str());
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("bld_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream f(path);
    f << j.dump(2) << '\n';
}

/// Cluster id -> planted attractor, by majority over assignments.csv.
std::map<int, int> map_to_truth(const fs::path& assignments, const synth::GroundTruth& truth) {
    std::map<int, std::map<int, int>> votes;
    for (const auto& row : read_csv(assignments)) {
        if (row[2] == "NOISE") continue;
        const auto t = truth.label(row[0], std::stoi(row[1]));
        if (t) ++votes[std::stoi(row[2])][*t];
    }
    std::map<int, int> out;
    for (const auto& [cluster, v] : votes) {
        int best = -1, best_n = -1;
        for (const auto& [t, n] : v) {
            if (n > best_n) {
                best = t;
                best_n = n;
            }
        }
        out[cluster] = best;
    }
    return out;
}

int cluster_of(const std::map<int, int>& mapping, int planted) {
    for (const auto& [cluster, t] : mapping) {
        if (t == planted) return cluster;
    }
    return -1;
}

std::map<int, double> disjoint_mixture(int first, int width) {
    std::map<int, double> m;
    for (int b = first; b < first + width; ++b) m[b] = 1.0 + (b - first) % 3;
    return m;
}

// ---------------------------------------------------------------------------

Outcome fisher_ci() {
    const auto [x, y] = oracle::vectors_with_correlation(0.974, 21);
    const auto r = pearson_ci(x, y);
    const bool ok = std::abs(r.r - 0.974) < 1e-9 && std::abs(r.ci_low - 0.936) <= 0.001 &&
                    std::abs(r.ci_high - 0.990) <= 0.001;
    return {ok, fmt::format("r={:.6f} n={} ci=[{:.4f}, {:.4f}] (published [0.936, 0.990])", r.r, r.n, r.ci_low,
                            r.ci_high)};
}

Outcome half_life_constant() {
    const double a = alpha_from_half_life(5);
    const double half = std::pow(1 - a, 5);
    return {std::abs(a - 0.129449) <= 1e-6 && std::abs(half - 0.5) <= 1e-9,
            fmt::format("alpha={:.9f} (1-alpha)^5={:.12f}", a, half)};
}

Outcome ewma_oracle() {
    std::mt19937_64 rng(314);
    double worst = 0.0;
    std::size_t cells = 0;
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<BeliefEvent> ev;
        for (int u = 0; u < 20; ++u) {
            for (int w = 0; w < 50; ++w) {
                if (rng() % 4 == 0) continue;
                const int n = 1 + static_cast<int>(rng() % 5);
                for (int i = 0; i < n; ++i) {
                    ev.push_back({fmt::format("u{:02d}", u), w * kSecondsPerWeek + static_cast<std::int64_t>(rng() % 600000),
                                  static_cast<int>(rng() % 30), u % 2 ? Community::A : Community::B, false});
                }
            }
        }
        const auto counts = bin_weekly(ev, 0, 30, 50);
        const auto params = SmoothingParams::from_half_life(5);
        const auto s = build_belief_vectors(counts, params, 2);
        for (std::size_t u = 0; u < counts.n_users(); ++u) {
            for (int w = 0; w < 50; ++w) {
                const auto ref = oracle::belief_vector(counts, u, w, params.alpha);
                const auto got = s.vector(u, w) ? s.dense(u, w) : std::vector<double>(30, 0.0);
                for (int b = 0; b < 30; ++b) {
                    worst = std::max(worst, std::abs(got[static_cast<std::size_t>(b)] - ref[static_cast<std::size_t>(b)]));
                    ++cells;
                }
            }
        }
    }
    return {worst <= 1e-9, fmt::format("{} cells over 3 random streams, max |diff|={:.3g}", cells, worst)};
}

Outcome spike_oracle() {
    std::mt19937_64 rng(2718);
    const int k = 25, weeks = 60;
    ActivityTable t(k, weeks);
    for (int w = 0; w < weeks; ++w) {
        for (std::size_t c = 0; c < kCommunities; ++c) {
            if (w == 17 && c == 1) continue;  // one silent population-week
            for (int a = 0; a < k; ++a) t.at(static_cast<Community>(c), w, a) = rng() % 60;
        }
    }
    const auto smoothing = SmoothingParams::from_half_life(5);
    const auto spikes = detect_spikes(t, smoothing);
    std::map<std::tuple<int, int, int>, const SpikeStats*> by_cell;
    for (const auto& s : spikes) by_cell[{s.attractor, s.week, static_cast<int>(s.population)}] = &s;
    double worst = 0.0;
    std::size_t checked = 0;
    bool structure = true;
    for (int a = 0; a < k; ++a) {
        for (std::size_t c = 0; c < kCommunities; ++c) {
            const auto pop = static_cast<Community>(c);
            std::vector<double> p(weeks, 0.0);
            for (int w = 0; w < weeks; ++w) {
                double total = 0;
                for (int i = 0; i < k; ++i) total += static_cast<double>(t.at(pop, w, i));
                if (total > 0) p[static_cast<std::size_t>(w)] = static_cast<double>(t.at(pop, w, a)) / total;
            }
            for (int w = 0; w < weeks; ++w) {
                auto it = by_cell.find({a, w, static_cast<int>(c)});
                if (t.total(pop, w) == 0) {
                    structure = structure && it == by_cell.end();
                    continue;
                }
                if (it == by_cell.end()) {
                    structure = false;
                    continue;
                }
                const auto ref = oracle::spike_cell(p, w, smoothing.alpha);
                const auto& s = *it->second;
                worst = std::max({worst, std::abs(s.p_hat - ref.p_hat), std::abs(s.sigma - ref.sigma)});
                if (ref.sigma >= 1e-9) worst = std::max(worst, std::abs(s.z - ref.z));
                ++checked;
            }
        }
    }
    return {structure && worst <= 1e-9, fmt::format("{} cells, max |diff| over p_hat, sigma, z = {:.3g}", checked, worst)};
}

synth::ScenarioConfig spike_scenario(std::uint64_t seed, bool planted) {
    // 10 equally popular attractors per community; 300 users x 3 events/week
    // gives about 900 events per community-week, i.e. proportion noise of 0.01
    // around a baseline of 0.1.
    synth::ScenarioConfig cfg;
    cfg.seed = seed;
    cfg.weeks = 30;
    cfg.n_beliefs = 40;
    cfg.users = {300, 300};
    cfg.events_per_user_week = 3.0;
    for (int a = 0; a < 10; ++a) {
        cfg.attractors.push_back({{10.0 * a, 0.0}, 0.3, disjoint_mixture(4 * a, 4), {0.1, 0.1}});
    }
    if (planted) cfg.planted.push_back({2, 20, Community::A, 3.0});
    return cfg;
}

struct SpikeRun {
    std::vector<SpikeStats> spikes;
    int burn_in = 0;
};

SpikeRun spikes_for(const synth::SyntheticStream& s, int weeks, int n_beliefs) {
    const auto counts = bin_weekly(s.events, s.header.epoch, n_beliefs, weeks);
    std::map<UserWeek, int> labels;
    for (std::size_t u = 0; u < counts.n_users(); ++u) {
        for (const auto& [w, cell] : counts.user_weeks(u)) {
            labels[{counts.user(u).id, w}] = *s.truth.label(counts.user(u).id, w);
        }
    }
    const auto smoothing = SmoothingParams::from_half_life(5);
    SpikeParams params;
    return {detect_spikes(AssignmentTable(s.truth.k, labels), counts, smoothing, params),
            params.burn_in_for(smoothing)};
}

Outcome planted_spike() {
    const auto cfg = spike_scenario(20200525, true);
    const auto stream = synth::generate_stream(cfg);
    const auto run = spikes_for(stream, cfg.weeks, cfg.n_beliefs);
    bool planted_hit = false;
    double planted_z = 0.0;
    std::vector<std::string> others;
    for (const auto& s : run.spikes) {
        if (s.week < run.burn_in || !s.is_spike) continue;
        if (s.attractor == 2 && s.week == 20 && s.population == Community::A) {
            planted_hit = s.z > 2.0;
            planted_z = s.z;
        } else {
            others.push_back(fmt::format("({},{},{},z={:.2f})", s.attractor, s.week,
                                         s.population == Community::A ? "A" : "B", s.z));
        }
    }
    std::size_t null_cells = 0, null_spikes = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto ncfg = spike_scenario(seed, false);
        const auto null = spikes_for(synth::generate_stream(ncfg), ncfg.weeks, ncfg.n_beliefs);
        for (const auto& s : null.spikes) {
            if (s.week < null.burn_in) continue;
            ++null_cells;
            null_spikes += s.is_spike;
        }
    }
    const double rate = static_cast<double>(null_spikes) / static_cast<double>(null_cells);
    std::string listed;
    for (std::size_t i = 0; i < std::min<std::size_t>(others.size(), 4); ++i) listed += " " + others[i];
    return {planted_hit && others.empty() && rate < 0.05,
            fmt::format("planted cell z={:.2f} flagged={}; other flagged cells after burn-in: {}{}{}; "
                        "null spike rate {}/{} = {:.4f}",
                        planted_z, planted_hit, others.size(), others.empty() ? "" : " e.g.", listed, null_spikes,
                        null_cells, rate)};
}

Outcome homogeneity_properties() {
    std::mt19937_64 rng(6);
    std::size_t bad = 0;
    for (int i = 0; i < 10000; ++i) {
        const double a = static_cast<double>(rng() % 100);
        const double b = static_cast<double>(rng() % 100);
        const auto h = homogeneity(a, b);
        if (a == 0 && b == 0) {
            bad += h.has_value();
            continue;
        }
        if (!h) {
            ++bad;
            continue;
        }
        const auto hs = homogeneity(b, a);
        bad += !(*h >= 0.0 && *h <= 1.0) || *hs != *h || ((*h == 0.0) != (a == b)) ||
               ((*h == 1.0) != (a == 0 || b == 0));
    }
    const double h128 = *homogeneity(12, 8);
    return {bad == 0 && h128 == 0.2, fmt::format("{} violations in 10000 pairs; H(12,8)={:.17g}", bad, h128)};
}

Outcome bias_properties() {
    std::mt19937_64 rng(7);
    double worst_ratio = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<BeliefEvent> ev;
        for (int i = 0; i < 500; ++i) {
            ev.push_back({fmt::format("u{}", i % 20), 0, static_cast<int>(rng() % 12),
                          i % 20 < 9 ? Community::A : Community::B, false});
        }
        const int scale = 2 + static_cast<int>(rng() % 5);
        std::vector<BeliefEvent> scaled;
        for (int s = 0; s < scale; ++s) scaled.insert(scaled.end(), ev.begin(), ev.end());
        const auto a = belief_bias(bin_weekly(ev, 0, 12));
        const auto b = belief_bias(bin_weekly(scaled, 0, 12));
        for (std::size_t i = 0; i < a.beliefs.size(); ++i) {
            worst_ratio = std::max(worst_ratio, std::abs(a.beliefs[i].bias - b.beliefs[i].bias));
        }
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    BiasTable table;
    for (int b = 0; b < 16; ++b) table.beliefs.push_back({b, 0.0, 0.0, u(rng)});
    std::size_t violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> f(16, 0.0);
        double sum = 0.0;
        for (auto& x : f) {
            x = rng() % 2 ? u(rng) : 0.0;
            sum += x;
        }
        if (sum == 0.0) f[0] = sum = 1.0;
        double lo = 1.0, hi = 0.0;
        for (int b = 0; b < 16; ++b) {
            f[static_cast<std::size_t>(b)] /= sum;
            if (f[static_cast<std::size_t>(b)] > 0) {
                lo = std::min(lo, table.beliefs[static_cast<std::size_t>(b)].bias);
                hi = std::max(hi, table.beliefs[static_cast<std::size_t>(b)].bias);
            }
        }
        std::vector<AttractorProfile> p{{0, f}};
        const double got = attractor_bias(p, table)[0].bias;
        violations += got < lo - 1e-12 || got > hi + 1e-12;
    }
    return {worst_ratio <= 1e-12 && violations == 0,
            fmt::format("max bias change under scaling {:.3g}; convexity violations {}/1000", worst_ratio, violations)};
}

Outcome landscape_recovery() {
    synth::Rng rng(11);
    const double centers[3][2] = {{0, 0}, {5, 0}, {2.5, 5}};
    std::vector<EmbeddedPoint> pts;
    for (int b = 0; b < 3; ++b) {
        for (int i = 0; i < 150; ++i) {
            pts.push_back({fmt::format("b{}_{:04d}", b, i), 0, centers[b][0] + 0.1 * rng.normal(),
                           centers[b][1] + 0.1 * rng.normal()});
        }
    }
    ClusterConfig cfg;
    cfg.k = 3;
    const auto set = density_peak_cluster(pts, cfg);
    std::vector<int> truth;
    for (const auto& p : set.points) truth.push_back(p.user[1] - '0');
    const double blob_ari = adjusted_rand_index(set.labels, truth);

    synth::ScenarioConfig sc;
    sc.seed = 8;
    sc.weeks = 15;
    sc.n_beliefs = 30;
    sc.users = {80, 80};
    sc.events_per_user_week = 3.0;
    sc.attractors.push_back({{0, 0}, 0.1, {{0, 0.5}, {1, 0.3}, {2, 0.2}}, {0.4, 0.2}});
    sc.attractors.push_back({{0, 0}, 0.1, {{10, 0.4}, {11, 0.4}, {12, 0.2}}, {0.3, 0.3}});
    sc.attractors.push_back({{0, 0}, 0.1, {{20, 0.6}, {21, 0.2}, {22, 0.2}}, {0.3, 0.5}});
    const auto stream = synth::generate_stream(sc);
    const auto counts = bin_weekly(stream.events, stream.header.epoch, sc.n_beliefs, sc.weeks);
    const auto model = build_landscape_model(counts, SmoothingParams::from_half_life(5), cfg, nullptr);
    std::vector<int> got, want;
    for (const auto& [key, label] : model.assignments.entries()) {
        got.push_back(label);
        want.push_back(*stream.truth.label(key.user, key.week));
    }
    const double mix_ari = adjusted_rand_index(got, want);
    return {blob_ari >= 0.99 && mix_ari >= 0.9,
            fmt::format("3-blob ARI={:.4f}; projected planted mixtures ARI={:.4f} over {} user-weeks", blob_ari,
                        mix_ari, got.size())};
}

Outcome ari_correctness() {
    std::mt19937_64 rng(99);
    std::vector<int> a(300), perm{2, 0, 1};
    for (auto& x : a) x = static_cast<int>(rng() % 3);
    std::vector<int> b;
    for (int x : a) b.push_back(perm[static_cast<std::size_t>(x)] + 10);
    const double permuted = adjusted_rand_index(a, b);

    std::vector<int> p(100), q(100);
    for (int i = 0; i < 100; ++i) p[i] = q[i] = i < 50 ? 0 : 1;
    q[7] = 1;
    const double diff = std::abs(adjusted_rand_index(p, q) - oracle::ari_pairs(p, q));

    std::vector<int> x(1000), y(1000);
    for (int i = 0; i < 1000; ++i) {
        x[i] = static_cast<int>(rng() % 3);
        y[i] = static_cast<int>(rng() % 3);
    }
    const double indep = adjusted_rand_index(x, y);
    return {permuted == 1.0 && diff <= 1e-12 && std::abs(indep) < 0.05,
            fmt::format("permuted={:.17g}; |ARI - pair oracle|={:.3g}; independent ARI={:.4f}", permuted, diff, indep)};
}

synth::ScenarioConfig h1_scenario() {
    // Attractor 2 is shared by both communities; the rest are single-community.
    synth::ScenarioConfig cfg;
    cfg.seed = 1234;
    cfg.weeks = 30;
    cfg.n_beliefs = 25;
    cfg.names = {"BLM", "KPOP"};
    cfg.users = {120, 120};
    cfg.events_per_user_week = 4.0;
    cfg.attractors.push_back({{0, 0}, 0.3, disjoint_mixture(0, 5), {0.35, 0.0}});
    cfg.attractors.push_back({{10, 0}, 0.3, disjoint_mixture(5, 5), {0.0, 0.35}});
    cfg.attractors.push_back({{5, 5}, 0.3, disjoint_mixture(10, 5), {0.30, 0.30}});
    cfg.attractors.push_back({{0, 10}, 0.3, disjoint_mixture(15, 5), {0.35, 0.0}});
    cfg.attractors.push_back({{10, 10}, 0.3, disjoint_mixture(20, 5), {0.0, 0.35}});
    cfg.planted.push_back({2, 20, Community::A, 3.0});
    cfg.planted.push_back({2, 20, Community::B, 3.0});
    return cfg;
}

Outcome h1_rehearsal() {
    const auto dir = scratch("h1");
    const auto cfg = h1_scenario();
    write_json(dir / "scenario.json", cfg.to_json());
    cli({"synth", "--scenario", (dir / "scenario.json").string(), "--out", (dir / "data").string()});
    const auto truth = synth::generate_stream(cfg).truth;
    cli({"h1", "--events", (dir / "data" / "events.jsonl").string(), "--embedding",
         (dir / "data" / "embedding.csv").string(), "--k", "5", "--up-to-week", "20", "--out", (dir / "h1").string()});
    cli({"landscape", "--events", (dir / "data" / "events.jsonl").string(), "--embedding",
         (dir / "data" / "embedding.csv").string(), "--k", "5", "--out", (dir / "landscape").string()});
    const auto mapping = map_to_truth(dir / "landscape" / "assignments.csv", truth);
    const int mixed = cluster_of(mapping, 2);
    const auto ranking = read_csv(dir / "h1" / "homogeneity_ranking.csv");
    const auto coordinated = read_csv(dir / "h1" / "coordinated_spikes.csv");
    const int first = ranking.empty() ? -1 : std::stoi(ranking[0][1]);
    std::string listed;
    for (const auto& row : coordinated) listed += (listed.empty() ? "" : " ") + row[0];
    const bool ok = mixed >= 0 && first == mixed && coordinated.size() == 1 && std::stoi(coordinated[0][0]) == mixed;
    return {ok, fmt::format("mixed attractor is cluster {}; ranking first={} (mean H={}); coordinated=[{}]", mixed,
                            first, ranking.empty() ? "-" : ranking[0][2], listed)};
}

synth::ScenarioConfig sweep_scenario() {
    synth::ScenarioConfig cfg;
    cfg.seed = 77;
    cfg.weeks = 30;
    cfg.n_beliefs = 30;
    cfg.users = {90, 90};
    cfg.events_per_user_week = 4.0;
    cfg.attractors.push_back({{0, 0}, 0.3, disjoint_mixture(0, 6), {0.4, 0.3}});
    cfg.attractors.push_back({{10, 0}, 0.3, disjoint_mixture(10, 6), {0.3, 0.4}});
    cfg.attractors.push_back({{5, 8}, 0.3, disjoint_mixture(20, 6), {0.3, 0.3}});
    cfg.planted.push_back({1, 21, Community::A, 3.0});
    cfg.planted.push_back({1, 21, Community::B, 3.0});
    return cfg;
}

Outcome sensitivity_rehearsal() {
    const auto dir = scratch("sweep");
    const auto cfg = sweep_scenario();
    write_json(dir / "scenario.json", cfg.to_json());
    cli({"synth", "--scenario", (dir / "scenario.json").string(), "--out", (dir / "data").string()});
    const auto truth = synth::generate_stream(cfg).truth;
    const auto events = (dir / "data" / "events.jsonl").string();
    cli({"sensitivity", "--events", events, "--k", "3", "--half-lives", "4,5,6,7,8", "--reference", "5", "--window",
         "20..23", "--threads", "2", "--out", (dir / "sweep").string()});
    cli({"landscape", "--events", events, "--k", "3", "--half-life", "5", "--out", (dir / "ref").string()});
    const int planted = cluster_of(map_to_truth(dir / "ref" / "assignments.csv", truth), 1);

    double min_ari = 1.0;
    const auto ari = read_csv(dir / "sweep" / "ari_matrix.csv");
    for (const auto& row : ari) {
        for (std::size_t j = 1; j < row.size(); ++j) min_ari = std::min(min_ari, std::stod(row[j]));
    }
    int rows = 0, spiking = 0;
    std::string jac;
    for (const auto& row : read_csv(dir / "sweep" / "jaccard_matches.csv")) {
        if (std::stoi(row[1]) != planted) continue;
        ++rows;
        spiking += row[4] == "1";
        jac += fmt::format(" h={}:J={}", row[0], row[3]);
    }
    return {ari.size() == 5 && min_ari >= 0.9 && rows == 4 && spiking == 4,
            fmt::format("min pairwise ARI={:.4f}; planted attractor (ref cluster {}) matched in {} models, spiking in "
                        "{};{}",
                        min_ari, planted, rows, spiking, jac)};
}

Outcome determinism() {
    const auto dir = scratch("determinism");
    auto cfg = h1_scenario();
    cfg.weeks = 26;
    cfg.users = {60, 60};
    cfg.amplifiers = synth::AmplifierCohort{30, Community::B, {{2, {{1, 1.0}}}, {20, {{2, 0.6}, {4, 0.4}}}}};
    write_json(dir / "scenario.json", cfg.to_json());
    const auto data = dir / "data";
    cli({"synth", "--scenario", (dir / "scenario.json").string(), "--out", data.string()});
    const auto events = (data / "events.jsonl").string();
    const auto embedding = (data / "embedding.csv").string();

    const std::vector<std::vector<std::string>> commands{
        {"validate", "--events", events},
        {"vectors", "--events", events},
        {"landscape", "--events", events, "--k", "5"},
        {"measures", "--events", events, "--embedding", embedding, "--k", "5"},
        {"events", "--events", events, "--embedding", embedding, "--k", "5"},
        {"h1", "--events", events, "--embedding", embedding, "--k", "5"},
        {"h2", "--events", events, "--embedding", embedding, "--k", "5", "--amplifiers", (data / "amplifiers.txt").string()},
        {"rq2", "--events", events, "--embedding", embedding, "--k", "5", "--periods", "pre=0..19,event=20..23,post=24.."},
        {"sensitivity", "--events", events, "--k", "5", "--half-lives", "4,5,6"},
        {"synth", "--scenario", (dir / "scenario.json").string()},
    };
    std::size_t files = 0;
    std::vector<std::string> mismatched;
    for (const auto& base : commands) {
        std::vector<fs::path> outs;
        int run_id = 0;
        for (const char* threads : {"1", "3", "3"}) {
            auto args = base;
            const auto out = dir / fmt::format("{}_{}", base[0], run_id++);
            args.insert(args.end(), {"--threads", threads, "--out", out.string()});
            cli(args);
            outs.push_back(out);
        }
        for (const auto& entry : fs::recursive_directory_iterator(outs[0])) {
            if (!entry.is_regular_file()) continue;
            const auto rel = fs::relative(entry.path(), outs[0]);
            const auto ref = slurp(entry.path());
            ++files;
            for (std::size_t i = 1; i < outs.size(); ++i) {
                if (!fs::exists(outs[i] / rel) || slurp(outs[i] / rel) != ref) {
                    mismatched.push_back(base[0] + "/" + rel.string());
                }
            }
        }
    }
    std::string listed;
    for (const auto& m : mismatched) listed += " " + m;
    return {mismatched.empty() && files > 0,
            fmt::format("{} subcommands x 3 runs (threads 1, 3, 3), {} files compared, {} mismatches{}",
                        commands.size(), files, mismatched.size(), listed)};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"fisher_ci_reproduction", fisher_ci},
        {"half_life_constant", half_life_constant},
        {"ewma_oracle_equivalence", ewma_oracle},
        {"spike_oracle_equivalence", spike_oracle},
        {"planted_spike_detection", planted_spike},
        {"homogeneity_properties", homogeneity_properties},
        {"bias_properties", bias_properties},
        {"landscape_recovery", landscape_recovery},
        {"ari_correctness", ari_correctness},
        {"h1_rehearsal", h1_rehearsal},
        {"sensitivity_rehearsal", sensitivity_rehearsal},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::cout << fmt::format("{} {:2d} {} ({:.2f}s): {}", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, secs,
                                 o.detail)
                  << std::endl;
    }
    std::cout << fmt::format("{} of {} criteria passed", criteria.size() - static_cast<std::size_t>(failed),
                             criteria.size())
              << std::endl;
    return failed == 0 ? 0 : 1;
}
