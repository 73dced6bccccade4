#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bld/comparative.hpp"
#include "bld/landscape.hpp"
#include "bld/synth.hpp"
#include "oracles.hpp"

using namespace bld;

namespace {

std::vector<EmbeddedPoint> blobs(std::uint64_t seed, int per_blob, std::vector<int>& truth) {
    const double centers[3][2] = {{0, 0}, {6, 0}, {3, 6}};
    synth::Rng rng(seed);
    std::vector<EmbeddedPoint> pts;
    truth.clear();
    for (int b = 0; b < 3; ++b) {
        for (int i = 0; i < per_blob; ++i) {
            const std::string id = "b" + std::to_string(b) + "_" + std::to_string(1000 + i);
            pts.push_back({id, 0, centers[b][0] + 0.1 * rng.normal(), centers[b][1] + 0.1 * rng.normal()});
        }
    }
    canonicalize(pts);
    for (const auto& p : pts) truth.push_back(p.user[1] - '0');
    return pts;
}

} // namespace

TEST_CASE("embedding load, duplicates and round-trip") {
    std::istringstream in("user,week,x,y\nu1,0,0.5,1\nu1,1,0.25,-3\nu2,0,1e-3,7\n");
    auto pts = parse_embedding(in);
    CHECK(pts.size() == 3);
    std::istringstream dup("user,week,x,y\nu1,0,0.5,1\nu1,0,0.25,-3\n");
    CHECK_THROWS_AS(parse_embedding(dup), InputError);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-1e3, 1e3);
    for (auto& p : pts) {
        p.x = d(rng) / 3.0;
        p.y = std::nextafter(d(rng), 0.0);
    }
    std::stringstream buf;
    save_embedding(buf, pts);
    const auto back = parse_embedding(buf);
    CHECK(back == pts);
}

TEST_CASE("fallback projection rejects identical vectors") {
    std::vector<BeliefEvent> ev{{"a", 0, 1, Community::A, false}, {"b", 0, 1, Community::B, false}};
    const auto counts = bin_weekly(ev, 0, 3, 3);
    const auto s = build_belief_vectors(counts, SmoothingParams::from_half_life(5));
    CHECK_THROWS_WITH_AS(fallback_project(s), doctest::Contains("degenerate projection"), InputError);
}

TEST_CASE("fallback projection separates two orthogonal populations") {
    std::vector<BeliefEvent> ev;
    for (int u = 0; u < 10; ++u) {
        const bool first = u < 5;
        ev.push_back({"u" + std::to_string(u), 0, first ? 0 : 1, first ? Community::A : Community::B, false});
    }
    const auto counts = bin_weekly(ev, 0, 2, 2);
    const auto s = build_belief_vectors(counts, SmoothingParams::from_half_life(5));
    const auto pts = fallback_project(s);
    REQUIRE(pts.size() == 20);
    std::vector<std::array<double, 2>> group[2];
    for (const auto& p : pts) group[p.user < "u5" ? 0 : 1].push_back({p.x, p.y});
    for (const auto& g : group) {
        for (const auto& q : g) {
            CHECK(q[0] == doctest::Approx(g[0][0]).epsilon(1e-12));
            CHECK(q[1] == doctest::Approx(g[0][1]).epsilon(1e-12));
        }
    }
    CHECK(std::hypot(group[0][0][0] - group[1][0][0], group[0][0][1] - group[1][0][1]) > 0.1);
    CHECK(fallback_project(s) == pts);
}

TEST_CASE("three separated blobs are recovered") {
    std::vector<int> truth;
    const auto pts = blobs(17, 60, truth);
    ClusterConfig cfg;
    cfg.k = 3;
    const auto set = density_peak_cluster(pts, cfg);
    CHECK(oracle::ari_pairs(set.labels, truth) >= 0.99);
    CHECK(adjusted_rand_index(set.labels, truth) >= 0.99);
    const auto counts = set.member_counts();
    CHECK(counts.size() == 3);
    for (auto c : counts) CHECK(c == 60);
}

TEST_CASE("every chain ends at a peak and peaks are local maxima") {
    std::vector<int> truth;
    const auto pts = blobs(23, 30, truth);
    ClusterConfig cfg;
    cfg.k = 3;
    const auto set = density_peak_cluster(pts, cfg);
    for (std::size_t i = 0; i < set.points.size(); ++i) {
        std::size_t cur = i;
        std::size_t steps = 0;
        while (std::find(set.peak_points.begin(), set.peak_points.end(), cur) == set.peak_points.end()) {
            REQUIRE(set.parent[cur] >= 0);
            CHECK(set.density[static_cast<std::size_t>(set.parent[cur])] >= set.density[cur]);
            cur = static_cast<std::size_t>(set.parent[cur]);
            REQUIRE(++steps <= set.points.size());
        }
        CHECK(set.labels[i] == set.labels[cur]);
    }
    for (auto p : set.peak_points) {
        for (std::size_t j = 0; j < set.points.size(); ++j) {
            const double d = std::hypot(set.points[p].x - set.points[j].x, set.points[p].y - set.points[j].y);
            if (j != p && d < set.bandwidth) CHECK(set.density[p] >= set.density[j]);
        }
    }
}

TEST_CASE("single blob with k = 1") {
    std::vector<int> truth;
    auto pts = blobs(5, 40, truth);
    pts.resize(40);
    ClusterConfig cfg;
    cfg.k = 1;
    const auto set = density_peak_cluster(pts, cfg);
    CHECK(std::all_of(set.labels.begin(), set.labels.end(), [](int l) { return l == 0; }));
}

TEST_CASE("uniform grid peak is the brute-force density maximum") {
    std::vector<EmbeddedPoint> pts;
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) pts.push_back({"g" + std::to_string(i) + std::to_string(j), 0, i * 1.0, j * 1.0});
    }
    ClusterConfig cfg;
    cfg.k = 1;
    cfg.bandwidth = 1.5;
    const auto set = density_peak_cluster(pts, cfg);
    std::size_t best = 0;
    double best_rho = -1.0;
    for (std::size_t i = 0; i < set.points.size(); ++i) {
        double rho = 0.0;
        for (std::size_t j = 0; j < set.points.size(); ++j) {
            if (i == j) continue;
            const double d2 = std::pow(set.points[i].x - set.points[j].x, 2) + std::pow(set.points[i].y - set.points[j].y, 2);
            rho += std::exp(-d2 / (2 * 1.5 * 1.5));
        }
        if (rho > best_rho + 1e-12) {
            best_rho = rho;
            best = i;
        }
    }
    CHECK(set.peak_points[0] == best);
    CHECK(set.points[best].x == 3.0);
    CHECK(set.points[best].y == 3.0);
    CHECK(std::all_of(set.labels.begin(), set.labels.end(), [](int l) { return l == 0; }));
}

TEST_CASE("clustering errors") {
    std::vector<EmbeddedPoint> pts{{"a", 0, 0, 0}, {"b", 0, 1, 1}};
    ClusterConfig cfg;
    cfg.k = 3;
    CHECK_THROWS_AS(density_peak_cluster(pts, cfg), InputError);
    cfg.k = 1;
    cfg.bandwidth = 0.0;
    CHECK_THROWS_AS(density_peak_cluster(pts, cfg), InputError);
}

TEST_CASE("shuffled input order changes nothing") {
    std::vector<int> truth;
    auto pts = blobs(31, 25, truth);
    ClusterConfig cfg;
    cfg.k = 3;
    const auto a = density_peak_cluster(pts, cfg);
    std::mt19937_64 rng(4);
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto b = density_peak_cluster(pts, cfg);
    CHECK(a.labels == b.labels);
    CHECK(adjusted_rand_index(a.labels, b.labels) == 1.0);
}

TEST_CASE("weekly assignment") {
    std::vector<int> truth;
    const auto pts = blobs(41, 20, truth);
    ClusterConfig cfg;
    cfg.k = 3;
    const auto set = density_peak_cluster(pts, cfg);
    const auto table = assign_weekly(pts, set);
    for (std::size_t i = 0; i < set.points.size(); ++i) {
        CHECK(*table.at(set.points[i].user, 0) == set.labels[i]);
    }
    const auto peak0 = set.peak(0);
    std::vector<EmbeddedPoint> probe{{"new", 5, peak0[0], peak0[1]}};
    CHECK(*assign_weekly(probe, set).at("new", 5) == 0);

    std::vector<EmbeddedPoint> two{{"a", 0, 0, 0}, {"b", 0, 10, 0}};
    cfg.k = 2;
    cfg.bandwidth = 1.0;
    const auto pair = density_peak_cluster(two, cfg);
    std::vector<EmbeddedPoint> mid{{"m", 0, 5, 0}};
    CHECK(*assign_weekly(mid, pair).at("m", 0) == 0);
}

TEST_CASE("attractor profiles") {
    std::vector<BeliefEvent> ev{{"u", 0, 0, Community::A, false}, {"u", 1, 0, Community::A, false},
                                {"u", 2, 0, Community::A, false}, {"u", 3, 1, Community::A, false}};
    const auto counts = bin_weekly(ev, 0, 2);
    AssignmentTable table(1, {{{"u", 0}, 0}});
    const auto profiles = attractor_profiles(table, counts);
    REQUIRE(profiles.profiles.size() == 1);
    CHECK(profiles.profiles[0].belief_frequency[0] == doctest::Approx(0.75));
    CHECK(profiles.profiles[0].belief_frequency[1] == doctest::Approx(0.25));

    AssignmentTable two(3, {{{"u", 0}, 2}});
    const auto flagged = attractor_profiles(two, counts);
    CHECK(flagged.empty_attractors == std::vector<int>{0, 1});
}

TEST_CASE("planted belief mixtures survive the fallback projection") {
    synth::ScenarioConfig cfg;
    cfg.seed = 99;
    cfg.weeks = 12;
    cfg.n_beliefs = 12;
    cfg.users = {60, 60};
    cfg.events_per_user_week = 4;
    cfg.attractors.push_back({{0, 0}, 0.1, {{0, 0.6}, {1, 0.3}, {2, 0.1}}, {0.5, 0.2}});
    cfg.attractors.push_back({{5, 0}, 0.1, {{4, 0.5}, {5, 0.5}}, {0.3, 0.3}});
    cfg.attractors.push_back({{0, 5}, 0.1, {{8, 0.2}, {9, 0.8}}, {0.2, 0.5}});
    const auto stream = synth::generate_stream(cfg);
    const auto counts = bin_weekly(stream.events, stream.header.epoch, cfg.n_beliefs, cfg.weeks);
    ClusterConfig cluster;
    cluster.k = 3;
    const auto model = build_landscape_model(counts, SmoothingParams::from_half_life(5), cluster, nullptr);
    CHECK(model.projected);
    std::vector<int> got, want;
    for (const auto& [key, label] : model.assignments.entries()) {
        got.push_back(label);
        want.push_back(*stream.truth.label(key.user, key.week));
    }
    CHECK(adjusted_rand_index(got, want) >= 0.9);

    // Profiles from the planted labels reproduce the planted mixtures.
    std::map<UserWeek, int> planted;
    for (const auto& [key, label] : model.assignments.entries()) planted[key] = *stream.truth.label(key.user, key.week);
    const auto profiles = attractor_profiles(AssignmentTable(3, planted), counts);
    for (const auto& p : profiles.profiles) {
        double tv = 0.0;
        for (std::size_t b = 0; b < p.belief_frequency.size(); ++b) {
            tv += std::abs(p.belief_frequency[b] - stream.truth.mixtures[static_cast<std::size_t>(p.attractor)][b]);
        }
        CHECK(tv / 2 < 0.05);
    }
}
