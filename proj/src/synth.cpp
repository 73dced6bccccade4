#include "bld/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <fmt/format.h>

namespace bld::synth {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint32_t Rng::poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) throw InputError("poisson mean must be finite and non-negative");
    if (mean == 0.0) return 0;
    const int pieces = static_cast<int>(std::ceil(mean / 64.0));
    const double m = mean / pieces;
    std::uint32_t total = 0;
    for (int i = 0; i < pieces; ++i) {
        double p = std::exp(-m);
        double cdf = p;
        const double u = uniform();
        std::uint32_t k = 0;
        while (u > cdf && k < 100000) {
            ++k;
            p *= m / k;
            cdf += p;
        }
        total += k;
    }
    return total;
}

std::uint64_t Rng::below(std::uint64_t n) {
    return std::min(n - 1, static_cast<std::uint64_t>(uniform() * static_cast<double>(n)));
}

namespace {

Community parse_population(const nlohmann::json& j) {
    const auto s = j.get<std::string>();
    if (s == "A") return Community::A;
    if (s == "B") return Community::B;
    throw InputError("population must be \"A\" or \"B\", got " + s);
}

const char* token(Community c) { return c == Community::A ? "A" : "B"; }

std::map<int, double> parse_weights(const nlohmann::json& j) {
    std::map<int, double> out;
    for (const auto& [key, value] : j.items()) {
        try {
            out[std::stoi(key)] = value.get<double>();
        } catch (const std::invalid_argument&) {
            throw InputError("weight keys must be integers, got " + key);
        }
    }
    return out;
}

nlohmann::json weights_json(const std::map<int, double>& w) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : w) out[std::to_string(k)] = v;
    return out;
}

void check_weights(const std::map<int, double>& w, int limit, const std::string& what) {
    if (w.empty()) throw InputError(what + " is empty");
    double sum = 0.0;
    for (const auto& [k, v] : w) {
        if (k < 0 || k >= limit) throw InputError(what + " refers to " + std::to_string(k) + ", out of range");
        if (!(v >= 0.0) || !std::isfinite(v)) throw InputError(what + " has a negative or non-finite weight");
        sum += v;
    }
    if (!(sum > 0.0)) throw InputError(what + " has zero total weight");
}

std::vector<std::pair<int, double>> normalized(const std::map<int, double>& w) {
    double sum = 0.0;
    for (const auto& [k, v] : w) sum += v;
    std::vector<std::pair<int, double>> out;
    for (const auto& [k, v] : w) out.emplace_back(k, v / sum);
    return out;
}

/// Largest-remainder split of n items by fractions (ties -> lower index).
std::vector<int> quotas(const std::vector<double>& fractions, int n) {
    double sum = 0.0;
    for (double f : fractions) sum += f;
    std::vector<int> out(fractions.size(), 0);
    if (n == 0 || sum <= 0.0) return out;
    std::vector<std::pair<double, std::size_t>> rem;
    int assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double exact = fractions[i] / sum * n;
        out[i] = static_cast<int>(std::floor(exact));
        assigned += out[i];
        rem.emplace_back(exact - out[i], i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++out[rem[i % rem.size()].second];
    return out;
}

std::vector<int> block_labels(const std::vector<int>& counts) {
    std::vector<int> out;
    for (std::size_t a = 0; a < counts.size(); ++a) out.insert(out.end(), counts[a], static_cast<int>(a));
    return out;
}

int draw_belief(Rng& rng, const std::vector<std::pair<int, double>>& mixture) {
    const double u = rng.uniform();
    double cdf = 0.0;
    for (const auto& [b, w] : mixture) {
        cdf += w;
        if (u < cdf) return b;
    }
    return mixture.back().first;
}

} // namespace

void ScenarioConfig::validate() const {
    if (weeks < 1) throw InputError("scenario needs at least one week");
    if (n_beliefs < 1) throw InputError("scenario needs at least one belief cluster");
    if (!(events_per_user_week > 0.0) || !std::isfinite(events_per_user_week)) {
        throw InputError("events_per_user_week must be positive");
    }
    if (names[0].empty() || names[1].empty() || names[0] == names[1]) {
        throw InputError("community names must be nonempty and distinct");
    }
    if (attractors.empty()) throw InputError("scenario has no attractors");
    const int k = static_cast<int>(attractors.size());
    std::array<double, kCommunities> share_sum{};
    for (int a = 0; a < k; ++a) {
        const auto& bp = attractors[static_cast<std::size_t>(a)];
        const auto what = "attractor " + std::to_string(a);
        if (!(bp.spread >= 0.0) || !std::isfinite(bp.center[0]) || !std::isfinite(bp.center[1])) {
            throw InputError(what + " has a bad center or spread");
        }
        check_weights(bp.mixture, n_beliefs, what + " mixture");
        for (std::size_t c = 0; c < kCommunities; ++c) {
            if (!(bp.share[c] >= 0.0)) throw InputError(what + " has a negative share");
            share_sum[c] += bp.share[c];
        }
    }
    for (std::size_t c = 0; c < kCommunities; ++c) {
        if (users[c] < 0) throw InputError("user counts must be non-negative");
        if (users[c] > 0 && std::abs(share_sum[c] - 1.0) > 1e-6) {
            throw InputError(std::string("attractor shares for community ") + token(static_cast<Community>(c)) +
                             " must sum to 1");
        }
    }
    for (const auto& p : planted) {
        if (p.attractor < 0 || p.attractor >= k) throw InputError("planted event refers to an unknown attractor");
        if (p.week < 0 || p.week >= weeks) throw InputError("planted event week is outside the scenario");
        if (!(p.multiplier > 0.0)) throw InputError("multipliers must be positive");
    }
    for (const auto& s : rate_shifts) {
        if (s.attractor < 0 || s.attractor >= k) throw InputError("rate shift refers to an unknown attractor");
        if (s.weeks.first < 0 || s.weeks.first >= weeks || (!s.weeks.open_ended() && s.weeks.last < s.weeks.first)) {
            throw InputError("rate shift weeks are outside the scenario");
        }
        if (!(s.multiplier > 0.0)) throw InputError("multipliers must be positive");
    }
    if (amplifiers) {
        if (amplifiers->size < 0) throw InputError("amplifier cohort size must be non-negative");
        if (amplifiers->size > 0 && amplifiers->schedule.empty()) throw InputError("amplifier schedule is empty");
        int prev = -1;
        for (const auto& phase : amplifiers->schedule) {
            if (phase.from_week <= prev || phase.from_week >= weeks) {
                throw InputError("amplifier schedule must ascend within the scenario weeks");
            }
            prev = phase.from_week;
            check_weights(phase.allocation, k, "amplifier allocation");
        }
    }
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
    try {
        ScenarioConfig cfg;
        cfg.seed = j.value("seed", cfg.seed);
        cfg.weeks = j.value("weeks", cfg.weeks);
        cfg.n_beliefs = j.value("B", cfg.n_beliefs);
        cfg.epoch = j.value("epoch", cfg.epoch);
        cfg.events_per_user_week = j.value("events_per_user_week", cfg.events_per_user_week);
        if (j.contains("communities")) {
            cfg.names[0] = j.at("communities").at("A").get<std::string>();
            cfg.names[1] = j.at("communities").at("B").get<std::string>();
        }
        if (j.contains("users")) {
            cfg.users[0] = j.at("users").value("A", 0);
            cfg.users[1] = j.at("users").value("B", 0);
        }
        for (const auto& a : j.at("attractors")) {
            AttractorBlueprint bp;
            bp.center = {a.at("center").at(0).get<double>(), a.at("center").at(1).get<double>()};
            bp.spread = a.value("spread", bp.spread);
            bp.mixture = parse_weights(a.at("mixture"));
            bp.share = {a.at("share").value("A", 0.0), a.at("share").value("B", 0.0)};
            cfg.attractors.push_back(std::move(bp));
        }
        for (const auto& p : j.value("planted", nlohmann::json::array())) {
            cfg.planted.push_back({p.at("attractor").get<int>(), p.at("week").get<int>(),
                                   parse_population(p.at("population")), p.at("multiplier").get<double>()});
        }
        for (const auto& s : j.value("rate_shifts", nlohmann::json::array())) {
            cfg.rate_shifts.push_back({s.at("attractor").get<int>(), parse_population(s.at("population")),
                                       {s.at("from_week").get<int>(), s.value("to_week", -1)},
                                       s.at("multiplier").get<double>()});
        }
        if (j.contains("amplifiers")) {
            const auto& a = j.at("amplifiers");
            AmplifierCohort cohort;
            cohort.size = a.at("size").get<int>();
            cohort.community = parse_population(a.at("community"));
            for (const auto& phase : a.at("schedule")) {
                cohort.schedule.push_back({phase.at("from_week").get<int>(), parse_weights(phase.at("allocation"))});
            }
            cfg.amplifiers = std::move(cohort);
        }
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad scenario: ") + e.what());
    }
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario file: " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string("bad scenario JSON: ") + e.what());
    }
}

nlohmann::json ScenarioConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["weeks"] = weeks;
    j["B"] = n_beliefs;
    j["epoch"] = epoch;
    j["communities"] = {{"A", names[0]}, {"B", names[1]}};
    j["users"] = {{"A", users[0]}, {"B", users[1]}};
    j["events_per_user_week"] = events_per_user_week;
    j["attractors"] = nlohmann::json::array();
    for (const auto& bp : attractors) {
        j["attractors"].push_back({{"center", {bp.center[0], bp.center[1]}},
                                   {"spread", bp.spread},
                                   {"mixture", weights_json(bp.mixture)},
                                   {"share", {{"A", bp.share[0]}, {"B", bp.share[1]}}}});
    }
    j["planted"] = nlohmann::json::array();
    for (const auto& p : planted) {
        j["planted"].push_back({{"attractor", p.attractor},
                                {"week", p.week},
                                {"population", token(p.population)},
                                {"multiplier", p.multiplier}});
    }
    j["rate_shifts"] = nlohmann::json::array();
    for (const auto& s : rate_shifts) {
        nlohmann::json row{{"attractor", s.attractor},
                           {"population", token(s.population)},
                           {"from_week", s.weeks.first},
                           {"multiplier", s.multiplier}};
        if (!s.weeks.open_ended()) row["to_week"] = s.weeks.last;
        j["rate_shifts"].push_back(row);
    }
    if (amplifiers) {
        nlohmann::json schedule = nlohmann::json::array();
        for (const auto& phase : amplifiers->schedule) {
            schedule.push_back({{"from_week", phase.from_week}, {"allocation", weights_json(phase.allocation)}});
        }
        j["amplifiers"] = {{"size", amplifiers->size},
                           {"community", token(amplifiers->community)},
                           {"schedule", schedule}};
    }
    return j;
}

std::optional<int> GroundTruth::label(const std::string& user, int week) const {
    auto amp = amplifier_weeks.find(user);
    if (amp != amplifier_weeks.end()) {
        auto it = amp->second.upper_bound(week);
        if (it == amp->second.begin()) return std::nullopt;
        return std::prev(it)->second;
    }
    for (const auto& u : users) {
        if (u.id == user) return u.home;
    }
    return std::nullopt;
}

double GroundTruth::expected_proportion(Community c, int week, int attractor) const {
    const auto& e = expected[index_of(c)];
    double total = 0.0;
    for (int a = 0; a < k; ++a) total += e[static_cast<std::size_t>(week * k + a)];
    return total > 0.0 ? e[static_cast<std::size_t>(week * k + attractor)] / total : 0.0;
}

nlohmann::json GroundTruth::to_json() const {
    nlohmann::json j;
    j["n_events"] = n_events;
    j["community_totals"] = {{"A", community_totals[0]}, {"B", community_totals[1]}};
    j["k"] = k;
    j["weeks"] = weeks;
    j["users"] = nlohmann::json::array();
    for (const auto& u : users) {
        j["users"].push_back({{"id", u.id},
                              {"community", token(u.community)},
                              {"amplifier", u.amplifier},
                              {"home", u.home}});
    }
    j["amplifier_weeks"] = nlohmann::json::object();
    for (const auto& [id, weeks_map] : amplifier_weeks) {
        nlohmann::json w = nlohmann::json::object();
        for (const auto& [week, a] : weeks_map) w[std::to_string(week)] = a;
        j["amplifier_weeks"][id] = w;
    }
    j["spikes"] = nlohmann::json::array();
    for (const auto& p : spikes) {
        j["spikes"].push_back({{"attractor", p.attractor},
                               {"week", p.week},
                               {"population", token(p.population)},
                               {"multiplier", p.multiplier}});
    }
    j["mixtures"] = mixtures;
    j["cells"] = nlohmann::json::array();
    for (int a = 0; a < k; ++a) {
        for (int w = 0; w < weeks; ++w) {
            for (std::size_t c = 0; c < kCommunities; ++c) {
                const auto i = static_cast<std::size_t>(w * k + a);
                j["cells"].push_back({{"attractor", a},
                                      {"week", w},
                                      {"population", token(static_cast<Community>(c))},
                                      {"expected", expected[c][i]},
                                      {"proportion", expected_proportion(static_cast<Community>(c), w, a)},
                                      {"emitted", emitted[c][i]}});
            }
        }
    }
    j["amplifier_events"] = nlohmann::json::object();
    for (const auto& [week, per] : amplifier_events) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [a, n] : per) row[std::to_string(a)] = n;
        j["amplifier_events"][std::to_string(week)] = row;
    }
    return j;
}

SyntheticStream generate_stream(const ScenarioConfig& cfg) {
    cfg.validate();
    const int k = static_cast<int>(cfg.attractors.size());
    const int weeks = cfg.weeks;
    const auto cells = static_cast<std::size_t>(k) * static_cast<std::size_t>(weeks);
    Rng rng(cfg.seed);

    SyntheticStream out;
    out.header.n_beliefs = cfg.n_beliefs;
    out.header.epoch = cfg.epoch;
    out.header.end = cfg.epoch + static_cast<std::int64_t>(weeks) * kSecondsPerWeek;
    out.header.names = cfg.names;

    auto& truth = out.truth;
    truth.k = k;
    truth.weeks = weeks;
    std::vector<std::vector<std::pair<int, double>>> mixtures;
    for (const auto& bp : cfg.attractors) {
        mixtures.push_back(normalized(bp.mixture));
        std::vector<double> dense(static_cast<std::size_t>(cfg.n_beliefs), 0.0);
        for (const auto& [b, w] : mixtures.back()) dense[static_cast<std::size_t>(b)] = w;
        truth.mixtures.push_back(std::move(dense));
    }
    for (auto& e : truth.expected) e.assign(cells, 0.0);
    for (auto& e : truth.emitted) e.assign(cells, 0);

    for (std::size_t c = 0; c < kCommunities; ++c) {
        std::vector<double> shares;
        for (const auto& bp : cfg.attractors) shares.push_back(bp.share[c]);
        const auto homes = block_labels(quotas(shares, cfg.users[c]));
        for (int i = 0; i < cfg.users[c]; ++i) {
            truth.users.push_back({fmt::format("{}{:05d}", token(static_cast<Community>(c)), i),
                                   static_cast<Community>(c), false, homes[static_cast<std::size_t>(i)]});
        }
    }
    // Per-week attractor of every amplifier, by quota over the active phase.
    std::vector<std::vector<int>> amp_attractor;
    if (cfg.amplifiers && cfg.amplifiers->size > 0) {
        const auto& cohort = *cfg.amplifiers;
        amp_attractor.assign(static_cast<std::size_t>(cohort.size), std::vector<int>(static_cast<std::size_t>(weeks), kNoise));
        for (std::size_t p = 0; p < cohort.schedule.size(); ++p) {
            const auto& phase = cohort.schedule[p];
            const int end = p + 1 < cohort.schedule.size() ? cohort.schedule[p + 1].from_week : weeks;
            std::vector<double> fractions(static_cast<std::size_t>(k), 0.0);
            for (const auto& [a, f] : phase.allocation) fractions[static_cast<std::size_t>(a)] = f;
            const auto labels = block_labels(quotas(fractions, cohort.size));
            for (int i = 0; i < cohort.size; ++i) {
                for (int w = phase.from_week; w < end; ++w) {
                    amp_attractor[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)] = labels[static_cast<std::size_t>(i)];
                }
            }
        }
        for (int i = 0; i < cohort.size; ++i) {
            const auto id = fmt::format("amp{:05d}", i);
            truth.users.push_back({id, cohort.community, true, kNoise});
            auto& weeks_map = truth.amplifier_weeks[id];
            for (int w = 0; w < weeks; ++w) {
                const int a = amp_attractor[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)];
                if (a != kNoise) weeks_map[w] = a;
            }
        }
    }
    for (const auto& p : cfg.planted) {
        if (p.multiplier != 1.0) truth.spikes.push_back(p);
    }

    auto multiplier = [&](int a, int w, Community c) {
        double m = 1.0;
        for (const auto& p : cfg.planted) {
            if (p.attractor == a && p.week == w && p.population == c) m *= p.multiplier;
        }
        for (const auto& s : cfg.rate_shifts) {
            if (s.attractor == a && s.population == c && s.weeks.contains(w)) m *= s.multiplier;
        }
        return m;
    };

    const double lambda = cfg.events_per_user_week;
    std::vector<int> first_week(truth.users.size(), -1);
    for (int w = 0; w < weeks; ++w) {
        std::size_t amp_index = 0;
        for (std::size_t u = 0; u < truth.users.size(); ++u) {
            const auto& user = truth.users[u];
            int a = user.home;
            double rate = lambda;
            if (user.amplifier) {
                a = amp_attractor[amp_index++][static_cast<std::size_t>(w)];
                if (a == kNoise) continue;
            } else {
                rate *= multiplier(a, w, user.community);
            }
            const auto cell = static_cast<std::size_t>(w * k + a);
            truth.expected[index_of(user.community)][cell] += rate;
            const auto n = rng.poisson(rate);
            if (n > 0 && first_week[u] < 0) first_week[u] = w;
            for (std::uint32_t e = 0; e < n; ++e) {
                BeliefEvent ev;
                ev.user = user.id;
                ev.timestamp = cfg.epoch + static_cast<std::int64_t>(w) * kSecondsPerWeek +
                               static_cast<std::int64_t>(rng.below(kSecondsPerWeek));
                ev.belief = draw_belief(rng, mixtures[static_cast<std::size_t>(a)]);
                ev.community = user.community;
                ev.amplifier = user.amplifier;
                out.events.push_back(std::move(ev));
            }
            truth.emitted[index_of(user.community)][cell] += n;
            truth.community_totals[index_of(user.community)] += n;
            truth.n_events += n;
            if (user.amplifier && n > 0) truth.amplifier_events[w][a] += n;
        }
    }

    const auto n_regular = static_cast<std::size_t>(cfg.users[0] + cfg.users[1]);
    for (std::size_t u = 0; u < truth.users.size(); ++u) {
        if (first_week[u] < 0) continue;
        const auto& user = truth.users[u];
        for (int w = first_week[u]; w < weeks; ++w) {
            const int a = user.amplifier ? amp_attractor[u - n_regular][static_cast<std::size_t>(w)] : user.home;
            const auto& bp = cfg.attractors[static_cast<std::size_t>(a)];
            const double x = bp.center[0] + bp.spread * rng.normal();
            const double y = bp.center[1] + bp.spread * rng.normal();
            out.embedding.push_back({user.id, w, x, y});
        }
    }
    canonicalize(out.embedding);
    return out;
}

void write_stream(const SyntheticStream& stream, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw InputError("cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("events.jsonl");
        write_belief_events(f, stream.header, stream.events);
    }
    {
        auto f = open("embedding.csv");
        save_embedding(f, stream.embedding);
    }
    {
        auto f = open("ground_truth.json");
        f << stream.truth.to_json().dump(2) << '\n';
    }
    if (!stream.truth.amplifier_weeks.empty()) {
        auto f = open("amplifiers.txt");
        for (const auto& [id, weeks] : stream.truth.amplifier_weeks) f << id << '\n';
    }
}

} // namespace bld::synth
