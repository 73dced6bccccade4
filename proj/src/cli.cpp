#include "bld/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "bld/beliefdyn.hpp"
#include "bld/comparative.hpp"
#include "bld/datamodel.hpp"
#include "bld/events.hpp"
#include "bld/landscape.hpp"
#include "bld/measures.hpp"
#include "bld/report.hpp"
#include "bld/synth.hpp"

namespace bld {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
    std::string subcommand;
    std::string events;
    std::string embedding;
    std::string amplifiers;
    std::string scenario;
    std::string out;
    double half_life = 5.0;
    std::optional<int> k;
    std::optional<double> gamma_threshold;
    std::optional<double> bandwidth;
    double noise_floor = 0.0;
    double z_threshold = 2.0;
    std::optional<int> burn_in;
    std::string periods = "pre=0..19,event=20..23,post=24..";
    int up_to_week = 20;
    std::string window;
    std::string half_lives = "4,5,6,7,8";
    double reference = 5.0;
    std::string basis = "members";
    std::optional<std::uint64_t> seed;
    int threads = 1;

    /// Everything that shapes the outputs, minus file locations.
    nlohmann::ordered_json settings() const {
        nlohmann::ordered_json j;
        j["subcommand"] = subcommand;
        j["half_life"] = half_life;
        j["k"] = k ? nlohmann::ordered_json(*k) : nlohmann::ordered_json();
        j["gamma_threshold"] = gamma_threshold ? nlohmann::ordered_json(*gamma_threshold) : nlohmann::ordered_json();
        j["bandwidth"] = bandwidth ? nlohmann::ordered_json(*bandwidth) : nlohmann::ordered_json();
        j["noise_floor"] = noise_floor;
        j["z_threshold"] = z_threshold;
        j["burn_in"] = burn_in ? nlohmann::ordered_json(*burn_in) : nlohmann::ordered_json();
        j["periods"] = periods;
        j["up_to_week"] = up_to_week;
        j["window"] = window;
        j["half_lives"] = half_lives;
        j["reference"] = reference;
        j["basis"] = basis;
        j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json();
        j["embedding"] = embedding.empty() ? "fallback_projection" : "external";
        return j;
    }
};

constexpr std::uint64_t kProjectionSeed = 20200525;

WeekRange parse_window(const std::string& text) {
    const auto dots = text.find("..");
    try {
        if (dots == std::string::npos) {
            const int w = std::stoi(text);
            return {w, w};
        }
        const int first = std::stoi(text.substr(0, dots));
        const auto rest = text.substr(dots + 2);
        const int last = rest.empty() ? -1 : std::stoi(rest);
        if (first < 0 || (last >= 0 && last < first)) throw std::invalid_argument(text);
        return {first, last};
    } catch (const std::logic_error&) {
        throw InputError("bad week window '" + text + "'; expected first..last");
    }
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw InputError("bad number '" + item + "' in list");
        }
    }
    return out;
}

/// Files are staged in a scratch directory and moved into place only when the
/// whole subcommand succeeds.
class OutputDir {
public:
    explicit OutputDir(const std::string& path) : final_(path) {
        if (final_.empty()) throw InputError("--out is required");
        fs::create_directories(final_);
        staging_ = final_ / ".bld-staging";
        fs::remove_all(staging_);
        fs::create_directories(staging_);
    }
    ~OutputDir() {
        std::error_code ec;
        fs::remove_all(staging_, ec);
    }

    std::ofstream open(const std::string& name) {
        const auto path = staging_ / name;
        fs::create_directories(path.parent_path());
        std::ofstream f(path, std::ios::binary);
        if (!f) throw InputError("cannot write " + path.string());
        files_.push_back(name);
        return f;
    }

    void write(const std::string& name, const std::function<void(std::ostream&)>& fn) {
        auto f = open(name);
        fn(f);
        if (!f) throw InputError("write failed: " + name);
    }

    void commit(const nlohmann::ordered_json& manifest_base) {
        auto manifest = manifest_base;
        std::sort(files_.begin(), files_.end());
        nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
        for (const auto& name : files_) outputs[name] = sha256_file(staging_ / name);
        manifest["outputs"] = outputs;
        {
            std::ofstream f(staging_ / "run-manifest.json", std::ios::binary);
            f << manifest.dump(2) << '\n';
        }
        files_.push_back("run-manifest.json");
        for (const auto& name : files_) {
            const auto target = final_ / name;
            fs::create_directories(target.parent_path());
            fs::rename(staging_ / name, target);
        }
    }

private:
    fs::path final_;
    fs::path staging_;
    std::vector<std::string> files_;
};

struct Pipeline {
    EventStream stream;
    WeeklyCounts counts;
    std::optional<std::vector<EmbeddedPoint>> external;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
};

Pipeline load_inputs(const RunConfig& cfg, bool need_embedding) {
    if (cfg.events.empty()) throw InputError("--events is required");
    Pipeline p;
    p.stream = load_belief_events(cfg.events);
    p.inputs["events"] = sha256_file(cfg.events);
    p.counts = bin_weekly(p.stream.events, p.stream.header.epoch, p.stream.header.n_beliefs,
                          p.stream.header.declared_weeks());
    if (need_embedding && !cfg.embedding.empty()) {
        p.external = load_embedding(cfg.embedding);
        p.inputs["embedding"] = sha256_file(cfg.embedding);
    }
    return p;
}

ClusterConfig cluster_config(const RunConfig& cfg) {
    ClusterConfig c;
    c.k = cfg.k;
    c.gamma_threshold = cfg.gamma_threshold;
    if (!c.k && !c.gamma_threshold) c.k = 21;
    c.bandwidth = cfg.bandwidth;
    c.noise_floor = cfg.noise_floor;
    c.threads = cfg.threads;
    return c;
}

SpikeParams spike_params(const RunConfig& cfg) {
    SpikeParams s;
    s.threshold = cfg.z_threshold;
    s.burn_in = cfg.burn_in;
    return s;
}

LandscapeModel landscape(const RunConfig& cfg, const Pipeline& p) {
    return build_landscape_model(p.counts, SmoothingParams::from_half_life(cfg.half_life), cluster_config(cfg),
                                 p.external ? &*p.external : nullptr, cfg.seed.value_or(kProjectionSeed));
}

void write_profiles_csv(std::ostream& out, const ProfileSet& profiles) {
    out << "attractor,belief,frequency\n";
    for (const auto& p : profiles.profiles) {
        for (std::size_t b = 0; b < p.belief_frequency.size(); ++b) {
            if (p.belief_frequency[b] > 0.0) {
                write_row(out, {std::to_string(p.attractor), std::to_string(b), fmt_num(p.belief_frequency[b])});
            }
        }
    }
}

void write_landscape_files(OutputDir& dir, const LandscapeModel& model, const WeeklyCounts& counts) {
    if (model.projected) dir.write("embedding.csv", [&](std::ostream& o) { save_embedding(o, model.embedding); });
    dir.write("attractors.json", [&](std::ostream& o) { o << model.attractors.to_json().dump(2) << '\n'; });
    dir.write("assignments.csv", [&](std::ostream& o) { write_assignments_csv(o, model.assignments); });
    dir.write("profiles.csv", [&](std::ostream& o) { write_profiles_csv(o, attractor_profiles(model.assignments, counts)); });
    if (!model.rejected_embedding.empty()) {
        dir.write("rejected_embedding.csv", [&](std::ostream& o) {
            o << "user,week\n";
            for (const auto& k : model.rejected_embedding) write_row(o, {k.user, std::to_string(k.week)});
        });
    }
}

nlohmann::ordered_json manifest(const RunConfig& cfg, const nlohmann::ordered_json& inputs) {
    nlohmann::ordered_json m;
    m["tool"] = "bld";
    m["version"] = kVersion;
    m["subcommand"] = cfg.subcommand;
    const auto settings = cfg.settings();
    m["config"] = settings;
    m["config_sha256"] = sha256_hex(settings.dump());
    m["inputs"] = inputs;
    return m;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
    if (cfg.events.empty()) throw InputError("--events is required");
    const auto stream = load_belief_events(cfg.events);
    const auto report = stream.report.to_json(stream.header).dump(2);
    out << report << '\n';
    if (!cfg.out.empty()) {
        OutputDir dir(cfg.out);
        dir.write("validation.json", [&](std::ostream& o) { o << report << '\n'; });
        dir.commit(manifest(cfg, {{"events", sha256_file(cfg.events)}}));
    }
    return 0;
}

int cmd_vectors(const RunConfig& cfg) {
    const auto p = load_inputs(cfg, false);
    OutputDir dir(cfg.out);
    const auto series = build_belief_vectors(p.counts, SmoothingParams::from_half_life(cfg.half_life), cfg.threads);
    dir.write("vectors.csv", [&](std::ostream& o) { write_vectors_csv(o, series); });
    dir.write("lifespans.csv", [&](std::ostream& o) {
        write_lifespans_csv(o, belief_lifespans(p.stream.events, p.stream.header.epoch));
    });
    dir.commit(manifest(cfg, p.inputs));
    return 0;
}

int cmd_landscape(const RunConfig& cfg) {
    const auto p = load_inputs(cfg, true);
    OutputDir dir(cfg.out);
    const auto model = landscape(cfg, p);
    write_landscape_files(dir, model, p.counts);
    dir.commit(manifest(cfg, p.inputs));
    return 0;
}

HomogeneityBasis homogeneity_basis(const RunConfig& cfg) {
    if (cfg.basis == "tweets") return HomogeneityBasis::TweetVolume;
    return HomogeneityBasis::UniqueUsers;
}

int cmd_measures(const RunConfig& cfg) {
    const auto p = load_inputs(cfg, true);
    OutputDir dir(cfg.out);
    const auto model = landscape(cfg, p);
    const auto h = weekly_homogeneity(weekly_attractor_counts(model.assignments, p.counts), homogeneity_basis(cfg));
    const auto biases = belief_bias(p.counts);
    const auto profiles = attractor_profiles(model.assignments, p.counts);
    dir.write("homogeneity.csv", [&](std::ostream& o) { write_homogeneity_csv(o, h.records); });
    dir.write("belief_bias.csv", [&](std::ostream& o) { write_belief_bias_csv(o, biases); });
    dir.write("attractor_bias.csv", [&](std::ostream& o) {
        write_attractor_bias_csv(o, attractor_bias(profiles.profiles, biases));
    });
    dir.commit(manifest(cfg, p.inputs));
    return 0;
}

int cmd_events(const RunConfig& cfg) {
    const auto p = load_inputs(cfg, true);
    OutputDir dir(cfg.out);
    const auto model = landscape(cfg, p);
    const auto spikes = detect_spikes(model.assignments, p.counts, SmoothingParams::from_half_life(cfg.half_life),
                                      spike_params(cfg));
    dir.write("spikes.csv", [&](std::ostream& o) { write_spikes_csv(o, spikes, p.stream.header); });
    for (int a = 0; a < model.assignments.k(); ++a) {
        dir.write(fmt::format("expected_traffic/attractor_{}.csv", a),
                  [&](std::ostream& o) { write_expected_traffic_csv(o, spikes, a, p.stream.header); });
    }
    dir.commit(manifest(cfg, p.inputs));
    return 0;
}

int cmd_h1(const RunConfig& cfg) {
    const auto p = load_inputs(cfg, true);
    const auto window = parse_window(cfg.window.empty() ? "20..23" : cfg.window);
    OutputDir dir(cfg.out);
    const auto model = landscape(cfg, p);
    const auto h = weekly_homogeneity(weekly_attractor_counts(model.assignments, p.counts), homogeneity_basis(cfg));
    const auto ranking = mean_homogeneity_ranking(h.records, cfg.up_to_week, model.assignments.k());
    const auto spikes = detect_spikes(model.assignments, p.counts, SmoothingParams::from_half_life(cfg.half_life),
                                      spike_params(cfg));
    const auto coordinated = coordinated_spikes(spikes, window);
    dir.write("homogeneity.csv", [&](std::ostream& o) { write_homogeneity_csv(o, h.records); });
    dir.write("homogeneity_ranking.csv", [&](std::ostream& o) { write_ranking_csv(o, ranking); });
    dir.write("spikes.csv", [&](std::ostream& o) { write_spikes_csv(o, spikes, p.stream.header); });
    dir.write("coordinated_spikes.csv", [&](std::ostream& o) {
        o << "attractor\n";
        for (int a : coordinated) o << a << '\n';
    });
    dir.commit(manifest(cfg, p.inputs));
    return 0;
}

int cmd_h2(const RunConfig& cfg) {
    if (cfg.amplifiers.empty()) throw InputError("--amplifiers is required");
    auto p = load_inputs(cfg, true);
    const auto amplifiers = load_amplifiers(cfg.amplifiers);
    p.inputs["amplifiers"] = sha256_file(cfg.amplifiers);
    const auto periods = PeriodSpec::parse(cfg.periods);
    const auto window = parse_window(cfg.window.empty() ? "22..23" : cfg.window);
    OutputDir dir(cfg.out);
    const auto model = landscape(cfg, p);
    const auto flows = amplifier_flows(model.assignments, p.counts, amplifiers, periods);
    const auto biases = belief_bias(p.counts);
    std::map<int, double> attractor_biases;
    for (const auto& b : attractor_bias(attractor_profiles(model.assignments, p.counts).profiles, biases)) {
        attractor_biases[b.attractor] = b.bias;
    }
    const auto weighted = weighted_bias_by_period(flows, attractor_biases);
    const auto spikes = detect_spikes(model.assignments, p.counts, SmoothingParams::from_half_life(cfg.half_life),
                                      spike_params(cfg));
    std::vector<SpikeStats> in_window;
    std::copy_if(spikes.begin(), spikes.end(), std::back_inserter(in_window),
                 [&](const SpikeStats& s) { return s.is_spike && window.contains(s.week); });
    dir.write("flows.csv", [&](std::ostream& o) { write_flows_csv(o, flows); });
    dir.write("flow_summary.csv", [&](std::ostream& o) {
        o << "period,amplifier_events,cover90,no_activity\n";
        for (const auto& f : flows.periods) {
            std::string cover;
            for (int a : f.cover90) cover += (cover.empty() ? "" : " ") + std::to_string(a);
            write_row(o, {f.period, std::to_string(f.amplifier_events), cover, f.no_activity ? "1" : "0"});
        }
    });
    dir.write("weighted_bias.csv", [&](std::ostream& o) { write_weighted_bias_csv(o, weighted); });
    dir.write("post_tweet_spikes.csv", [&](std::ostream& o) { write_spikes_csv(o, in_window, p.stream.header); });
    dir.commit(manifest(cfg, p.inputs));
    return 0;
}

int cmd_rq2(const RunConfig& cfg) {
    const auto p = load_inputs(cfg, true);
    const auto periods = PeriodSpec::parse(cfg.periods);
    OutputDir dir(cfg.out);
    const auto model = landscape(cfg, p);
    const auto rows = correlation_report(attractor_activity(model.assignments, p.counts), periods, p.stream.header);
    dir.write("correlations.csv", [&](std::ostream& o) { write_correlations_csv(o, rows); });
    dir.commit(manifest(cfg, p.inputs));
    return 0;
}

int cmd_sensitivity(const RunConfig& cfg) {
    const auto p = load_inputs(cfg, true);
    SweepConfig sweep;
    sweep.half_lives = parse_list(cfg.half_lives);
    sweep.reference = cfg.reference;
    sweep.cluster = cluster_config(cfg);
    sweep.spikes = spike_params(cfg);
    sweep.window = parse_window(cfg.window.empty() ? "20..23" : cfg.window);
    if (cfg.basis == "beliefs") {
        sweep.basis = JaccardBasis::BeliefSupport;
    } else if (cfg.basis != "members") {
        throw InputError("--basis must be members or beliefs for sensitivity");
    }
    sweep.projection_seed = cfg.seed.value_or(kProjectionSeed);
    if (p.external) {
        const auto* points = &*p.external;
        sweep.embedding_for = [points](double) { return points; };
    }
    sweep.threads = cfg.threads;
    OutputDir dir(cfg.out);
    const auto result = sensitivity_sweep(p.counts, sweep);
    dir.write("ari_matrix.csv", [&](std::ostream& o) { write_ari_matrix_csv(o, result); });
    dir.write("jaccard_matches.csv", [&](std::ostream& o) { write_jaccard_matches_csv(o, result); });
    dir.commit(manifest(cfg, p.inputs));
    return 0;
}

int cmd_synth(const RunConfig& cfg) {
    if (cfg.scenario.empty()) throw InputError("--scenario is required");
    auto scenario = synth::ScenarioConfig::load(cfg.scenario);
    if (cfg.seed) scenario.seed = *cfg.seed;
    const auto stream = synth::generate_stream(scenario);
    OutputDir dir(cfg.out);
    dir.write("events.jsonl", [&](std::ostream& o) { write_belief_events(o, stream.header, stream.events); });
    dir.write("embedding.csv", [&](std::ostream& o) { save_embedding(o, stream.embedding); });
    dir.write("ground_truth.json", [&](std::ostream& o) { o << stream.truth.to_json().dump(2) << '\n'; });
    if (!stream.truth.amplifier_weeks.empty()) {
        dir.write("amplifiers.txt", [&](std::ostream& o) {
            for (const auto& [id, weeks] : stream.truth.amplifier_weeks) o << id << '\n';
        });
    }
    dir.commit(manifest(cfg, {{"scenario", sha256_hex(scenario.to_json().dump())}}));
    return 0;
}

nlohmann::json error_json(const char* kind, const std::string& message) {
    return {{"status", "error"}, {"kind", kind}, {"message", message}};
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Belief-dynamics measurement pipeline", "bld"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "Flat key = value config file; flags override it");
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig cfg;
    app.add_option("--events", cfg.events, "events.jsonl input");
    app.add_option("--embedding", cfg.embedding, "embedding.csv input (default: built-in projection)");
    app.add_option("--amplifiers", cfg.amplifiers, "amplifier ids, one per line");
    app.add_option("--scenario", cfg.scenario, "synthetic scenario JSON");
    app.add_option("--out", cfg.out, "output directory");
    app.add_option("--half-life", cfg.half_life, "EWMA half-life in weeks")->check(CLI::PositiveNumber);
    app.add_option("--k", cfg.k, "number of attractors");
    app.add_option("--gamma-threshold", cfg.gamma_threshold, "peak threshold on density * distance");
    app.add_option("--bandwidth", cfg.bandwidth, "kernel bandwidth")->check(CLI::PositiveNumber);
    app.add_option("--noise-floor", cfg.noise_floor, "density below which points are noise");
    app.add_option("--z-threshold", cfg.z_threshold, "spike threshold on z");
    app.add_option("--burn-in", cfg.burn_in, "weeks before spikes may be flagged")->check(CLI::NonNegativeNumber);
    app.add_option("--periods", cfg.periods, "named week ranges, e.g. pre=0..19,event=20..23,post=24..");
    app.add_option("--up-to-week", cfg.up_to_week, "homogeneity ranking cutoff (exclusive)");
    app.add_option("--window", cfg.window, "spike window first..last");
    app.add_option("--half-lives", cfg.half_lives, "comma-separated sweep half-lives");
    app.add_option("--reference", cfg.reference, "reference half-life of the sweep");
    app.add_option("--basis", cfg.basis, "members|beliefs (sweep) or users|tweets (homogeneity)");
    app.add_option("--seed", cfg.seed, "generator seed (synth) or projection seed");
    app.add_option("--threads", cfg.threads, "worker threads")->check(CLI::PositiveNumber);

    const std::vector<std::pair<const char*, const char*>> commands{
        {"validate", "check an event stream and print the validation report"},
        {"vectors", "belief vectors and belief lifespans"},
        {"landscape", "attractors, assignments and profiles"},
        {"measures", "homogeneity and community bias"},
        {"events", "spike detection and expected traffic"},
        {"h1", "coordinated spikes and homogeneity ranking"},
        {"h2", "amplifier flows and weighted bias"},
        {"rq2", "activity correlation report"},
        {"sensitivity", "half-life sweep: ARI matrix and spike matches"},
        {"synth", "generate a synthetic stream with ground truth"},
    };
    for (const auto& [name, desc] : commands) app.add_subcommand(name, desc);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_json("usage_error", e.what()).dump() << '\n';
        return 1;
    }
    cfg.subcommand = app.get_subcommands().front()->get_name();

    try {
        const auto& s = cfg.subcommand;
        if (s == "validate") return cmd_validate(cfg, out);
        if (s == "vectors") return cmd_vectors(cfg);
        if (s == "landscape") return cmd_landscape(cfg);
        if (s == "measures") return cmd_measures(cfg);
        if (s == "events") return cmd_events(cfg);
        if (s == "h1") return cmd_h1(cfg);
        if (s == "h2") return cmd_h2(cfg);
        if (s == "rq2") return cmd_rq2(cfg);
        if (s == "sensitivity") return cmd_sensitivity(cfg);
        if (s == "synth") return cmd_synth(cfg);
        throw std::logic_error("unhandled subcommand " + s);
    } catch (const InputError& e) {
        err << error_json("input_error", e.what()).dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << error_json("internal_error", e.what()).dump() << '\n';
        return 2;
    }
}

} // namespace bld
