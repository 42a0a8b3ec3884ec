#include "gpa/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gpa/errors.hpp"
#include "gpa/indicators.hpp"

namespace gpa {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (n_runs < 1) throw DataError("experiment config: n_runs must be >= 1");
    if (scenarios.empty()) throw DataError("experiment config: no scenarios");
    if (csv_path.empty()) synth.validate();
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("experiment config: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("experiment config: " + std::string(e.what()));
    }
    ExperimentConfig c;
    c.csv_path = j.value("csv_path", c.csv_path);
    if (j.contains("synth")) {
        const json& s = j["synth"];
        c.synth.n_households = s.value("n_households", c.synth.n_households);
        c.synth.frames_per_household =
            s.value("frames_per_household", c.synth.frames_per_household);
        c.synth.frame_len = s.value("frame_len", c.synth.frame_len);
        c.synth.noise_sigma = s.value("noise_sigma", c.synth.noise_sigma);
        c.synth.seed = s.value("seed", c.synth.seed);
    }
    if (j.contains("scenarios")) {
        c.scenarios.clear();
        for (const auto& s : j["scenarios"]) c.scenarios.push_back(scenario_from_name(s));
    }
    c.n_runs = j.value("n_runs", c.n_runs);
    c.per_household_trials = j.value("per_household_trials", c.per_household_trials);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.paper_scale = j.value("scale", std::string("desk")) == "paper";
    c.gan_epochs = j.value("gan_epochs", c.gan_epochs);
    c.gan_batch_size = j.value("gan_batch_size", c.gan_batch_size);
    c.forecast_epochs = j.value("forecast_epochs", c.forecast_epochs);
    c.compute_quality = j.value("compute_quality", c.compute_quality);
    c.untrained = j.value("untrained", c.untrained);
    c.workers = j.value("workers", c.workers);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.validate();
    return c;
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["csv_path"] = csv_path;
    j["synth"] = json{{"n_households", synth.n_households},
                      {"frames_per_household", synth.frames_per_household},
                      {"frame_len", synth.frame_len},
                      {"noise_sigma", synth.noise_sigma},
                      {"seed", synth.seed}};
    json sc = json::array();
    for (const auto s : scenarios) sc.push_back(scenario_name(s));
    j["scenarios"] = sc;
    j["n_runs"] = n_runs;
    j["per_household_trials"] = per_household_trials;
    j["master_seed"] = master_seed;
    j["scale"] = paper_scale ? "paper" : "desk";
    j["gan_epochs"] = gan_epochs;
    j["gan_batch_size"] = gan_batch_size;
    j["forecast_epochs"] = forecast_epochs;
    j["compute_quality"] = compute_quality;
    j["untrained"] = untrained;
    j["workers"] = workers;
    j["checkpoint_every"] = checkpoint_every;
    return j.dump(2);
}

namespace {

std::array<std::vector<Curve>, kNumCandidateSets> split_by_subsets(
    const std::vector<Curve>& curves, const SubsetPartition& part) {
    std::array<std::vector<Curve>, kNumCandidateSets> out;
    for (std::size_t i = 0; i < kNumCandidateSets; ++i)
        out[i] = curves_of_households(curves, part.subsets[i]);
    return out;
}

void run_one(const ExperimentConfig& config, const std::vector<Curve>& raw_curves,
             const std::vector<std::string>& households, std::size_t run, RunRecord& record) {
    record.run = run;
    record.partition_seed = derive_seed(config.master_seed, "partition", run);
    const SubsetPartition part = partition(households, record.partition_seed);
    record.truth = part.member_index;

    const auto raw_sets = split_by_subsets(raw_curves, part);
    const std::vector<Curve>& member_raw = raw_sets[static_cast<std::size_t>(part.member_index)];
    const double cap = percentile_cap(member_raw);

    std::array<std::vector<Curve>, kNumCandidateSets> norm_sets;
    NormalizationRecord rec{cap};
    for (std::size_t i = 0; i < kNumCandidateSets; ++i)
        norm_sets[i] = normalize(raw_sets[i], cap).first;
    const std::vector<Curve>& member_norm = norm_sets[static_cast<std::size_t>(part.member_index)];

    // test subset for the LSTM score: first non-member subset in partition order
    std::size_t test_idx = part.member_index == 0 ? 1 : 0;

    for (const Scenario scenario : config.scenarios) {
        ScenarioRecord sr;
        sr.scenario = scenario_name(scenario);
        try {
            const GanArchitecture arch =
                config.paper_scale ? GanArchitecture::paper_scale() : GanArchitecture::desk();
            GanModel model =
                init_gan(arch, derive_seed(config.master_seed, "gan_init_" + sr.scenario, run));
            model.norm_cap = cap;
            if (!config.untrained) {
                TrainConfig tc = TrainConfig::preset(scenario);
                tc.epochs = config.gan_epochs;
                tc.batch_size = config.gan_batch_size;
                tc.seed = derive_seed(config.master_seed, "gan_train_" + sr.scenario, run);
                tc.checkpoint_every = config.checkpoint_every;
                if (config.checkpoint_every > 0 && !config.out_dir.empty()) {
                    tc.checkpoint_dir = config.out_dir + "/run" + std::to_string(run) + "_" +
                                        sr.scenario;
                    std::filesystem::create_directories(tc.checkpoint_dir);
                }
                train(model, member_norm, tc);
            } else {
                model.config = TrainConfig::preset(scenario);
            }

            AttackInput input;
            input.normalized_sets = norm_sets;
            input.raw_sets = raw_sets;
            input.model = &model;
            input.seed = derive_seed(config.master_seed, "attack_" + sr.scenario, run);

            sr.likelihood = likelihood_attack(input);
            sr.gradient_norm = gradient_norm_attack(input);
            sr.indicators = indicators_attack(input);
            const std::uint64_t hh_seed =
                derive_seed(config.master_seed, "hh_" + sr.scenario, run);
            sr.hh_likelihood = per_household_variant(
                [](const AttackInput& in) { return likelihood_attack(in); }, input,
                config.per_household_trials, hh_seed);
            sr.hh_gradient_norm = per_household_variant(
                [](const AttackInput& in) { return gradient_norm_attack(in); }, input,
                config.per_household_trials, derive_seed(hh_seed, "gradnorm"));

            if (config.compute_quality) {
                const std::uint64_t gen_seed =
                    derive_seed(config.master_seed, "quality_gen_" + sr.scenario, run);
                std::vector<Curve> artificial_norm = generate(model, member_norm.size(), gen_seed);
                sr.aid =
                    average_indicator_distance(member_raw, denormalize(artificial_norm, rec))
                        .average;
                ForecastTrainConfig fc;
                fc.epochs = config.forecast_epochs;
                fc.seed = derive_seed(config.master_seed, "forecast_" + sr.scenario, run);
                sr.lstm = lstm_score(member_norm, artificial_norm, norm_sets[test_idx], fc,
                                     config.paper_scale ? ForecasterArchitecture::paper_scale()
                                                        : ForecasterArchitecture::desk());
                sr.has_quality = true;
            }
        } catch (const NumericError& e) {
            sr.failed = true;
            sr.error = e.what();
        }
        record.scenarios.push_back(std::move(sr));
    }
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::vector<Curve> raw_curves;
    if (config.csv_path.empty()) {
        SyntheticLoadConfig synth = config.synth;
        synth.seed = derive_seed(config.master_seed, "synth_data", synth.seed);
        raw_curves = synth_load(synth);
    } else {
        raw_curves = ingest_csv(config.csv_path,
                                config.paper_scale ? kDefaultFrameLen : config.synth.frame_len);
    }
    const std::vector<std::string> households = household_ids(raw_curves);
    if (households.size() < 5)
        throw DataError("run_experiment: need at least 5 households, got " +
                        std::to_string(households.size()));

    ExperimentReport report;
    report.config = config;
    report.records.resize(config.n_runs);

    const std::size_t workers = std::max<std::size_t>(1, config.workers);
    if (workers == 1) {
        for (std::size_t run = 0; run < config.n_runs; ++run)
            run_one(config, raw_curves, households, run, report.records[run]);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (std::size_t run = next.fetch_add(1); run < config.n_runs;
                     run = next.fetch_add(1))
                    run_one(config, raw_curves, households, run, report.records[run]);
            });
        }
        for (auto& t : pool) t.join();
    }

    for (const auto& r : report.records)
        for (const auto& s : r.scenarios)
            if (s.failed) ++report.failed_runs;
    return report;
}

AccuracyAggregate ExperimentReport::attack_accuracy(const std::string& scenario,
                                                    const std::string& attack,
                                                    AttackVariant variant) const {
    AccuracyAggregate agg;
    for (const auto& r : records) {
        for (const auto& s : r.scenarios) {
            if (s.scenario != scenario || s.failed) continue;
            auto tally = [&](const AttackOutcome& o) {
                ++agg.total;
                if (o.guess == r.truth) ++agg.correct;
            };
            if (variant == AttackVariant::PerSubset) {
                if (attack == "likelihood") tally(s.likelihood);
                if (attack == "gradient_norm") tally(s.gradient_norm);
                if (attack == "indicators") tally(s.indicators);
            } else {
                const auto& outcomes =
                    attack == "likelihood" ? s.hh_likelihood : s.hh_gradient_norm;
                for (const auto& o : outcomes) tally(o);
            }
        }
    }
    if (agg.total > 0) {
        agg.accuracy = static_cast<double>(agg.correct) / static_cast<double>(agg.total);
        agg.stderr_binomial =
            std::sqrt(agg.accuracy * (1.0 - agg.accuracy) / static_cast<double>(agg.total));
    }
    return agg;
}

MetricAggregate ExperimentReport::metric(const std::string& scenario, bool lstm) const {
    std::vector<double> vals;
    for (const auto& r : records)
        for (const auto& s : r.scenarios)
            if (s.scenario == scenario && !s.failed && s.has_quality)
                vals.push_back(lstm ? s.lstm : s.aid);
    MetricAggregate agg;
    agg.n = vals.size();
    if (vals.empty()) return agg;
    for (const double v : vals) agg.mean += v;
    agg.mean /= static_cast<double>(vals.size());
    for (const double v : vals) agg.stddev += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(agg.stddev / static_cast<double>(vals.size()));
    return agg;
}

std::string ExperimentReport::render_table() const {
    // a scenario with no surviving data gets no column
    std::vector<std::string> scenarios;
    for (const auto s : config.scenarios) {
        const std::string name = scenario_name(s);
        bool any = false;
        for (const auto& run : records)
            for (const auto& sc : run.scenarios)
                if (sc.scenario == name && !sc.failed) any = true;
        if (any) scenarios.push_back(name);
    }

    std::ostringstream os;
    os << std::left << std::setw(38) << "Scenario";
    for (const auto& s : scenarios) os << std::setw(22) << s;
    os << '\n';

    struct Row {
        const char* label;
        const char* attack;
        AttackVariant variant;
    };
    const Row rows[] = {
        {"Per-subset gradient-norm attack", "gradient_norm", AttackVariant::PerSubset},
        {"Per-household gradient-norm attack", "gradient_norm", AttackVariant::PerHousehold},
        {"Per-subset likelihood attack", "likelihood", AttackVariant::PerSubset},
        {"Per-household likelihood attack", "likelihood", AttackVariant::PerHousehold},
        {"Indicators attack", "indicators", AttackVariant::PerSubset},
    };
    os << std::fixed;
    for (const auto& row : rows) {
        os << std::setw(38) << row.label;
        for (const auto& s : scenarios) {
            const AccuracyAggregate a = attack_accuracy(s, row.attack, row.variant);
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(2) << 100.0 * a.accuracy << "% +-"
                 << std::setprecision(2) << 100.0 * a.stderr_binomial << "%";
            os << std::setw(22) << cell.str();
        }
        os << '\n';
    }
    const char* metric_rows[] = {"LSTM score", "Average Indicator Distance"};
    for (int m = 0; m < 2; ++m) {
        os << std::setw(38) << metric_rows[m];
        for (const auto& s : scenarios) {
            const MetricAggregate a = metric(s, m == 0);
            std::ostringstream cell;
            if (a.n == 0)
                cell << "n/a";
            else
                cell << std::fixed << std::setprecision(4) << a.mean << " +-"
                     << std::setprecision(4) << a.stddev;
            os << std::setw(22) << cell.str();
        }
        os << '\n';
    }
    os << "runs: " << config.n_runs << ", failed scenario runs: " << failed_runs
       << ", master seed: " << config.master_seed << '\n';
    return os.str();
}

std::string ExperimentReport::attacks_csv() const {
    std::ostringstream os;
    os << attack_csv_header() << '\n';
    for (const auto& r : records) {
        for (const auto& s : r.scenarios) {
            if (s.failed) continue;
            auto emit = [&](const AttackOutcome& o, const char* variant) {
                AttackCsvRow row;
                row.run = r.run;
                row.attack = o.attack;
                row.variant = variant;
                row.scenario = s.scenario;
                row.guess = o.guess;
                row.truth = r.truth;
                row.scores = o.scores;
                os << attack_csv_line(row) << '\n';
            };
            emit(s.likelihood, "subset");
            emit(s.gradient_norm, "subset");
            emit(s.indicators, "subset");
            for (const auto& o : s.hh_likelihood) emit(o, "household");
            for (const auto& o : s.hh_gradient_norm) emit(o, "household");
        }
    }
    return os.str();
}

std::string ExperimentReport::quality_csv() const {
    std::ostringstream os;
    os << "run,scenario,aid,lstm_score\n";
    os.precision(17);
    for (const auto& r : records)
        for (const auto& s : r.scenarios)
            if (!s.failed && s.has_quality)
                os << r.run << ',' << s.scenario << ',' << s.aid << ',' << s.lstm << '\n';
    return os.str();
}

std::string ExperimentReport::seed_ledger() const {
    json j;
    j["master_seed"] = config.master_seed;
    j["scheme"] =
        "seed(label, run) = splitmix64(splitmix64(master ^ fnv1a(label)) ^ run); "
        "labels: synth_data, partition, gan_init_<scenario>, gan_train_<scenario>, "
        "attack_<scenario>, hh_<scenario>, quality_gen_<scenario>, forecast_<scenario>";
    json runs = json::array();
    for (const auto& r : records)
        runs.push_back(json{{"run", r.run}, {"partition_seed", r.partition_seed},
                            {"truth", r.truth}});
    j["runs"] = runs;
    return j.dump(2);
}

void write_report(const ExperimentReport& report, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto dump = [&out_dir](const std::string& name, const std::string& content) {
        std::ofstream os(out_dir + "/" + name, std::ios::binary);
        if (!os) throw DataError("write_report: cannot open " + out_dir + "/" + name);
        os << content;
    };
    dump("report.txt", report.render_table());
    dump("attacks.csv", report.attacks_csv());
    dump("quality.csv", report.quality_csv());
    dump("seeds.json", report.seed_ledger());
    dump("config.json", report.config.to_json());
}

} // namespace gpa
