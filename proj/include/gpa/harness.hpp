#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpa/attacks.hpp"
#include "gpa/curves.hpp"
#include "gpa/forecast.hpp"
#include "gpa/gan.hpp"

namespace gpa {

// Full experimental protocol: per run, a fresh partition, one GAN per
// scenario trained on the member subset, quality metrics, one per-subset
// attack of each kind and repeated per-household attacks.
struct ExperimentConfig {
    std::string csv_path;      // empty -> synthesize data
    SyntheticLoadConfig synth; // used when csv_path is empty
    std::vector<Scenario> scenarios = {Scenario::SameLr};
    std::size_t n_runs = 20;
    std::size_t per_household_trials = 100;
    std::uint64_t master_seed = 0;
    bool paper_scale = false; // desk-scale presets by default

    std::size_t gan_epochs = 140;
    std::size_t gan_batch_size = 20;
    std::size_t forecast_epochs = 40;
    bool compute_quality = true;
    bool untrained = false; // leave models at initialization (baseline mode)
    std::size_t workers = 1;
    std::size_t checkpoint_every = 0;
    std::string out_dir;

    void validate() const;
    static ExperimentConfig from_json_file(const std::string& path);
    std::string to_json() const;
};

struct ScenarioRecord {
    std::string scenario;
    bool failed = false;
    std::string error;
    AttackOutcome likelihood, gradient_norm, indicators;
    std::vector<AttackOutcome> hh_likelihood, hh_gradient_norm;
    double aid = 0.0;
    double lstm = 0.0;
    bool has_quality = false;
};

struct RunRecord {
    std::size_t run = 0;
    int truth = 0;
    std::uint64_t partition_seed = 0;
    std::vector<ScenarioRecord> scenarios;
};

struct MetricAggregate {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

struct AccuracyAggregate {
    double accuracy = 0.0; // fraction in [0,1]
    double stderr_binomial = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunRecord> records;
    std::size_t failed_runs = 0;

    AccuracyAggregate attack_accuracy(const std::string& scenario, const std::string& attack,
                                      AttackVariant variant) const;
    MetricAggregate metric(const std::string& scenario, bool lstm) const;

    std::string render_table() const;
    std::string attacks_csv() const;
    std::string quality_csv() const;
    std::string seed_ledger() const;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

// report.txt, attacks.csv, quality.csv, seeds.json under out_dir
void write_report(const ExperimentReport& report, const std::string& out_dir);

} // namespace gpa
