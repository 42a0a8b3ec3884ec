#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "gpa/attacks.hpp"
#include "gpa/errors.hpp"
#include "gpa/forecast.hpp"
#include "gpa/gan.hpp"
#include "gpa/harness.hpp"
#include "gpa/indicators.hpp"

namespace {

using namespace gpa;

std::size_t env_workers() {
    if (const char* v = std::getenv("GPA_THREADS")) {
        const long n = std::strtol(v, nullptr, 10);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    return 1;
}

GanArchitecture arch_for(const std::string& scale) {
    return scale == "paper" ? GanArchitecture::paper_scale() : GanArchitecture::desk();
}

int cmd_synth_data(const SyntheticLoadConfig& synth, const std::string& out) {
    std::cout << "seed: " << synth.seed << '\n';
    write_curve_file(out, synth_load(synth));
    std::cout << "wrote " << out << '\n';
    return 0;
}

int cmd_ingest(const std::string& csv, const std::string& out, std::size_t frame_len) {
    const auto curves = ingest_csv(csv, frame_len);
    write_curve_file(out, curves);
    std::cout << "wrote " << curves.size() << " curves to " << out << '\n';
    return 0;
}

int cmd_train(const std::string& data, const std::string& scenario, const std::string& scale,
              std::size_t epochs, std::size_t batch_size, std::uint64_t seed,
              const std::string& out_dir) {
    std::cout << "seed: " << seed << '\n';
    const auto raw = read_curve_file(data);
    const double cap = percentile_cap(raw);
    const auto [norm, rec] = normalize(raw, cap);

    GanArchitecture arch = arch_for(scale);
    if (scale != "paper" && !raw.empty()) {
        if (raw.front().values.size() != arch.curve_len)
            throw DataError("train: desk architecture expects curves of length " +
                            std::to_string(arch.curve_len));
    }
    TrainConfig tc = TrainConfig::preset(scenario_from_name(scenario));
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.seed = seed;
    GanModel model = init_gan(arch, derive_seed(seed, "cli_gan_init"));
    model.norm_cap = cap;

    std::filesystem::create_directories(out_dir);
    const auto log = train(model, norm, tc);
    save_gan(model, out_dir + "/model.gpt");
    write_loss_log(out_dir + "/loss_log.csv", log);
    std::cout << "trained " << epochs << " epochs (" << scenario << ", eta=" << tc.eta
              << "), wrote " << out_dir << "/model.gpt\n";
    return 0;
}

int cmd_generate(const std::string& model_path, std::size_t n, std::uint64_t seed,
                 const std::string& out, bool normalized) {
    std::cout << "seed: " << seed << '\n';
    const GanModel model = load_gan(model_path);
    std::vector<Curve> curves = generate(model, n, seed);
    if (!normalized) curves = denormalize(curves, NormalizationRecord{model.norm_cap});
    write_curve_file(out, curves);
    std::cout << "wrote " << n << " curves to " << out << '\n';
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data,
                 const std::string& test, std::uint64_t seed, const std::string& out) {
    std::cout << "seed: " << seed << '\n';
    const GanModel model = load_gan(model_path);
    const auto natural_raw = read_curve_file(data);
    const NormalizationRecord rec{model.norm_cap};
    const auto natural_norm = normalize(natural_raw, rec.cap).first;
    const auto artificial_norm = generate(model, natural_raw.size(), seed);

    const auto report =
        average_indicator_distance(natural_raw, denormalize(artificial_norm, rec));
    std::cout << "AID: " << report.average << '\n';
    if (!out.empty()) {
        std::ofstream os(out);
        os << report.to_csv();
        std::cout << "wrote " << out << '\n';
    }

    const auto test_raw = test.empty() ? natural_raw : read_curve_file(test);
    const auto test_norm = normalize(test_raw, rec.cap).first;
    ForecastTrainConfig fc;
    fc.seed = derive_seed(seed, "cli_forecast");
    const double score = lstm_score(natural_norm, artificial_norm, test_norm, fc);
    std::cout << "LSTM score: " << score << '\n';
    return 0;
}

int cmd_attack(const std::string& model_path, const std::string& data, const std::string& name,
               const std::string& variant, std::size_t trials, std::uint64_t seed) {
    std::cout << "seed: " << seed << '\n';
    const GanModel model = load_gan(model_path);
    const auto raw = read_curve_file(data);
    const auto part = partition(household_ids(raw), derive_seed(seed, "cli_attack_partition"));
    const NormalizationRecord rec{model.norm_cap};

    AttackInput input;
    input.model = &model;
    input.seed = derive_seed(seed, "cli_attack");
    for (std::size_t i = 0; i < kNumCandidateSets; ++i) {
        input.raw_sets[i] = curves_of_households(raw, part.subsets[i]);
        input.normalized_sets[i] = normalize(input.raw_sets[i], rec.cap).first;
    }

    AttackFn fn;
    if (name == "likelihood")
        fn = [](const AttackInput& in) { return likelihood_attack(in); };
    else if (name == "gradnorm")
        fn = [](const AttackInput& in) { return gradient_norm_attack(in); };
    else if (name == "indicators")
        fn = [](const AttackInput& in) { return indicators_attack(in); };
    else
        throw DataError("attack: unknown attack '" + name + "'");

    auto print = [](const AttackOutcome& o) {
        std::cout << o.attack << " guess: " << o.guess << " scores:";
        for (const double s : o.scores) std::cout << ' ' << s;
        std::cout << '\n';
    };
    if (variant == "subset") {
        print(fn(input));
    } else if (variant == "household") {
        for (const auto& o :
             per_household_variant(fn, input, trials, derive_seed(seed, "cli_attack_hh")))
            print(o);
    } else {
        throw DataError("attack: unknown variant '" + variant + "'");
    }
    return 0;
}

int cmd_experiment(const std::string& config_path, std::uint64_t seed, std::size_t runs,
                   const std::vector<std::string>& scenarios, const std::string& scale,
                   std::size_t gan_epochs, std::size_t hh_trials, const std::string& out_dir,
                   bool quality) {
    ExperimentConfig config;
    if (!config_path.empty()) config = ExperimentConfig::from_json_file(config_path);
    config.master_seed = seed;
    if (runs > 0) config.n_runs = runs;
    if (!scenarios.empty()) {
        config.scenarios.clear();
        for (const auto& s : scenarios) config.scenarios.push_back(scenario_from_name(s));
    }
    config.paper_scale = scale == "paper";
    if (gan_epochs > 0) config.gan_epochs = gan_epochs;
    if (hh_trials > 0) config.per_household_trials = hh_trials;
    config.compute_quality = quality;
    config.workers = env_workers();
    config.out_dir = out_dir;
    std::cout << "seed: " << config.master_seed << '\n';

    const ExperimentReport report = run_experiment(config);
    write_report(report, out_dir);
    std::cout << report.render_table();
    std::cout << "wrote " << out_dir << "/report.txt\n";
    return 0;
}

// Re-render a run directory's table from its CSVs.
int cmd_report(const std::string& dir) {
    std::ifstream attacks(dir + "/attacks.csv");
    if (!attacks) throw DataError("report: cannot open " + dir + "/attacks.csv");
    std::string line;
    std::getline(attacks, line); // header
    struct Tally {
        std::size_t correct = 0, total = 0;
    };
    std::map<std::string, std::map<std::string, Tally>> acc; // scenario -> row label
    std::vector<std::string> scenario_order;
    while (std::getline(attacks, line)) {
        std::istringstream is(line);
        std::string run, attack, variant, scenario, guess, truth, correct;
        std::getline(is, run, ',');
        std::getline(is, attack, ',');
        std::getline(is, variant, ',');
        std::getline(is, scenario, ',');
        std::getline(is, guess, ',');
        std::getline(is, truth, ',');
        std::getline(is, correct, ',');
        if (std::find(scenario_order.begin(), scenario_order.end(), scenario) ==
            scenario_order.end())
            scenario_order.push_back(scenario);
        const std::string label = (variant == "subset" ? "Per-subset " : "Per-household ") +
                                  (attack == "gradient_norm" ? std::string("gradient-norm attack")
                                   : attack == "likelihood"  ? std::string("likelihood attack")
                                                             : std::string("indicators attack"));
        auto& t = acc[scenario][attack == "indicators" ? "Indicators attack" : label];
        ++t.total;
        if (correct == "1") ++t.correct;
    }
    std::cout << std::left << std::setw(38) << "Scenario";
    for (const auto& s : scenario_order) std::cout << std::setw(22) << s;
    std::cout << '\n';
    const char* labels[] = {"Per-subset gradient-norm attack", "Per-household gradient-norm attack",
                            "Per-subset likelihood attack", "Per-household likelihood attack",
                            "Indicators attack"};
    for (const char* label : labels) {
        std::cout << std::setw(38) << label;
        for (const auto& s : scenario_order) {
            const auto it = acc[s].find(label);
            std::ostringstream cell;
            if (it == acc[s].end() || it->second.total == 0)
                cell << "n/a";
            else
                cell << std::fixed << std::setprecision(2)
                     << 100.0 * static_cast<double>(it->second.correct) /
                            static_cast<double>(it->second.total)
                     << "%";
            std::cout << std::setw(22) << cell.str();
        }
        std::cout << '\n';
    }
    // quality rows
    std::ifstream quality(dir + "/quality.csv");
    if (quality) {
        std::getline(quality, line);
        std::map<std::string, std::vector<std::array<double, 2>>> q;
        while (std::getline(quality, line)) {
            std::istringstream is(line);
            std::string run, scenario, aid, lstm;
            std::getline(is, run, ',');
            std::getline(is, scenario, ',');
            std::getline(is, aid, ',');
            std::getline(is, lstm, ',');
            q[scenario].push_back({std::stod(aid), std::stod(lstm)});
        }
        const char* mlabels[] = {"LSTM score", "Average Indicator Distance"};
        for (int m = 0; m < 2; ++m) {
            std::cout << std::setw(38) << mlabels[m];
            for (const auto& s : scenario_order) {
                std::ostringstream cell;
                const auto it = q.find(s);
                if (it == q.end() || it->second.empty()) {
                    cell << "n/a";
                } else {
                    double mean = 0.0;
                    for (const auto& row : it->second) mean += row[m == 0 ? 1 : 0];
                    mean /= static_cast<double>(it->second.size());
                    cell << std::fixed << std::setprecision(4) << mean;
                }
                std::cout << std::setw(22) << cell.str();
            }
            std::cout << '\n';
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAN privacy auditor for household power-consumption curves"};
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 0;
    std::string scale = "desk";
    std::string out_dir = "gpa_out";
    app.add_option("--seed", seed, "master seed (default 0)");
    app.add_option("--scale", scale, "architecture preset: desk|paper (default desk)")
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--out", out_dir, "output directory (default gpa_out)");

    // synth-data
    auto* synth_cmd = app.add_subcommand("synth-data", "write a synthetic curve file");
    SyntheticLoadConfig synth;
    std::string synth_out = "curves.gpc";
    synth_cmd->add_option("--households", synth.n_households, "household count (default 25)");
    synth_cmd->add_option("--frames", synth.frames_per_household,
                          "frames per household (default 8)");
    synth_cmd->add_option("--frame-len", synth.frame_len, "curve length (default 96)");
    synth_cmd->add_option("--noise-sigma", synth.noise_sigma, "noise level (default 0.03)");
    synth_cmd->add_option("--file", synth_out, "output curve file (default curves.gpc)");

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "convert a readings CSV to a curve file");
    std::string ingest_csv_path, ingest_out = "curves.gpc";
    std::size_t frame_len = kDefaultFrameLen;
    ingest_cmd->add_option("--csv", ingest_csv_path, "input CSV (household_id,timestamp,kwh)")
        ->required();
    ingest_cmd->add_option("--file", ingest_out, "output curve file (default curves.gpc)");
    ingest_cmd->add_option("--frame-len", frame_len, "frame length (default 672)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a GAN on a curve file");
    std::string train_data, train_scenario = "same_lr";
    std::size_t epochs = 140, batch_size = 20;
    train_cmd->add_option("--data", train_data, "curve file (raw kWh)")->required();
    train_cmd->add_option("--scenario", train_scenario,
                          "same_lr|diff_lr|regularized (default same_lr)")
        ->check(CLI::IsMember({"same_lr", "diff_lr", "regularized"}));
    train_cmd->add_option("--epochs", epochs, "training epochs (default 140)");
    train_cmd->add_option("--batch-size", batch_size, "batch size (default 20)");

    // generate
    auto* gen_cmd = app.add_subcommand("generate", "sample curves from a trained model");
    std::string gen_model, gen_out = "generated.gpc";
    std::size_t gen_n = 100;
    bool gen_normalized = false;
    gen_cmd->add_option("--model", gen_model, "model checkpoint")->required();
    gen_cmd->add_option("-n", gen_n, "number of curves (default 100)");
    gen_cmd->add_option("--file", gen_out, "output curve file (default generated.gpc)");
    gen_cmd->add_flag("--normalized", gen_normalized, "keep curves on the [-1,1] scale");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "print AID and LSTM score for a model");
    std::string eval_model, eval_data, eval_test, eval_out;
    eval_cmd->add_option("--model", eval_model, "model checkpoint")->required();
    eval_cmd->add_option("--data", eval_data, "natural curve file (raw kWh)")->required();
    eval_cmd->add_option("--test", eval_test, "test curve file for the LSTM score");
    eval_cmd->add_option("--report", eval_out, "write the indicator-distance CSV here");

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "run a membership-inference attack");
    std::string attack_model, attack_data, attack_name = "likelihood", attack_variant = "subset";
    std::size_t attack_trials = 100;
    attack_cmd->add_option("--model", attack_model, "model checkpoint")->required();
    attack_cmd->add_option("--data", attack_data, "curve file with candidate households")
        ->required();
    attack_cmd->add_option("--name", attack_name, "likelihood|gradnorm|indicators")
        ->check(CLI::IsMember({"likelihood", "gradnorm", "indicators"}));
    attack_cmd->add_option("--variant", attack_variant, "subset|household (default subset)")
        ->check(CLI::IsMember({"subset", "household"}));
    attack_cmd->add_option("--trials", attack_trials, "per-household trials (default 100)");

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "run the full experimental protocol");
    std::string exp_config;
    std::size_t exp_runs = 0, exp_gan_epochs = 0, exp_hh_trials = 0;
    std::vector<std::string> exp_scenarios;
    bool exp_no_quality = false;
    exp_cmd->add_option("--config", exp_config, "JSON experiment config");
    exp_cmd->add_option("--runs", exp_runs, "number of runs");
    exp_cmd->add_option("--scenario", exp_scenarios, "scenario (repeatable)");
    exp_cmd->add_option("--gan-epochs", exp_gan_epochs, "GAN epochs per run");
    exp_cmd->add_option("--hh-trials", exp_hh_trials, "per-household trials per run");
    exp_cmd->add_flag("--no-quality", exp_no_quality, "skip AID and LSTM score");

    // report
    auto* report_cmd = app.add_subcommand("report", "re-render a run directory");
    std::string report_dir;
    report_cmd->add_option("--dir", report_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
        synth.seed = seed;
        if (synth_cmd->parsed()) return cmd_synth_data(synth, synth_out);
        if (ingest_cmd->parsed()) return cmd_ingest(ingest_csv_path, ingest_out, frame_len);
        if (train_cmd->parsed())
            return cmd_train(train_data, train_scenario, scale, epochs, batch_size, seed, out_dir);
        if (gen_cmd->parsed()) return cmd_generate(gen_model, gen_n, seed, gen_out, gen_normalized);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_model, eval_data, eval_test, seed, eval_out);
        if (attack_cmd->parsed())
            return cmd_attack(attack_model, attack_data, attack_name, attack_variant,
                              attack_trials, seed);
        if (exp_cmd->parsed())
            return cmd_experiment(exp_config, seed, exp_runs, exp_scenarios, scale, exp_gan_epochs,
                                  exp_hh_trials, out_dir, !exp_no_quality);
        if (report_cmd->parsed()) return cmd_report(report_dir);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const gpa::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const gpa::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const gpa::ShapeError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
