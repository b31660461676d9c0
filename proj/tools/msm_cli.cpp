// Command-line front end: estimation on long-format data, bootstrap
// intervals, scenario simulation and replicated experiments.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msm/msm.hpp"

namespace {

msm::Dataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return msm::ingest_long_format(in);
}

/// cumhaz:l:m | occupation:m | transition:l:m:s | landmark:l:m:s
std::pair<msm::Target, msm::EstimatorKind> parse_statistic(const std::string& spec, const std::string& initial) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    auto need = [&](std::size_t n) {
        if (parts.size() != n) throw std::invalid_argument("malformed statistic '" + spec + "'");
    };
    msm::Target t;
    t.label = spec;
    if (parts.empty()) throw std::invalid_argument("empty statistic");
    if (parts[0] == "cumhaz") {
        need(3);
        t.kind = msm::EstimandKind::CumulativeHazard;
        t.from = std::stoi(parts[1]);
        t.to = std::stoi(parts[2]);
        return {t, msm::EstimatorKind::NA};
    }
    if (parts[0] == "occupation") {
        need(2);
        t.kind = msm::EstimandKind::Occupation;
        t.to = std::stoi(parts[1]);
        t.initial = msm::parse_initial_policy(initial);
        return {t, msm::EstimatorKind::AJ};
    }
    if (parts[0] == "transition" || parts[0] == "landmark") {
        need(4);
        t.kind = msm::EstimandKind::Transition;
        t.from = std::stoi(parts[1]);
        t.to = std::stoi(parts[2]);
        t.s = msm::TimeSpec::at(std::stod(parts[3]));
        return {t, parts[0] == "landmark" ? msm::EstimatorKind::LMAJ : msm::EstimatorKind::AJ};
    }
    throw std::invalid_argument("unknown statistic '" + spec + "'");
}

msm::ValueRange range_for(const msm::Target& t) {
    return t.kind == msm::EstimandKind::CumulativeHazard ? msm::nonnegative_range : msm::probability_range;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonparametric multi-state estimation under left-truncation and right-censoring"};
    app.require_subcommand(1);

    std::string input, out, config, initial = "common:0", bootstrap = "efron", statistic;
    std::uint64_t seed = 1;
    bool seed_given = false;
    unsigned threads = 1;
    std::size_t B = msm::default_bootstrap_replicates;
    double level = 0.95, landmark_s = 0.0;
    int landmark_state = 0, exposure = 1, event = 2;
    bool occupation = false, hazards = false;
    std::vector<double> times;

    auto* estimate = app.add_subcommand("estimate", "Aalen-Johansen occupation and Nelson-Aalen hazards");
    estimate->add_option("--input", input, "long-format data file")->required()->check(CLI::ExistingFile);
    estimate->add_option("--out", out, "output directory")->default_val("estimates");
    estimate->add_flag("--occupation", occupation, "write state occupation probabilities");
    estimate->add_flag("--hazards", hazards, "write cumulative hazards");
    estimate->add_option("--initial", initial, "common:j | multinomial | at-risk | supplied:p0,p1,...");

    auto* landmark = app.add_subcommand("landmark", "landmark Aalen-Johansen estimate of P(s, t)");
    landmark->add_option("--input", input)->required()->check(CLI::ExistingFile);
    landmark->add_option("--out", out)->default_val("estimates");
    landmark->add_option("--s", landmark_s, "landmark time")->required();
    landmark->add_option("--state", landmark_state, "state occupied at the landmark")->required();

    auto* boot = app.add_subcommand("bootstrap", "bootstrap confidence intervals");
    boot->add_option("--input", input)->required()->check(CLI::ExistingFile);
    boot->add_option("--out", out)->default_val("bootstrap");
    boot->add_option("--statistic", statistic, "cumhaz:l:m | occupation:m | transition:l:m:s | landmark:l:m:s")
        ->required();
    boot->add_option("--times", times, "evaluation times")->required()->delimiter(',');
    boot->add_option("--initial", initial);
    boot->add_option("--bootstrap", bootstrap)->check(CLI::IsMember({"efron", "wild"}));
    boot->add_option("--B", B)->check(CLI::PositiveNumber);
    boot->add_option("--level", level)->check(CLI::Range(0.0, 1.0));
    boot->add_option("--seed", seed);

    auto* simulate = app.add_subcommand("simulate", "simulate one study from a scenario (or experiment) config");
    simulate->add_option("--config", config)->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", out, "output data file")->required();
    auto* sim_seed = simulate->add_option("--seed", seed);

    auto* experiment = app.add_subcommand("experiment", "run a replicated simulation experiment");
    experiment->add_option("--config", config)->required()->check(CLI::ExistingFile);
    experiment->add_option("--out", out, "output directory")->default_val("results");
    experiment->add_option("--threads", threads)->check(CLI::PositiveNumber);
    auto* exp_seed = experiment->add_option("--seed", seed);
    auto* exp_boot = experiment->add_option("--bootstrap", bootstrap)->check(CLI::IsMember({"efron", "wild"}));
    auto* exp_B = experiment->add_option("--B", B)->check(CLI::PositiveNumber);
    auto* exp_level = experiment->add_option("--level", level)->check(CLI::Range(0.0, 1.0));

    auto* cox = app.add_subcommand("cox-check", "Cox check of the Markov assumption");
    cox->add_option("--input", input)->required()->check(CLI::ExistingFile);
    cox->add_option("--out", out, "summary file")->default_val("cox.json");
    cox->add_option("--exposure", exposure, "state whose entry time is the covariate");
    cox->add_option("--event", event, "target state of the modelled transition");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*estimate) {
            const auto data = read_dataset(input);
            if (!occupation && !hazards) occupation = hazards = true;
            msm::OutputSet files;
            const std::filesystem::path dir(out);
            if (occupation)
                files.add(dir / "occupation.csv",
                          msm::occupation_csv(msm::state_occupation(data, msm::parse_initial_policy(initial))));
            if (hazards)
                files.add(dir / "cumhaz.csv", msm::hazard_csv(msm::nelson_aalen(msm::build_event_table(data)),
                                                              data.state_space().transitions()));
            files.commit();
        } else if (*landmark) {
            const auto data = read_dataset(input);
            msm::OutputSet files;
            files.add(std::filesystem::path(out) / "landmark.csv",
                      msm::occupation_csv(msm::landmark_curve(data, landmark_s, landmark_state)));
            files.commit();
        } else if (*boot) {
            const auto data = read_dataset(input);
            auto [target, estimator] = parse_statistic(statistic, initial);
            const double s = target.kind == msm::EstimandKind::Transition ? target.s.value : 0.0;
            auto point = msm::estimate_target(data, target, estimator, s, times);
            if (!point) throw msm::NotEstimable("statistic not estimable on the input data");
            const auto method = msm::parse_bootstrap_method(bootstrap);
            const auto sample = msm::bootstrap_target(data, target, estimator, s, times, method, B, seed);
            std::vector<std::pair<double, msm::ConfidenceInterval>> cis;
            msm::OutputSet files;
            const std::filesystem::path dir(out);
            for (std::size_t k = 0; k < times.size(); ++k) {
                cis.emplace_back(times[k], msm::standardized_quantile_ci(sample, (*point)[k], data.size(), level, k,
                                                                         range_for(target)));
                files.add(dir / ("sample_" + std::to_string(k + 1) + ".csv"), msm::sample_csv(sample, k));
            }
            files.add(dir / "ci.csv", msm::ci_csv(cis));
            files.commit();
            if (sample.dropped > 0)
                std::cerr << sample.dropped << " of " << sample.B << " replicates not estimable"
                          << (sample.unreliable() ? " (interval unreliable)" : "") << "\n";
        } else if (*simulate) {
            const auto j = msm::load_json_file(config);
            auto scenario = msm::scenario_from_json(j.contains("scenario") ? j.at("scenario") : j);
            if (*sim_seed) scenario.seed = seed;
            const auto study = msm::simulate_study(scenario);
            std::ostringstream text;
            msm::write_long_format(text, study.data);
            msm::OutputSet files;
            files.add(out, text.str());
            files.commit();
        } else if (*experiment) {
            auto cfg = msm::experiment_from_json(msm::load_json_file(config));
            if (*exp_seed) cfg.master_seed = seed;
            if (*exp_boot) cfg.ci_methods = {msm::parse_bootstrap_method(bootstrap)};
            if (*exp_B) cfg.B = B;
            if (*exp_level) cfg.level = level;
            const auto result = msm::run_experiment(cfg, threads);
            msm::experiment_outputs(result, out).commit();
        } else if (*cox) {
            const auto data = read_dataset(input);
            const auto fit = msm::cox_markov_check(data, exposure, event);
            msm::OutputSet files;
            files.add(out, msm::cox_summary(fit));
            files.commit();
            if (!fit.converged) std::cerr << "warning: Newton-Raphson did not converge\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
