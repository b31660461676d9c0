#pragma once

// JSON (de)serialization of scenario and experiment configurations.

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "msm/harness.hpp"
#include "msm/simgen.hpp"

namespace msm {

using json = nlohmann::json;

/// "common:j", "multinomial", "at-risk", or "supplied:p0,p1,...".
inline InitialPolicy parse_initial_policy(const std::string& s) {
    if (s == "multinomial") return initial::Multinomial{};
    if (s == "at-risk") return initial::AtRiskRenormalized{};
    if (s.rfind("common:", 0) == 0) return initial::CommonState{std::stoi(s.substr(7))};
    if (s.rfind("supplied:", 0) == 0) {
        initial::Supplied out;
        std::string rest = s.substr(9);
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            auto comma = rest.find(',', pos);
            out.p.push_back(std::stod(rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return out;
    }
    throw std::invalid_argument("unknown initial policy '" + s + "'");
}

inline Mechanism mechanism_from_json(const json& j) {
    const std::string type = j.at("type");
    if (type == "independent") return mechanism::Independent{};
    if (type == "constant_multiplier") return mechanism::ConstantMultiplier{j.at("d")};
    if (type == "cox_sojourn") return mechanism::CoxSojourn{j.at("alpha0"), j.at("beta")};
    if (type == "gamma_frailty") return mechanism::GammaFrailty{j.at("mean"), j.at("variance")};
    if (type == "state_at_time") return mechanism::StateAtTime{j.at("t_star"), j.at("alpha_low"), j.at("alpha_high")};
    throw std::invalid_argument("unknown mechanism '" + type + "'");
}

inline Truncation truncation_from_json(const json& j) {
    const std::string type = j.at("type");
    if (type == "none") return truncation::None{};
    if (type == "skew_normal") return truncation::SkewNormal{j.at("location"), j.at("scale"), j.at("shape")};
    if (type == "uniform") return truncation::Uniform{j.at("a"), j.at("b")};
    if (type == "exponential") return truncation::Exponential{j.at("rate")};
    throw std::invalid_argument("unknown truncation '" + type + "'");
}

inline Censoring censoring_from_json(const json& j) {
    const std::string type = j.at("type");
    if (type == "none") return censoring::None{};
    if (type == "exponential") return censoring::Exponential{j.at("rate")};
    if (type == "type_ii") return censoring::TypeII{j.at("m").get<std::size_t>()};
    throw std::invalid_argument("unknown censoring '" + type + "'");
}

inline ScenarioConfig scenario_from_json(const json& j) {
    ScenarioConfig c;
    const auto& h = j.at("hazards");
    c.alpha01 = h.at("01");
    c.alpha02 = h.at("02");
    c.alpha12 = h.value("12", 0.1);
    c.mechanism = mechanism_from_json(j.value("mechanism", json{{"type", "independent"}}));
    c.truncation = truncation_from_json(j.value("truncation", json{{"type", "none"}}));
    c.censoring = censoring_from_json(j.value("censoring", json{{"type", "none"}}));
    c.n = j.at("n").get<std::size_t>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
}

inline json to_json(const ScenarioConfig& c) {
    json j;
    j["hazards"] = {{"01", c.alpha01}, {"02", c.alpha02}, {"12", c.alpha12}};
    j["mechanism"] = std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, mechanism::Independent>) return {{"type", "independent"}};
            else if constexpr (std::is_same_v<T, mechanism::ConstantMultiplier>) return {{"type", "constant_multiplier"}, {"d", m.d}};
            else if constexpr (std::is_same_v<T, mechanism::CoxSojourn>) return {{"type", "cox_sojourn"}, {"alpha0", m.alpha0}, {"beta", m.beta}};
            else if constexpr (std::is_same_v<T, mechanism::GammaFrailty>) return {{"type", "gamma_frailty"}, {"mean", m.mean}, {"variance", m.variance}};
            else return {{"type", "state_at_time"}, {"t_star", m.t_star}, {"alpha_low", m.low}, {"alpha_high", m.high}};
        },
        c.mechanism);
    j["truncation"] = std::visit(
        [](const auto& t) -> json {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, truncation::None>) return {{"type", "none"}};
            else if constexpr (std::is_same_v<T, truncation::SkewNormal>) return {{"type", "skew_normal"}, {"location", t.location}, {"scale", t.scale}, {"shape", t.shape}};
            else if constexpr (std::is_same_v<T, truncation::Uniform>) return {{"type", "uniform"}, {"a", t.a}, {"b", t.b}};
            else return {{"type", "exponential"}, {"rate", t.rate}};
        },
        c.truncation);
    j["censoring"] = std::visit(
        [](const auto& t) -> json {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, censoring::None>) return {{"type", "none"}};
            else if constexpr (std::is_same_v<T, censoring::Exponential>) return {{"type", "exponential"}, {"rate", t.rate}};
            else return {{"type", "type_ii"}, {"m", t.m}};
        },
        c.censoring);
    j["n"] = c.n;
    j["seed"] = c.seed;
    return j;
}

namespace detail {

inline TimeSpec time_from_json(const json& j) {
    if (j.is_number()) return TimeSpec::at(j.get<double>());
    if (j.contains("quantile")) return TimeSpec::absorption_quantile(j.at("quantile"));
    if (j.contains("event_quantile")) return TimeSpec::event_quantile(j.at("event_quantile"));
    throw std::invalid_argument("time must be a number, {\"quantile\": q} or {\"event_quantile\": q}");
}

inline EstimatorKind estimator_from_string(const std::string& s) {
    if (s == "AJ") return EstimatorKind::AJ;
    if (s == "LMAJ") return EstimatorKind::LMAJ;
    if (s == "NA") return EstimatorKind::NA;
    throw std::invalid_argument("unknown estimator '" + s + "'");
}

inline Target target_from_json(const json& j) {
    Target t;
    const std::string kind = j.at("estimand");
    if (kind == "occupation") {
        t.kind = EstimandKind::Occupation;
        t.to = j.at("state");
        t.initial = parse_initial_policy(j.value("initial", std::string("common:0")));
    } else if (kind == "transition") {
        t.kind = EstimandKind::Transition;
        t.from = j.at("from");
        t.to = j.at("to");
        t.s = time_from_json(j.at("s"));
    } else if (kind == "cumulative_hazard") {
        t.kind = EstimandKind::CumulativeHazard;
        t.from = j.at("from");
        t.to = j.at("to");
    } else {
        throw std::invalid_argument("unknown estimand '" + kind + "'");
    }
    t.label = j.value("label", kind);
    for (const auto& v : j.value("times", json::array())) t.times.push_back(time_from_json(v));
    if (j.contains("truth")) t.truth = j.at("truth").get<std::vector<double>>();
    if (j.contains("curve")) {
        const auto& c = j.at("curve");
        CurveSpec cs;
        cs.from = c.value("from", 0.0);
        cs.to = time_from_json(c.at("to"));
        cs.points = c.value("points", std::size_t{101});
        t.curve = cs;
    }
    return t;
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const json& j) {
    ExperimentConfig c;
    c.name = j.value("name", std::string("experiment"));
    c.scenario = scenario_from_json(j.at("scenario"));
    c.replications = j.value("replications", std::size_t{100});
    c.estimators.clear();
    for (const auto& e : j.value("estimators", json::array({"AJ"})))
        c.estimators.push_back(detail::estimator_from_string(e.get<std::string>()));
    for (const auto& t : j.at("targets")) c.targets.push_back(detail::target_from_json(t));
    if (j.contains("ci_method")) {
        const auto& m = j.at("ci_method");
        auto add = [&](const std::string& s) {
            if (s != "none") c.ci_methods.push_back(parse_bootstrap_method(s));
        };
        if (m.is_array())
            for (const auto& v : m) add(v.get<std::string>());
        else
            add(m.get<std::string>());
    }
    c.B = j.value("B", default_bootstrap_replicates);
    c.level = j.value("level", 0.95);
    if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        if (o.contains("large_sample"))
            c.oracle_size = o.at("large_sample").get<std::size_t>();
        else if (o.value("supplied", false))
            c.oracle_size = 0;
        else
            throw std::invalid_argument("oracle must be {\"large_sample\": n} or {\"supplied\": true}");
    }
    c.master_seed = j.value("master_seed", std::uint64_t{1});
    c.validate();
    return c;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

}  // namespace msm
