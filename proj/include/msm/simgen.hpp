#pragma once

// Illness-death (0 -> 1 -> 2, 0 -> 2) path generators with several
// dependence mechanisms, random left-truncation and right-censoring.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "msm/core.hpp"
#include "msm/random.hpp"

namespace msm {

namespace mechanism {
/// Sojourn in state 1 is Exponential(alpha12), independent of the past.
struct Independent {};
/// Z2 = (1 + d) Z1.
struct ConstantMultiplier {
    double d;
};
/// Sojourn in state 1 has hazard alpha0 * exp(beta * Z1).
struct CoxSojourn {
    double alpha0;
    double beta;
};
/// One Gamma(mean, variance) draw per subject multiplies all three hazards.
struct GammaFrailty {
    double mean;
    double variance;
};
/// 1 -> 2 hazard is `low` until t_star; afterwards `high` for subjects that
/// were already ill at t_star and `low` for the rest.
struct StateAtTime {
    double t_star;
    double low;
    double high;
};
}  // namespace mechanism

namespace truncation {
struct None {};
struct SkewNormal {
    double location;
    double scale;
    double shape;
};
struct Uniform {
    double a;
    double b;
};
struct Exponential {
    double rate;
};
}  // namespace truncation

namespace censoring {
struct None {};
struct Exponential {
    double rate;
};
/// Everybody still under observation is censored at the m-th observed absorption.
struct TypeII {
    std::size_t m;
};
}  // namespace censoring

using Mechanism = std::variant<mechanism::Independent, mechanism::ConstantMultiplier, mechanism::CoxSojourn,
                               mechanism::GammaFrailty, mechanism::StateAtTime>;
using Truncation = std::variant<truncation::None, truncation::SkewNormal, truncation::Uniform, truncation::Exponential>;
using Censoring = std::variant<censoring::None, censoring::Exponential, censoring::TypeII>;

struct ScenarioConfig {
    double alpha01 = 0.039;
    double alpha02 = 0.026;
    double alpha12 = 0.1;
    Mechanism mechanism = mechanism::Independent{};
    Truncation truncation = truncation::None{};
    Censoring censoring = censoring::None{};
    std::size_t n = 100;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(alpha01 > 0.0 && alpha02 > 0.0)) throw std::invalid_argument("alpha01 and alpha02 must be positive");
        if (n == 0) throw std::invalid_argument("n must be positive");
        struct {
            const ScenarioConfig& c;
            void operator()(const mechanism::Independent&) const {
                if (!(c.alpha12 > 0.0)) throw std::invalid_argument("alpha12 must be positive");
            }
            void operator()(const mechanism::ConstantMultiplier& m) const {
                if (!(m.d > 0.0)) throw std::invalid_argument("multiplier d must be positive");
            }
            void operator()(const mechanism::CoxSojourn& m) const {
                if (!(m.alpha0 > 0.0)) throw std::invalid_argument("alpha0 must be positive");
            }
            void operator()(const mechanism::GammaFrailty& m) const {
                if (!(m.mean > 0.0 && m.variance > 0.0)) throw std::invalid_argument("frailty mean and variance must be positive");
                if (!(c.alpha12 > 0.0)) throw std::invalid_argument("alpha12 must be positive");
            }
            void operator()(const mechanism::StateAtTime& m) const {
                if (!(m.low > 0.0 && m.high > 0.0)) throw std::invalid_argument("state-at-time hazards must be positive");
            }
        } check{*this};
        std::visit(check, mechanism);
        if (auto* s = std::get_if<truncation::SkewNormal>(&truncation); s && !(s->scale > 0.0))
            throw std::invalid_argument("skew-normal scale must be positive");
        if (auto* u = std::get_if<truncation::Uniform>(&truncation); u && !(u->a < u->b))
            throw std::invalid_argument("uniform truncation needs a < b");
        if (auto* e = std::get_if<truncation::Exponential>(&truncation); e && !(e->rate > 0.0))
            throw std::invalid_argument("truncation rate must be positive");
        if (auto* e = std::get_if<censoring::Exponential>(&censoring); e && !(e->rate > 0.0))
            throw std::invalid_argument("censoring rate must be positive");
        if (auto* t = std::get_if<censoring::TypeII>(&censoring); t && (t->m == 0 || t->m > n))
            throw std::invalid_argument("type II censoring needs 1 <= m <= n");
    }
};

struct LatentPath {
    std::optional<double> z1;  ///< arrival in state 1; empty for the direct 0 -> 2 route
    double z2 = 0.0;           ///< absorption
    double frailty = 1.0;

    bool via_illness() const noexcept { return z1.has_value(); }

    /// Right-continuous X(t).
    State state_at(double t) const {
        if (t < z1.value_or(z2)) return 0;
        if (t < z2) return 1;
        return 2;
    }

    /// State held on the interval (a, b] containing t, i.e. X(t-).
    State state_before(double t) const {
        if (t <= z1.value_or(z2)) return 0;
        if (t <= z2) return 1;
        return 2;
    }
};

/// Shape and scale of a gamma law with the given mean and variance.
struct GammaParameters {
    double shape;
    double scale;
};

inline GammaParameters gamma_moments(double mean, double variance) {
    return {mean * mean / variance, variance / mean};
}

inline double skew_normal_draw(double location, double scale, double shape, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double delta = shape / std::sqrt(1.0 + shape * shape);
    const double u0 = normal(rng);
    const double v = normal(rng);
    const double u1 = delta * u0 + std::sqrt(1.0 - delta * delta) * v;
    return location + scale * (u0 >= 0.0 ? u1 : -u1);
}

inline std::vector<double> sample_skew_normal(double location, double scale, double shape, std::size_t count,
                                              std::uint64_t seed) {
    if (!(scale > 0.0)) throw std::invalid_argument("skew-normal scale must be positive");
    Rng rng = substream(seed, {stream::truncation});
    std::vector<double> out(count);
    for (auto& x : out) x = skew_normal_draw(location, scale, shape, rng);
    return out;
}

namespace detail {

inline double exponential(double rate, Rng& rng) { return std::exponential_distribution<double>(rate)(rng); }

struct SojournInIllness {
    const ScenarioConfig& config;
    double z1;
    double frailty;
    Rng& rng;

    double operator()(const mechanism::Independent&) const { return z1 + exponential(config.alpha12, rng); }
    double operator()(const mechanism::ConstantMultiplier& m) const { return (1.0 + m.d) * z1; }
    double operator()(const mechanism::CoxSojourn& m) const {
        return z1 + exponential(m.alpha0 * std::exp(m.beta * z1), rng);
    }
    double operator()(const mechanism::GammaFrailty&) const {
        return z1 + exponential(config.alpha12 * frailty, rng);
    }
    double operator()(const mechanism::StateAtTime& m) const {
        // Inverse of the piecewise-constant cumulative hazard.
        const double e = exponential(1.0, rng);
        if (z1 >= m.t_star) return z1 + e / m.low;
        const double before = m.low * (m.t_star - z1);
        if (e <= before) return z1 + e / m.low;
        return m.t_star + (e - before) / m.high;
    }
};

}  // namespace detail

inline LatentPath draw_latent(const ScenarioConfig& config, Rng& rng) {
    LatentPath path;
    if (const auto* f = std::get_if<mechanism::GammaFrailty>(&config.mechanism)) {
        const auto g = gamma_moments(f->mean, f->variance);
        path.frailty = std::gamma_distribution<double>(g.shape, g.scale)(rng);
    }
    const double total = config.alpha01 + config.alpha02;
    const double leave = detail::exponential(total * path.frailty, rng);
    const bool ill = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.alpha01 / total;
    if (!ill) {
        path.z2 = leave;
        return path;
    }
    path.z1 = leave;
    path.z2 = std::visit(detail::SojournInIllness{config, leave, path.frailty, rng}, config.mechanism);
    return path;
}

inline std::vector<LatentPath> simulate_latent(const ScenarioConfig& config, std::size_t count, std::uint64_t seed) {
    Rng rng = substream(seed, {stream::latent});
    std::vector<LatentPath> paths(count);
    for (auto& p : paths) p = draw_latent(config, rng);
    return paths;
}

inline double draw_truncation(const Truncation& trunc, Rng& rng) {
    struct {
        Rng& rng;
        double operator()(const truncation::None&) const { return 0.0; }
        double operator()(const truncation::SkewNormal& s) const {
            return skew_normal_draw(s.location, s.scale, s.shape, rng);
        }
        double operator()(const truncation::Uniform& u) const {
            return std::uniform_real_distribution<double>(u.a, u.b)(rng);
        }
        double operator()(const truncation::Exponential& e) const { return detail::exponential(e.rate, rng); }
    } draw{rng};
    return std::visit(draw, trunc);
}

/// Observed records of a latent path from entry time L onward (L < z2).
inline Subject observe_from(const LatentPath& path, double entry, std::string id) {
    Subject s{std::move(id), {}};
    if (path.via_illness() && entry < *path.z1) {
        s.records.push_back({entry, *path.z1, 0, State{1}});
        s.records.push_back({*path.z1, path.z2, 1, State{2}});
    } else if (path.via_illness()) {
        s.records.push_back({entry, path.z2, 1, State{2}});
    } else {
        s.records.push_back({entry, path.z2, 0, State{2}});
    }
    return s;
}

/// Draws L per path, clamps negative draws to 0, keeps subjects with L < z2.
inline Dataset apply_truncation(const std::vector<LatentPath>& paths, const Truncation& trunc, std::uint64_t seed) {
    Rng rng = substream(seed, {stream::truncation});
    std::vector<Subject> subjects;
    subjects.reserve(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const double entry = std::max(0.0, draw_truncation(trunc, rng));
        if (!(entry < paths[i].z2)) continue;
        subjects.push_back(observe_from(paths[i], entry, "S" + std::to_string(i + 1)));
    }
    return Dataset::trusted(StateSpace::illness_death(), std::move(subjects));
}

/// Cuts a subject's observation at time c. Empty when c <= entry.
inline std::optional<Subject> censor_subject_at(const Subject& s, double c) {
    if (!(s.entry() < c)) return std::nullopt;
    Subject out{s.id, {}};
    for (const auto& r : s.records) {
        if (r.exit <= c) {
            out.records.push_back(r);
            continue;
        }
        out.records.push_back({r.entry, c, r.from, std::nullopt});
        break;
    }
    return out;
}

struct CensoredData {
    Dataset data;
    /// Type II censoring requested more absorptions than were observed.
    bool insufficient_events = false;
    /// The type II censoring time, when applied.
    std::optional<double> censoring_time;
};

inline CensoredData apply_censoring(const Dataset& data, const Censoring& cens, std::uint64_t seed) {
    CensoredData out{data, false, std::nullopt};
    if (std::holds_alternative<censoring::None>(cens)) return out;

    std::vector<Subject> kept;
    kept.reserve(data.size());
    if (const auto* e = std::get_if<censoring::Exponential>(&cens)) {
        Rng rng = substream(seed, {stream::censoring});
        for (const auto& s : data.subjects()) {
            const double c = detail::exponential(e->rate, rng);
            if (auto cs = censor_subject_at(s, c)) kept.push_back(std::move(*cs));
        }
    } else {
        const auto& t2 = std::get<censoring::TypeII>(cens);
        std::vector<double> deaths;
        for (const auto& s : data.subjects()) {
            const auto& last = s.records.back();
            if (last.to && data.state_space().absorbing(*last.to)) deaths.push_back(last.exit);
        }
        if (deaths.size() < t2.m) {
            out.insufficient_events = true;
            return out;
        }
        std::nth_element(deaths.begin(), deaths.begin() + static_cast<std::ptrdiff_t>(t2.m - 1), deaths.end());
        const double tau = deaths[t2.m - 1];
        out.censoring_time = tau;
        for (const auto& s : data.subjects())
            if (auto cs = censor_subject_at(s, tau)) kept.push_back(std::move(*cs));
    }
    out.data = Dataset::trusted(data.state_space(), std::move(kept));
    return out;
}

struct Study {
    Dataset data;
    std::size_t simulated = 0;
    bool insufficient_events = false;
};

/// Latent paths, truncation and censoring, each from its own substream of `seed`.
inline Study simulate_study(const ScenarioConfig& config, std::uint64_t seed) {
    config.validate();
    const auto paths = simulate_latent(config, config.n, seed);
    auto truncated = apply_truncation(paths, config.truncation, seed);
    auto censored = apply_censoring(truncated, config.censoring, seed);
    return {std::move(censored.data), config.n, censored.insufficient_events};
}

inline Study simulate_study(const ScenarioConfig& config) { return simulate_study(config, config.seed); }

}  // namespace msm
