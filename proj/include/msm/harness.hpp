#pragma once

// Replicated simulation experiments: large-sample oracles, per-replication
// estimation with bootstrap intervals, and bias/RMSE/coverage aggregation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "msm/core.hpp"
#include "msm/estimators.hpp"
#include "msm/random.hpp"
#include "msm/resampling.hpp"
#include "msm/simgen.hpp"

namespace msm {

enum class EstimandKind { Occupation, Transition, CumulativeHazard };
enum class EstimatorKind { AJ, LMAJ, NA };

inline std::string to_string(EstimatorKind e) {
    switch (e) {
        case EstimatorKind::AJ: return "AJ";
        case EstimatorKind::LMAJ: return "LMAJ";
        case EstimatorKind::NA: return "NA";
    }
    return "?";
}

inline bool applicable(EstimatorKind e, EstimandKind k) {
    switch (k) {
        case EstimandKind::Occupation: return e == EstimatorKind::AJ;
        case EstimandKind::Transition: return e == EstimatorKind::AJ || e == EstimatorKind::LMAJ;
        case EstimandKind::CumulativeHazard: return e == EstimatorKind::NA;
    }
    return false;
}

/// A time given literally or as a quantile of the oracle law.
struct TimeSpec {
    enum class Kind { Value, AbsorptionQuantile, EventQuantile };
    Kind kind = Kind::Value;
    double value = 0.0;

    static TimeSpec at(double t) { return {Kind::Value, t}; }
    static TimeSpec absorption_quantile(double q) { return {Kind::AbsorptionQuantile, q}; }
    static TimeSpec event_quantile(double q) { return {Kind::EventQuantile, q}; }
};

struct CurveSpec {
    double from = 0.0;
    TimeSpec to = TimeSpec::at(1.0);
    std::size_t points = 101;
};

struct Target {
    std::string label;
    EstimandKind kind = EstimandKind::Occupation;
    /// Occupation: `to` is the state m. Transition: P_{from,to}(s, t).
    /// Cumulative hazard: A_{from,to}(t).
    State from = 0;
    State to = 1;
    TimeSpec s = TimeSpec::at(0.0);
    std::vector<TimeSpec> times;
    std::optional<CurveSpec> curve;
    InitialPolicy initial = initial::CommonState{0};
    /// Supplied true values, one per entry of `times`.
    std::optional<std::vector<double>> truth;
};

struct ExperimentConfig {
    std::string name = "experiment";
    ScenarioConfig scenario;
    std::size_t replications = 100;
    std::vector<EstimatorKind> estimators{EstimatorKind::AJ};
    std::vector<Target> targets;
    std::vector<BootstrapMethod> ci_methods;
    std::size_t B = default_bootstrap_replicates;
    double level = 0.95;
    /// 0 means every target carries supplied truth values.
    std::size_t oracle_size = 100000;
    std::uint64_t master_seed = 1;

    void validate() const {
        scenario.validate();
        if (replications < 1) throw std::invalid_argument("replications must be >= 1");
        if (targets.empty()) throw std::invalid_argument("no targets");
        if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0,1)");
        if (!ci_methods.empty() && B < 2) throw std::invalid_argument("bootstrap needs B >= 2");
        if (oracle_size > 0 && oracle_size < 10 * scenario.n)
            throw std::invalid_argument("oracle sample must be at least 10 times the study size");
        for (const auto& t : targets) {
            if (t.times.empty() && !t.curve) throw std::invalid_argument("target " + t.label + " has no times");
            if (oracle_size == 0 && !t.truth) throw std::invalid_argument("target " + t.label + " needs supplied truth");
            if (t.truth && t.truth->size() != t.times.size())
                throw std::invalid_argument("target " + t.label + ": one truth value per time required");
            if (t.kind == EstimandKind::Occupation && !std::holds_alternative<initial::CommonState>(t.initial) &&
                std::find(ci_methods.begin(), ci_methods.end(), BootstrapMethod::Wild) != ci_methods.end())
                throw std::invalid_argument("wild bootstrap of occupation needs a common initial state");
        }
    }
};

// ---------------------------------------------------------------------------
// Oracle.

/// Complete (untruncated, uncensored) paths from a scenario.
class Oracle {
public:
    Oracle(const ScenarioConfig& scenario, std::size_t size, std::uint64_t seed)
        : paths_(simulate_latent(scenario, size, seed)) {
        for (const auto& p : paths_) {
            absorption_.push_back(p.z2);
            events_.push_back(p.z2);
            if (p.z1) events_.push_back(*p.z1);
        }
    }

    explicit Oracle(std::vector<LatentPath> paths) : paths_(std::move(paths)) {
        for (const auto& p : paths_) {
            absorption_.push_back(p.z2);
            events_.push_back(p.z2);
            if (p.z1) events_.push_back(*p.z1);
        }
    }

    const std::vector<LatentPath>& paths() const noexcept { return paths_; }

    double occupation(State m, double t) const {
        std::size_t c = 0;
        for (const auto& p : paths_) c += p.state_at(t) == m;
        return static_cast<double>(c) / static_cast<double>(paths_.size());
    }

    /// Empirical P(X(t) = m | X(s) = l).
    double transition(State l, State m, double s, double t) const {
        std::size_t base = 0, hit = 0;
        for (const auto& p : paths_) {
            if (p.state_at(s) != l) continue;
            ++base;
            hit += p.state_at(t) == m;
        }
        if (base == 0) throw NotEstimable("oracle: nobody in the conditioning state");
        return static_cast<double>(hit) / static_cast<double>(base);
    }

    /// Nelson-Aalen estimate on the complete sample.
    double cumulative_hazard(State l, State m, double t) const {
        if (!hazard_) hazard_ = nelson_aalen(build_event_table(complete()));
        return hazard_->cumulative(t, l, m);
    }

    double absorption_quantile(double q) const { return empirical_quantile(absorption_, q); }
    double event_quantile(double q) const { return empirical_quantile(events_, q); }

    double resolve(const TimeSpec& ts) const {
        switch (ts.kind) {
            case TimeSpec::Kind::Value: return ts.value;
            case TimeSpec::Kind::AbsorptionQuantile: return absorption_quantile(ts.value);
            case TimeSpec::Kind::EventQuantile: return event_quantile(ts.value);
        }
        return ts.value;
    }

    Dataset complete() const {
        std::vector<Subject> subjects;
        subjects.reserve(paths_.size());
        for (std::size_t i = 0; i < paths_.size(); ++i)
            subjects.push_back(observe_from(paths_[i], 0.0, "S" + std::to_string(i + 1)));
        return Dataset::trusted(StateSpace::illness_death(), std::move(subjects));
    }

private:
    std::vector<LatentPath> paths_;
    std::vector<double> absorption_, events_;
    mutable std::optional<CumulativeHazardMatrix> hazard_;
};

/// True value of a target's estimand at (s, t) under the oracle law.
inline double oracle_value(const Oracle& oracle, const Target& target, double s, double t) {
    switch (target.kind) {
        case EstimandKind::Occupation: return oracle.occupation(target.to, t);
        case EstimandKind::Transition: return oracle.transition(target.from, target.to, s, t);
        case EstimandKind::CumulativeHazard: return oracle.cumulative_hazard(target.from, target.to, t);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline std::vector<double> true_value_oracle(const ScenarioConfig& scenario, const Target& target,
                                             const std::vector<double>& times, std::size_t n_oracle,
                                             std::uint64_t seed) {
    const Oracle oracle(scenario, n_oracle, seed);
    const double s = oracle.resolve(target.s);
    std::vector<double> out;
    for (double t : times) out.push_back(oracle_value(oracle, target, s, t));
    return out;
}

// ---------------------------------------------------------------------------
// Estimation on one dataset.

namespace detail {

inline double clamp_for(EstimandKind k, double v) {
    return k == EstimandKind::CumulativeHazard ? v : std::clamp(v, 0.0, 1.0);
}

}  // namespace detail

/// Point estimates of a target at `times` (with landmark/origin s), or empty
/// when not estimable on this dataset.
inline std::optional<std::vector<double>> estimate_target(const Dataset& data, const Target& target,
                                                          EstimatorKind estimator, double s,
                                                          const std::vector<double>& times) {
    if (data.empty()) return std::nullopt;
    std::vector<double> out;
    out.reserve(times.size());
    try {
        switch (target.kind) {
            case EstimandKind::Occupation: {
                const auto curve = state_occupation(data, target.initial);
                for (double t : times) out.push_back(curve.at(t)(target.to));
                break;
            }
            case EstimandKind::Transition: {
                if (estimator == EstimatorKind::LMAJ) {
                    const auto curve = landmark_curve(data, s, target.from);
                    for (double t : times) out.push_back(curve.at(t)(target.to));
                } else {
                    RowVector start = RowVector::Zero(data.state_space().size());
                    start(target.from) = 1.0;
                    const auto curve = transition_curve(nelson_aalen(build_event_table(data)), s, start);
                    for (double t : times) out.push_back(curve.at(t)(target.to));
                }
                break;
            }
            case EstimandKind::CumulativeHazard: {
                const auto haz = nelson_aalen(build_event_table(data));
                for (double t : times) out.push_back(haz.cumulative(t, target.from, target.to));
                break;
            }
        }
    } catch (const NotEstimable&) {
        return std::nullopt;
    }
    return out;
}

/// Bootstrap sample matching estimate_target's output layout (one column per time).
inline BootstrapSample bootstrap_target(const Dataset& data, const Target& target, EstimatorKind estimator, double s,
                                        const std::vector<double>& times, BootstrapMethod method, std::size_t B,
                                        std::uint64_t seed) {
    if (method == BootstrapMethod::Efron) {
        return efron_bootstrap(
            data, [&](const Dataset& d) { return estimate_target(d, target, estimator, s, times); }, B, seed);
    }
    switch (target.kind) {
        case EstimandKind::CumulativeHazard: {
            const auto table = build_event_table(data);
            auto grid = wild_bootstrap_nelson_aalen(table, {target.from, target.to}, B, seed);
            BootstrapSample out = grid;
            out.times = times;
            out.replicates.clear();
            for (const auto& rep : grid.replicates) {
                std::vector<double> row;
                for (double t : times) {
                    auto it = std::upper_bound(grid.times.begin(), grid.times.end(), t);
                    row.push_back(it == grid.times.begin() ? 0.0 : rep[static_cast<std::size_t>(it - grid.times.begin()) - 1]);
                }
                out.replicates.push_back(std::move(row));
            }
            return out;
        }
        case EstimandKind::Occupation: {
            const State j = std::get<initial::CommonState>(target.initial).state;
            return wild_bootstrap_transition_probability(build_event_table(data), 0.0, {j, target.to}, times, B, seed);
        }
        case EstimandKind::Transition: {
            if (estimator == EstimatorKind::LMAJ) {
                const Dataset sub = landmark_subset(data, s, target.from);
                if (sub.empty()) throw NotEstimable("empty landmark subset");
                return wild_bootstrap_transition_probability(build_event_table(sub), s, {target.from, target.to}, times,
                                                             B, seed);
            }
            return wild_bootstrap_transition_probability(build_event_table(data), s, {target.from, target.to}, times, B,
                                                         seed);
        }
    }
    throw std::logic_error("unhandled estimand");
}

// ---------------------------------------------------------------------------
// Experiment.

struct MetricsRow {
    std::string label;
    std::string estimator;
    std::string method;  ///< CI method or "none"
    std::size_t n = 0;
    double s = 0.0;
    double t = 0.0;
    double truth = 0.0;
    double n_bar = 0.0;
    double mean = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
    double coverage_pct = std::numeric_limits<double>::quiet_NaN();
    std::size_t replications_used = 0;
    std::size_t not_estimable = 0;
    std::size_t degenerate_ci = 0;
    std::size_t unreliable_ci = 0;
    bool failed = false;
};

struct ErrorSummary {
    double mean = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
};

inline ErrorSummary summarize_errors(const std::vector<double>& estimates, double truth) {
    if (estimates.empty()) throw std::invalid_argument("no estimates to summarize");
    double sum = 0.0, sq = 0.0;
    for (double v : estimates) {
        sum += v;
        sq += (v - truth) * (v - truth);
    }
    const double n = static_cast<double>(estimates.size());
    return {sum / n, sum / n - truth, std::sqrt(sq / n)};
}

struct CurvePoint {
    double t, truth, mean, lower, upper;
    std::size_t used;
};

struct CurveResult {
    std::string label;
    std::string estimator;
    std::vector<CurvePoint> points;
};

struct ExperimentResult {
    std::vector<MetricsRow> rows;
    std::vector<CurveResult> curves;
    double mean_included = 0.0;
    /// Fraction of simulated subjects included, and of those entering at time 0.
    double inclusion_fraction = 0.0;
    double origin_entry_fraction = 0.0;
    std::size_t insufficient_type_ii = 0;
};

namespace detail {

struct ResolvedTarget {
    double s = 0.0;
    std::vector<double> times;
    std::vector<double> truth;
    std::vector<double> grid;
    std::vector<double> grid_truth;
};

struct CellResult {
    std::optional<std::vector<double>> estimate;
    /// Per CI method: per time, 1 covered / 0 not; -1 when no interval.
    std::vector<std::vector<int>> covered;
    std::vector<std::vector<char>> degenerate;
    std::vector<std::vector<char>> unreliable;
    std::optional<std::vector<double>> curve;
};

struct ReplicationResult {
    std::size_t included = 0;
    std::size_t origin_entries = 0;
    bool insufficient = false;
    /// [target][estimator slot]
    std::vector<std::vector<CellResult>> cells;
};

inline std::vector<double> linspace(double a, double b, std::size_t points) {
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i)
        g[i] = points == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
    return g;
}

}  // namespace detail

inline std::vector<EstimatorKind> estimators_for(const ExperimentConfig& config, const Target& target) {
    std::vector<EstimatorKind> out;
    for (auto e : config.estimators)
        if (applicable(e, target.kind)) out.push_back(e);
    return out;
}

/// Runs all replications on `threads` workers. Output is independent of the
/// worker count: every replication draws from its own substreams and results
/// are reduced in replication order.
inline ExperimentResult run_experiment(const ExperimentConfig& config, unsigned threads = 1) {
    config.validate();

    std::optional<Oracle> oracle;
    if (config.oracle_size > 0)
        oracle.emplace(config.scenario, config.oracle_size, derive_seed(config.master_seed, {stream::oracle}));

    std::vector<detail::ResolvedTarget> resolved;
    for (const auto& target : config.targets) {
        detail::ResolvedTarget r;
        auto resolve = [&](const TimeSpec& ts) {
            if (ts.kind == TimeSpec::Kind::Value) return ts.value;
            if (!oracle) throw std::invalid_argument("quantile-defined times need a large-sample oracle");
            return oracle->resolve(ts);
        };
        r.s = target.kind == EstimandKind::Transition ? resolve(target.s) : 0.0;
        for (const auto& ts : target.times) r.times.push_back(resolve(ts));
        for (double t : r.times)
            if (t < r.s) throw std::invalid_argument("target " + target.label + ": time before s");
        if (target.truth)
            r.truth = *target.truth;
        else
            for (double t : r.times) r.truth.push_back(oracle_value(*oracle, target, r.s, t));
        if (target.curve) {
            const double from = std::max(target.curve->from, r.s);
            r.grid = detail::linspace(from, resolve(target.curve->to), target.curve->points);
            if (!oracle) throw std::invalid_argument("curves need a large-sample oracle");
            for (double t : r.grid) r.grid_truth.push_back(oracle_value(*oracle, target, r.s, t));
        }
        resolved.push_back(std::move(r));
    }

    const std::size_t R = config.replications;
    std::vector<detail::ReplicationResult> results(R);

    auto run_one = [&](std::size_t rep) {
        const std::uint64_t seed = derive_seed(config.master_seed, {stream::replication, rep});
        const Study study = simulate_study(config.scenario, seed);
        const Dataset& data = study.data;
        detail::ReplicationResult& out = results[rep];
        out.included = data.size();
        for (const auto& s : data.subjects()) out.origin_entries += s.entry() == 0.0;
        out.insufficient = study.insufficient_events;
        out.cells.resize(config.targets.size());
        for (std::size_t ti = 0; ti < config.targets.size(); ++ti) {
            const Target& target = config.targets[ti];
            const auto& rt = resolved[ti];
            const auto ests = estimators_for(config, target);
            out.cells[ti].resize(ests.size());
            for (std::size_t ei = 0; ei < ests.size(); ++ei) {
                detail::CellResult& cell = out.cells[ti][ei];
                if (!rt.grid.empty()) cell.curve = estimate_target(data, target, ests[ei], rt.s, rt.grid);
                if (rt.times.empty()) continue;
                cell.estimate = estimate_target(data, target, ests[ei], rt.s, rt.times);
                cell.covered.assign(config.ci_methods.size(), std::vector<int>(rt.times.size(), -1));
                cell.degenerate.assign(config.ci_methods.size(), std::vector<char>(rt.times.size(), 0));
                cell.unreliable.assign(config.ci_methods.size(), std::vector<char>(rt.times.size(), 0));
                if (!cell.estimate) continue;
                const ValueRange range =
                    target.kind == EstimandKind::CumulativeHazard ? nonnegative_range : probability_range;
                for (std::size_t mi = 0; mi < config.ci_methods.size(); ++mi) {
                    const auto method = config.ci_methods[mi];
                    const std::uint64_t bseed = derive_seed(seed, {stream::bootstrap, ti, ei, static_cast<std::uint64_t>(method)});
                    std::optional<BootstrapSample> sample;
                    try {
                        sample = bootstrap_target(data, target, ests[ei], rt.s, rt.times, method, config.B, bseed);
                    } catch (const NotEstimable&) {
                    }
                    for (std::size_t k = 0; k < rt.times.size(); ++k) {
                        const double point = (*cell.estimate)[k];
                        ConfidenceInterval ci{point, point, config.level, point, false};
                        if (sample) {
                            try {
                                ci = standardized_quantile_ci(*sample, point, data.size(), config.level, k, range);
                            } catch (const DegenerateSample&) {
                                cell.degenerate[mi][k] = 1;
                            }
                        } else {
                            cell.degenerate[mi][k] = 1;
                        }
                        cell.unreliable[mi][k] = ci.unreliable;
                        cell.covered[mi][k] = ci.contains(rt.truth[k]) ? 1 : 0;
                    }
                }
            }
        }
    };

    threads = std::max(1u, threads);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t rep = next.fetch_add(1);
            if (rep >= R) return;
            try {
                run_one(rep);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(R);
                return;
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    // Reduction in replication order.
    ExperimentResult res;
    double included = 0.0, origin = 0.0;
    for (const auto& r : results) {
        included += static_cast<double>(r.included);
        origin += static_cast<double>(r.origin_entries);
        res.insufficient_type_ii += r.insufficient;
    }
    res.mean_included = included / static_cast<double>(R);
    res.inclusion_fraction = included / (static_cast<double>(R) * static_cast<double>(config.scenario.n));
    res.origin_entry_fraction = origin / (static_cast<double>(R) * static_cast<double>(config.scenario.n));

    for (std::size_t ti = 0; ti < config.targets.size(); ++ti) {
        const Target& target = config.targets[ti];
        const auto& rt = resolved[ti];
        const auto ests = estimators_for(config, target);
        for (std::size_t ei = 0; ei < ests.size(); ++ei) {
            for (std::size_t k = 0; k < rt.times.size(); ++k) {
                std::vector<double> values;
                double nbar = 0.0;
                for (const auto& r : results) {
                    const auto& cell = r.cells[ti][ei];
                    if (!cell.estimate) continue;
                    values.push_back((*cell.estimate)[k]);
                    nbar += static_cast<double>(r.included);
                }
                const std::size_t used = values.size();
                MetricsRow base;
                base.label = target.label;
                base.estimator = to_string(ests[ei]);
                base.n = config.scenario.n;
                base.s = rt.s;
                base.t = rt.times[k];
                base.truth = rt.truth[k];
                base.replications_used = used;
                base.not_estimable = R - used;
                base.failed = 2 * used < R;
                if (used > 0) {
                    const auto err = summarize_errors(values, rt.truth[k]);
                    base.mean = err.mean;
                    base.bias = err.bias;
                    base.rmse = err.rmse;
                    base.n_bar = nbar / static_cast<double>(used);
                }
                if (config.ci_methods.empty()) {
                    base.method = "none";
                    res.rows.push_back(base);
                    continue;
                }
                for (std::size_t mi = 0; mi < config.ci_methods.size(); ++mi) {
                    MetricsRow row = base;
                    row.method = to_string(config.ci_methods[mi]);
                    std::size_t covered = 0, with_ci = 0;
                    for (const auto& r : results) {
                        const auto& cell = r.cells[ti][ei];
                        if (!cell.estimate) continue;
                        const int c = cell.covered[mi][k];
                        if (c < 0) continue;
                        ++with_ci;
                        covered += static_cast<std::size_t>(c);
                        row.degenerate_ci += static_cast<std::size_t>(cell.degenerate[mi][k]);
                        row.unreliable_ci += static_cast<std::size_t>(cell.unreliable[mi][k]);
                    }
                    if (with_ci > 0)
                        row.coverage_pct = 100.0 * static_cast<double>(covered) / static_cast<double>(with_ci);
                    res.rows.push_back(row);
                }
            }
            if (!rt.grid.empty()) {
                CurveResult curve{target.label, to_string(ests[ei]), {}};
                for (std::size_t g = 0; g < rt.grid.size(); ++g) {
                    std::vector<double> vals;
                    for (const auto& r : results) {
                        const auto& cell = r.cells[ti][ei];
                        if (cell.curve) vals.push_back((*cell.curve)[g]);
                    }
                    CurvePoint p{rt.grid[g], rt.grid_truth[g], std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                                 vals.size()};
                    if (!vals.empty()) {
                        double sum = 0.0;
                        for (double v : vals) sum += v;
                        p.mean = sum / static_cast<double>(vals.size());
                        p.lower = empirical_quantile(vals, 0.025);
                        p.upper = empirical_quantile(vals, 0.975);
                    }
                    curve.points.push_back(p);
                }
                res.curves.push_back(std::move(curve));
            }
        }
    }
    return res;
}

}  // namespace msm
