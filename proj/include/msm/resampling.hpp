#pragma once

// Efron's bootstrap over subjects, the wild (multiplier) bootstrap for the
// Nelson-Aalen estimator and its linearized transform onto transition
// probabilities, and standardized-quantile confidence intervals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "msm/core.hpp"
#include "msm/estimators.hpp"
#include "msm/random.hpp"

namespace msm {

enum class BootstrapMethod { Efron, Wild };

inline std::string to_string(BootstrapMethod m) { return m == BootstrapMethod::Efron ? "efron" : "wild"; }

inline BootstrapMethod parse_bootstrap_method(const std::string& s) {
    if (s == "efron") return BootstrapMethod::Efron;
    if (s == "wild") return BootstrapMethod::Wild;
    throw std::invalid_argument("unknown bootstrap method '" + s + "'");
}

inline constexpr std::size_t default_bootstrap_replicates = 1000;

struct BootstrapSample {
    BootstrapMethod method = BootstrapMethod::Efron;
    std::uint64_t seed = 0;
    std::size_t B = 0;
    /// Evaluation grid when each replicate is a step function; empty otherwise.
    std::vector<double> times;
    /// Estimable replicates only, each of the same dimension.
    std::vector<std::vector<double>> replicates;
    std::size_t dropped = 0;
    /// Replicates hold theta* - theta_hat rather than theta*.
    bool centered = false;

    std::size_t dim() const { return replicates.empty() ? 0 : replicates.front().size(); }

    std::vector<double> column(std::size_t j) const {
        std::vector<double> c;
        c.reserve(replicates.size());
        for (const auto& r : replicates) c.push_back(r.at(j));
        return c;
    }

    /// Column of the step function in force at t (requires a time grid).
    std::size_t column_at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) throw std::out_of_range("time before first grid point");
        return static_cast<std::size_t>(it - times.begin()) - 1;
    }

    /// More than 10% of replicates not estimable.
    bool unreliable() const { return static_cast<double>(dropped) > 0.1 * static_cast<double>(B); }
};

/// Draws n subjects with replacement; records travel with their subject.
inline Dataset efron_resample(const Dataset& data, Rng& rng) {
    const auto& subjects = data.subjects();
    std::vector<Subject> out;
    out.reserve(subjects.size());
    if (subjects.empty()) return Dataset::trusted(data.state_space(), {});
    std::uniform_int_distribution<std::size_t> pick(0, subjects.size() - 1);
    for (std::size_t i = 0; i < subjects.size(); ++i) out.push_back(subjects[pick(rng)]);
    return Dataset::trusted(data.state_space(), std::move(out));
}

/// `statistic` maps a Dataset to std::optional<double> or
/// std::optional<std::vector<double>>; an empty optional marks a replicate
/// as not estimable.
template <class Statistic>
BootstrapSample efron_bootstrap(const Dataset& data, Statistic&& statistic, std::size_t B, std::uint64_t seed) {
    if (B < 1) throw std::invalid_argument("bootstrap needs B >= 1");
    BootstrapSample sample;
    sample.method = BootstrapMethod::Efron;
    sample.seed = seed;
    sample.B = B;
    sample.replicates.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
        Rng rng = substream(seed, {stream::bootstrap, b});
        const Dataset resampled = efron_resample(data, rng);
        auto value = statistic(resampled);
        if (!value) {
            ++sample.dropped;
            continue;
        }
        if constexpr (std::is_convertible_v<decltype(*value), double>)
            sample.replicates.push_back({static_cast<double>(*value)});
        else
            sample.replicates.push_back(std::vector<double>(value->begin(), value->end()));
    }
    if (sample.replicates.empty()) throw NotEstimable("all bootstrap replicates not estimable");
    return sample;
}

// ---------------------------------------------------------------------------
// Wild bootstrap.

/// Sum over subjects of g_i * J_l / Y_l dN_{i;lm}, accumulated over the
/// table's time grid.
inline std::vector<double> wild_nelson_aalen_perturbation(const EventTable& table, TransitionPair tr,
                                                          std::span<const double> multipliers) {
    if (multipliers.size() != table.n()) throw std::invalid_argument("one multiplier per subject required");
    std::vector<double> out(table.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < table.size(); ++j) {
        const int y = table.Y(j, tr.from);
        if (y > 0) {
            for (const Jump& jp : table.jumps(j))
                if (jp.from == tr.from && jp.to == tr.to) acc += multipliers[jp.subject] / y;
        }
        out[j] = acc;
    }
    return out;
}

inline std::vector<double> standard_normal_multipliers(std::size_t n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> g(n);
    for (auto& v : g) v = normal(rng);
    return g;
}

/// Replicates of A*-A on the table's time grid; subject multipliers are
/// shared by all of that subject's jumps within a replicate.
inline BootstrapSample wild_bootstrap_nelson_aalen(const EventTable& table, TransitionPair tr, std::size_t B,
                                                   std::uint64_t seed) {
    if (B < 1) throw std::invalid_argument("bootstrap needs B >= 1");
    BootstrapSample sample;
    sample.method = BootstrapMethod::Wild;
    sample.seed = seed;
    sample.B = B;
    sample.centered = true;
    sample.times = table.times();
    sample.replicates.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
        Rng rng = substream(seed, {stream::bootstrap, b});
        const auto g = standard_normal_multipliers(table.n(), rng);
        sample.replicates.push_back(wild_nelson_aalen_perturbation(table, tr, g));
    }
    return sample;
}

namespace detail {

/// Perturbation matrix dW(u) at table index j: off-diagonals sum_i g_i dN_i/Y,
/// rows summing to zero.
inline Matrix wild_increment(const EventTable& table, std::size_t j, std::span<const double> g) {
    const int k = table.num_states();
    Matrix w = Matrix::Zero(k, k);
    for (const Jump& jp : table.jumps(j)) {
        const int y = table.Y(j, jp.from);
        if (y == 0) continue;
        const double v = g[jp.subject] / y;
        w(jp.from, jp.to) += v;
        w(jp.from, jp.from) -= v;
    }
    return w;
}

}  // namespace detail

/// First-order (compact derivative) transform of the wild perturbation onto
/// P_lm(s, t): sum over jumps u in (s, t] of P(s, u-) dW(u) P(u, t), for each t.
inline std::vector<double> wild_transition_perturbation(const EventTable& table, const CumulativeHazardMatrix& haz,
                                                        double s, TransitionPair row_col,
                                                        std::span<const double> eval_times,
                                                        std::span<const double> multipliers) {
    if (multipliers.size() != table.n()) throw std::invalid_argument("one multiplier per subject required");
    const int k = table.num_states();
    const Matrix eye = Matrix::Identity(k, k);
    const auto& times = table.times();
    const std::size_t first = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), s) - times.begin());
    std::vector<double> out;
    out.reserve(eval_times.size());
    for (double t : eval_times) {
        if (t < s) throw std::invalid_argument("evaluation time before s");
        const std::size_t last = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
        if (last <= first) {
            out.push_back(0.0);
            continue;
        }
        // after[j - first] = P(u_j, t)
        std::vector<Matrix> after(last - first);
        Matrix acc = eye;
        for (std::size_t j = last; j-- > first;) {
            after[j - first] = acc;
            acc = (eye + haz.increment(j)) * acc;
        }
        RowVector before = RowVector::Zero(k);
        before(row_col.from) = 1.0;
        double d = 0.0;
        for (std::size_t j = first; j < last; ++j) {
            const Matrix w = detail::wild_increment(table, j, multipliers);
            d += (before * w * after[j - first])(row_col.to);
            before = before * (eye + haz.increment(j));
        }
        out.push_back(d);
    }
    return out;
}

/// Wild bootstrap of the Aalen-Johansen estimate of P_lm(s, t) at each of
/// `eval_times`, through the linearized product integral.
inline BootstrapSample wild_bootstrap_transition_probability(const EventTable& table, double s, TransitionPair row_col,
                                                             std::vector<double> eval_times, std::size_t B,
                                                             std::uint64_t seed) {
    if (B < 1) throw std::invalid_argument("bootstrap needs B >= 1");
    const auto haz = nelson_aalen(table);
    BootstrapSample sample;
    sample.method = BootstrapMethod::Wild;
    sample.seed = seed;
    sample.B = B;
    sample.centered = true;
    sample.replicates.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
        Rng rng = substream(seed, {stream::bootstrap, b});
        const auto g = standard_normal_multipliers(table.n(), rng);
        sample.replicates.push_back(wild_transition_perturbation(table, haz, s, row_col, eval_times, g));
    }
    sample.times = std::move(eval_times);
    return sample;
}

// ---------------------------------------------------------------------------
// Confidence intervals.

/// Raised when the bootstrap distribution has zero spread.
class DegenerateSample : public NotEstimable {
public:
    using NotEstimable::NotEstimable;
};

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    double point = 0.0;
    bool unreliable = false;

    bool contains(double v) const { return lower <= v && v <= upper; }
};

struct ValueRange {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

inline constexpr ValueRange probability_range{0.0, 1.0};
inline constexpr ValueRange nonnegative_range{0.0, std::numeric_limits<double>::infinity()};

/// Lower inverse-ECDF quantile: the smallest sorted value with ECDF >= p.
inline double empirical_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::ceil(p * static_cast<double>(values.size()) - 1e-9);
    const auto idx = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(values.size()))) - 1;
    return values[idx];
}

inline double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Interval from the quantiles of W* = sqrt(n)(theta* - theta_hat)/sd* plugged
/// into the normal-theory formula in place of the normal quantiles.
inline ConfidenceInterval standardized_quantile_ci(const BootstrapSample& sample, double point, std::size_t n,
                                                   double level, std::size_t component = 0,
                                                   ValueRange range = {}) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0,1)");
    if (n == 0) throw std::invalid_argument("n must be positive");
    std::vector<double> dev = sample.column(component);
    if (!sample.centered)
        for (double& d : dev) d -= point;
    const double sd = sample_sd(dev);
    if (!(sd > 0.0)) throw DegenerateSample("bootstrap replicates have zero spread");

    const double root_n = std::sqrt(static_cast<double>(n));
    std::vector<double> w(dev.size());
    for (std::size_t b = 0; b < dev.size(); ++b) w[b] = root_n * dev[b] / sd;
    const double alpha = 1.0 - level;
    const double q_hi = empirical_quantile(w, 1.0 - alpha / 2.0);
    const double q_lo = empirical_quantile(w, alpha / 2.0);

    ConfidenceInterval ci;
    ci.level = level;
    ci.point = point;
    ci.lower = std::clamp(point - q_hi * sd / root_n, range.lo, range.hi);
    ci.upper = std::clamp(point - q_lo * sd / root_n, range.lo, range.hi);
    ci.lower = std::min(ci.lower, point);
    ci.upper = std::max(ci.upper, point);
    ci.unreliable = sample.unreliable();
    return ci;
}

}  // namespace msm
