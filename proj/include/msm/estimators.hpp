#pragma once

// Nelson-Aalen, product integral (Aalen-Johansen), state occupation,
// landmark Aalen-Johansen, and a one-covariate Cox fit for checking the
// Markov assumption.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <variant>
#include <vector>

#include "msm/core.hpp"

namespace msm {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Right-continuous step function of Nelson-Aalen increments. Each increment
/// has off-diagonals dN_lm/Y_l and rows summing to zero.
class CumulativeHazardMatrix {
public:
    CumulativeHazardMatrix() = default;
    CumulativeHazardMatrix(int num_states, std::size_t n) : num_states_(num_states), n_(n) {}

    int num_states() const noexcept { return num_states_; }
    std::size_t n() const noexcept { return n_; }
    std::size_t size() const noexcept { return times_.size(); }
    const std::vector<double>& times() const noexcept { return times_; }
    const Matrix& increment(std::size_t j) const { return increments_[j]; }

    void push(double t, Matrix increment) {
        times_.push_back(t);
        increments_.push_back(std::move(increment));
    }

    /// Index one past the last jump at or before t.
    std::size_t upper(double t) const {
        return static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
    }

    Matrix cumulative(double t) const {
        Matrix a = Matrix::Zero(num_states_, num_states_);
        for (std::size_t j = 0, e = upper(t); j < e; ++j) a += increments_[j];
        return a;
    }

    double cumulative(double t, State l, State m) const {
        double a = 0.0;
        for (std::size_t j = 0, e = upper(t); j < e; ++j) a += increments_[j](l, m);
        return a;
    }

private:
    int num_states_ = 0;
    std::size_t n_ = 0;
    std::vector<double> times_;
    std::vector<Matrix> increments_;
};

/// Step function of probability row vectors starting at `origin`.
struct ProbabilityCurve {
    double origin = 0.0;
    RowVector initial;
    std::vector<double> times;
    std::vector<RowVector> values;

    const RowVector& at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return initial;
        return values[static_cast<std::size_t>(it - times.begin()) - 1];
    }
};

inline CumulativeHazardMatrix nelson_aalen(const EventTable& table) {
    const int k = table.num_states();
    CumulativeHazardMatrix haz(k, table.n());
    for (std::size_t j = 0; j < table.size(); ++j) {
        Matrix d = Matrix::Zero(k, k);
        for (State l = 0; l < k; ++l) {
            const int y = table.Y(j, l);
            if (y == 0) continue;
            double row = 0.0;
            for (State m = 0; m < k; ++m) {
                if (m == l) continue;
                const int dn = table.dN(j, l, m);
                if (dn == 0) continue;
                d(l, m) = static_cast<double>(dn) / y;
                row += d(l, m);
            }
            d(l, l) = -row;
        }
        haz.push(table.time(j), std::move(d));
    }
    return haz;
}

namespace detail {

inline void clamp_probabilities(Matrix& p) {
    p = p.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace detail

/// Ordered product of (I + dA(u)) over jump times u in (s, t].
inline Matrix product_integral(const CumulativeHazardMatrix& haz, double s, double t) {
    if (s > t) throw std::invalid_argument("product_integral: s > t");
    const int k = haz.num_states();
    Matrix p = Matrix::Identity(k, k);
    const auto& times = haz.times();
    auto first = std::upper_bound(times.begin(), times.end(), s) - times.begin();
    for (std::size_t j = static_cast<std::size_t>(first); j < times.size() && times[j] <= t; ++j)
        p = p * (Matrix::Identity(k, k) + haz.increment(j));
    detail::clamp_probabilities(p);
    return p;
}

/// Row l of P(s, .) as a step function over the jumps after s.
inline ProbabilityCurve transition_curve(const CumulativeHazardMatrix& haz, double s, const RowVector& start) {
    const int k = haz.num_states();
    ProbabilityCurve curve{s, start, {}, {}};
    RowVector p = start;
    const auto& times = haz.times();
    for (std::size_t j = haz.upper(s); j < times.size(); ++j) {
        p = p * (Matrix::Identity(k, k) + haz.increment(j));
        p = p.cwiseMax(0.0).cwiseMin(1.0);
        curve.times.push_back(times[j]);
        curve.values.push_back(p);
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Initial distribution policies.

namespace initial {
struct CommonState {
    State state;
};
struct Multinomial {};
struct AtRiskRenormalized {};
struct Supplied {
    std::vector<double> p;
};
}  // namespace initial

using InitialPolicy =
    std::variant<initial::CommonState, initial::Multinomial, initial::AtRiskRenormalized, initial::Supplied>;

inline RowVector initial_distribution(const Dataset& data, const InitialPolicy& policy) {
    const int k = data.state_space().size();
    RowVector p = RowVector::Zero(k);
    struct Visitor {
        const Dataset& data;
        RowVector& p;
        int k;
        void operator()(const initial::CommonState& c) const {
            if (c.state < 0 || c.state >= k) throw std::invalid_argument("common initial state outside state space");
            p(c.state) = 1.0;
        }
        void operator()(const initial::Multinomial&) const {
            for (const auto& s : data.subjects())
                if (s.entry() != 0.0)
                    throw std::invalid_argument("multinomial initial distribution requires all subjects entering at 0");
            if (data.empty()) throw NotEstimable("multinomial initial distribution of an empty dataset");
            auto y = at_risk_at_origin(data);
            for (int j = 0; j < k; ++j) p(j) = static_cast<double>(y[j]) / static_cast<double>(data.size());
        }
        void operator()(const initial::AtRiskRenormalized&) const {
            auto y = at_risk_at_origin(data);
            int total = 0;
            for (int v : y) total += v;
            if (total == 0) throw NotEstimable("nobody at risk at time 0+");
            for (int j = 0; j < k; ++j) p(j) = static_cast<double>(y[j]) / total;
        }
        void operator()(const initial::Supplied& s) const {
            if (static_cast<int>(s.p.size()) != k) throw std::invalid_argument("supplied initial vector has wrong length");
            double sum = 0.0;
            for (double v : s.p) {
                if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("supplied initial vector entry outside [0,1]");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-10) throw std::invalid_argument("supplied initial vector does not sum to 1");
            for (int j = 0; j < k; ++j) p(j) = s.p[j];
        }
    };
    std::visit(Visitor{data, p, k}, policy);
    return p;
}

inline ProbabilityCurve state_occupation(const Dataset& data, const InitialPolicy& policy) {
    const RowVector p0 = initial_distribution(data, policy);
    return transition_curve(nelson_aalen(build_event_table(data)), 0.0, p0);
}

/// Aalen-Johansen estimate of row l of P(s, t) from the full data.
inline RowVector aalen_johansen_row(const CumulativeHazardMatrix& haz, double s, State l, double t) {
    return product_integral(haz, s, t).row(l);
}

/// Row l of the product integral over (s, t] in the landmark subsample of
/// subjects observed in l at s.
inline RowVector landmark_aalen_johansen(const Dataset& data, double s, State l, double t) {
    if (s > t) throw std::invalid_argument("landmark_aalen_johansen: s > t");
    const Dataset sub = landmark_subset(data, s, l);
    if (sub.empty()) throw NotEstimable("no subject observed in the landmark state at the landmark time");
    return product_integral(nelson_aalen(build_event_table(sub)), s, t).row(l);
}

inline ProbabilityCurve landmark_curve(const Dataset& data, double s, State l) {
    const Dataset sub = landmark_subset(data, s, l);
    if (sub.empty()) throw NotEstimable("no subject observed in the landmark state at the landmark time");
    RowVector start = RowVector::Zero(data.state_space().size());
    start(l) = 1.0;
    return transition_curve(nelson_aalen(build_event_table(sub)), s, start);
}

// ---------------------------------------------------------------------------
// Cox check: hazard of exposure -> event with the time of entering the
// exposure state as covariate, delayed entry into the risk set.

struct CoxFit {
    double beta = 0.0;
    double hazard_ratio = 1.0;
    double std_err = std::numeric_limits<double>::infinity();
    double ci_lower = 0.0;
    double ci_upper = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    std::size_t subjects = 0;
    std::size_t events = 0;
    double log_likelihood = 0.0;
};

struct CoxOptions {
    double tolerance = 1e-8;
    int max_iterations = 50;
};

/// Counting-process data for a single-covariate Cox model.
struct CoxData {
    std::vector<double> start, stop, z;
    std::vector<bool> event;
};

inline CoxData cox_data_from(const Dataset& data, State exposure_state, State event_state) {
    CoxData cd;
    for (const auto& s : data.subjects())
        for (std::size_t k = 1; k < s.records.size(); ++k) {
            const Record& r = s.records[k];
            if (r.from != exposure_state) continue;
            // Entry into the exposure state is observed as the previous record's transition.
            cd.start.push_back(r.entry);
            cd.stop.push_back(r.exit);
            cd.z.push_back(r.entry);
            cd.event.push_back(r.to && *r.to == event_state);
        }
    return cd;
}

namespace detail {

struct CoxState {
    double loglik, score, info;
};

/// Breslow log partial likelihood, score and observed information at beta.
/// `event_times` must be sorted ascending and unique. Risk sets (start, stop]
/// are maintained by a sweep from the latest event time backwards.
inline CoxState cox_evaluate(const CoxData& cd, const std::vector<double>& event_times, double beta) {
    CoxState st{0.0, 0.0, 0.0};
    const std::size_t n = cd.z.size();
    std::vector<std::size_t> by_stop(n), by_start(n);
    std::iota(by_stop.begin(), by_stop.end(), std::size_t{0});
    std::iota(by_start.begin(), by_start.end(), std::size_t{0});
    std::sort(by_stop.begin(), by_stop.end(), [&](auto a, auto b) { return cd.stop[a] > cd.stop[b]; });
    std::sort(by_start.begin(), by_start.end(), [&](auto a, auto b) { return cd.start[a] > cd.start[b]; });
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(beta * cd.z[i]);

    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    std::size_t in = 0, out = 0;
    for (auto it = event_times.rbegin(); it != event_times.rend(); ++it) {
        const double t = *it;
        for (; in < n && cd.stop[by_stop[in]] >= t; ++in) {
            const std::size_t i = by_stop[in];
            s0 += w[i], s1 += w[i] * cd.z[i], s2 += w[i] * cd.z[i] * cd.z[i];
        }
        for (; out < n && cd.start[by_start[out]] >= t; ++out) {
            const std::size_t i = by_start[out];  // already added: stop > start >= t
            s0 -= w[i], s1 -= w[i] * cd.z[i], s2 -= w[i] * cd.z[i] * cd.z[i];
        }
        double zsum = 0.0;
        int d = 0;
        // events at exactly t sit at the front of the stop-ordered block just added
        for (std::size_t k = in; k-- > 0 && cd.stop[by_stop[k]] == t;)
            if (cd.event[by_stop[k]]) ++d, zsum += cd.z[by_stop[k]];
        const double mean = s1 / s0;
        st.loglik += beta * zsum - d * std::log(s0);
        st.score += zsum - d * mean;
        st.info += d * (s2 / s0 - mean * mean);
    }
    return st;
}

}  // namespace detail

/// Newton-Raphson with step halving on the centered covariate.
inline CoxFit cox_fit(CoxData cd, const CoxOptions& opt = {}) {
    CoxFit fit;
    fit.subjects = cd.z.size();
    std::vector<double> event_times;
    for (std::size_t i = 0; i < cd.z.size(); ++i)
        if (cd.event[i]) event_times.push_back(cd.stop[i]);
    std::sort(event_times.begin(), event_times.end());
    fit.events = event_times.size();
    event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());
    if (event_times.empty()) throw NotEstimable("no exposure-to-event transitions");

    double mean = 0.0;
    for (double v : cd.z) mean += v;
    mean /= static_cast<double>(cd.z.size());
    for (double& v : cd.z) v -= mean;

    double beta = 0.0;
    auto st = detail::cox_evaluate(cd, event_times, beta);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        fit.iterations = it;
        if (std::abs(st.score) < opt.tolerance) {
            fit.converged = true;
            break;
        }
        if (!(st.info > 0.0)) break;
        double step = st.score / st.info;
        auto next = detail::cox_evaluate(cd, event_times, beta + step);
        // halve only on a genuine decrease; differences below roundoff are accepted
        const double slack = 1e-10 * (1.0 + std::abs(st.loglik));
        for (int h = 0; h < 30 && !(next.loglik >= st.loglik - slack); ++h) {
            step /= 2.0;
            next = detail::cox_evaluate(cd, event_times, beta + step);
        }
        beta += step;
        st = next;
    }
    if (!fit.converged && std::abs(st.score) < opt.tolerance) fit.converged = true;

    fit.beta = beta;
    fit.hazard_ratio = std::exp(beta);
    fit.log_likelihood = st.loglik;
    if (st.info > 0.0) {
        fit.std_err = 1.0 / std::sqrt(st.info);
        fit.ci_lower = std::exp(beta - 1.96 * fit.std_err);
        fit.ci_upper = std::exp(beta + 1.96 * fit.std_err);
    }
    return fit;
}

inline CoxFit cox_markov_check(const Dataset& data, State exposure_state, State event_state,
                               const CoxOptions& opt = {}) {
    auto cd = cox_data_from(data, exposure_state, event_state);
    if (cd.z.empty()) throw NotEstimable("no subject with an observed entry into the exposure state");
    return cox_fit(std::move(cd), opt);
}

}  // namespace msm
