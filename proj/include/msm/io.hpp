#pragma once

// Delimited-text exports and all-or-nothing file output.

#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "msm/estimators.hpp"
#include "msm/harness.hpp"
#include "msm/resampling.hpp"

namespace msm {

inline std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    return fmt::format("{:.10g}", v);
}

/// `time,state_or_pair,value` rows; one row per state per step, starting at the origin.
inline std::string occupation_csv(const ProbabilityCurve& curve) {
    std::string out = "time,state_or_pair,value\n";
    auto emit = [&](double t, const RowVector& p) {
        for (Eigen::Index m = 0; m < p.size(); ++m)
            out += fmt::format("{},{},{}\n", format_number(t), m, format_number(p(m)));
    };
    emit(curve.origin, curve.initial);
    for (std::size_t j = 0; j < curve.times.size(); ++j) emit(curve.times[j], curve.values[j]);
    return out;
}

inline std::string hazard_csv(const CumulativeHazardMatrix& haz, const std::vector<TransitionPair>& transitions) {
    std::string out = "time,state_or_pair,value\n";
    const int k = haz.num_states();
    Matrix acc = Matrix::Zero(k, k);
    for (std::size_t j = 0; j < haz.size(); ++j) {
        acc += haz.increment(j);
        for (auto [l, m] : transitions)
            out += fmt::format("{},{}-{},{}\n", format_number(haz.times()[j]), l, m, format_number(acc(l, m)));
    }
    return out;
}

inline std::string sample_csv(const BootstrapSample& sample, std::size_t component = 0) {
    std::string out = "replicate\n";
    for (double v : sample.column(component)) out += format_number(v) + "\n";
    return out;
}

inline std::string ci_csv(const std::vector<std::pair<double, ConfidenceInterval>>& rows) {
    std::string out = "time,lower,point,upper,level\n";
    for (const auto& [t, ci] : rows)
        out += fmt::format("{},{},{},{},{}\n", format_number(t), format_number(ci.lower), format_number(ci.point),
                           format_number(ci.upper), format_number(ci.level));
    return out;
}

inline std::string cox_summary(const CoxFit& fit) {
    std::string out = "{\n";
    out += fmt::format("  \"beta\": {},\n", format_number(fit.beta));
    out += fmt::format("  \"hazard_ratio\": {},\n", format_number(fit.hazard_ratio));
    out += fmt::format("  \"std_err\": {},\n", std::isfinite(fit.std_err) ? format_number(fit.std_err) : "null");
    out += fmt::format("  \"ci_95\": [{}, {}],\n", format_number(fit.ci_lower),
                       std::isfinite(fit.ci_upper) ? format_number(fit.ci_upper) : "null");
    out += fmt::format("  \"iterations\": {},\n", fit.iterations);
    out += fmt::format("  \"converged\": {},\n", fit.converged ? "true" : "false");
    out += fmt::format("  \"subjects\": {},\n", fit.subjects);
    out += fmt::format("  \"events\": {}\n", fit.events);
    out += "}\n";
    return out;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out =
        "label,estimator,method,n,s,t,truth,n_bar,mean,bias,rmse,coverage_pct,replications_used,not_estimable,"
        "degenerate_ci,unreliable_ci,status\n";
    for (const auto& r : rows)
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.label, r.estimator, r.method, r.n,
                           format_number(r.s), format_number(r.t), format_number(r.truth), format_number(r.n_bar),
                           format_number(r.mean), format_number(r.bias), format_number(r.rmse),
                           format_number(r.coverage_pct), r.replications_used, r.not_estimable, r.degenerate_ci,
                           r.unreliable_ci, r.failed ? "failed" : "ok");
    return out;
}

inline std::string curve_csv(const CurveResult& c) {
    std::string out = "time,truth,mean,lower,upper,used\n";
    for (const auto& p : c.points)
        out += fmt::format("{},{},{},{},{},{}\n", format_number(p.t), format_number(p.truth), format_number(p.mean),
                           format_number(p.lower), format_number(p.upper), p.used);
    return out;
}

inline std::string summary_csv(const ExperimentResult& r) {
    return fmt::format("mean_included,inclusion_fraction,origin_entry_fraction,insufficient_type_ii\n{},{},{},{}\n",
                       format_number(r.mean_included), format_number(r.inclusion_fraction),
                       format_number(r.origin_entry_fraction), r.insufficient_type_ii);
}

/// Collects file contents and writes them together: each goes to a temporary
/// sibling first, and nothing is left behind if any write fails.
class OutputSet {
public:
    void add(std::filesystem::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }

    void commit() const {
        std::vector<std::filesystem::path> temps;
        try {
            for (const auto& [path, content] : files_) {
                if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
                auto tmp = path;
                tmp += ".partial";
                temps.push_back(tmp);
                std::ofstream out(tmp, std::ios::binary);
                out << content;
                out.close();
                if (!out) throw std::runtime_error("cannot write " + path.string());
            }
            for (std::size_t i = 0; i < files_.size(); ++i) std::filesystem::rename(temps[i], files_[i].first);
        } catch (...) {
            std::error_code ec;
            for (const auto& t : temps) std::filesystem::remove(t, ec);
            throw;
        }
    }

private:
    std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

inline OutputSet experiment_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
    OutputSet out;
    out.add(dir / "metrics.csv", metrics_csv(result.rows));
    out.add(dir / "summary.csv", summary_csv(result));
    for (const auto& c : result.curves) out.add(dir / "curves" / (c.label + "_" + c.estimator + ".csv"), curve_csv(c));
    return out;
}

}  // namespace msm
