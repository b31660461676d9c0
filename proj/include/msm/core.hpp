#pragma once

// Data model for multi-state event histories observed under left-truncation
// and right-censoring, long-format ingestion, and reduction to counting and
// at-risk processes.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace msm {

using State = int;

/// Raised for malformed input or violated dataset invariants. `row` is the
/// 1-based line number in the source text (0 when not tied to a row).
class DataError : public std::runtime_error {
public:
    DataError(const std::string& what, std::size_t row = 0)
        : std::runtime_error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Raised when an estimand cannot be computed from the data at hand.
class NotEstimable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TransitionPair {
    State from;
    State to;
    friend bool operator==(const TransitionPair&, const TransitionPair&) = default;
};

class StateSpace {
public:
    StateSpace() = default;

    StateSpace(int num_states, std::vector<State> absorbing, std::vector<TransitionPair> allowed)
        : num_states_(num_states),
          absorbing_(static_cast<std::size_t>(num_states), false),
          allowed_(static_cast<std::size_t>(num_states * num_states), false) {
        if (num_states < 1) throw DataError("state space needs at least one state");
        for (State a : absorbing) {
            check_state(a);
            absorbing_[a] = true;
        }
        for (auto [l, m] : allowed) {
            check_state(l);
            check_state(m);
            if (l == m) throw DataError("transition " + std::to_string(l) + "->" + std::to_string(m) + " is not a state change");
            if (absorbing_[l]) throw DataError("transition out of absorbing state " + std::to_string(l));
            allowed_[l * num_states_ + m] = true;
        }
    }

    /// 0 = initial, 1 = illness, 2 = absorbing; no recovery.
    static StateSpace illness_death() { return StateSpace(3, {2}, {{0, 1}, {0, 2}, {1, 2}}); }

    int size() const noexcept { return num_states_; }
    bool valid(State s) const noexcept { return s >= 0 && s < num_states_; }
    bool absorbing(State s) const { return absorbing_.at(s); }
    bool transient(State s) const { return valid(s) && !absorbing_[s]; }
    bool allows(State l, State m) const {
        return valid(l) && valid(m) && allowed_[l * num_states_ + m];
    }

    std::vector<TransitionPair> transitions() const {
        std::vector<TransitionPair> out;
        for (State l = 0; l < num_states_; ++l)
            for (State m = 0; m < num_states_; ++m)
                if (allowed_[l * num_states_ + m]) out.push_back({l, m});
        return out;
    }

    friend bool operator==(const StateSpace&, const StateSpace&) = default;

private:
    void check_state(State s) const {
        if (!valid(s)) throw DataError("state " + std::to_string(s) + " outside state space");
    }

    int num_states_ = 0;
    std::vector<bool> absorbing_;
    std::vector<bool> allowed_;
};

/// One sojourn (entry, exit] in `from`. `to` is empty for a censored sojourn.
struct Record {
    double entry = 0.0;
    double exit = 0.0;
    State from = 0;
    std::optional<State> to;

    bool censored() const noexcept { return !to.has_value(); }
    bool covers(double t) const noexcept { return entry < t && t <= exit; }
    friend bool operator==(const Record&, const Record&) = default;
};

struct Subject {
    std::string id;
    std::vector<Record> records;

    double entry() const { return records.front().entry; }
    double exit() const { return records.back().exit; }

    /// State held on the record interval (entry, exit] containing s; empty
    /// when s lies outside the observation window.
    std::optional<State> state_at(double s) const {
        for (const auto& r : records)
            if (r.covers(s)) return r.from;
        return std::nullopt;
    }
};

class Dataset {
public:
    Dataset() = default;

    Dataset(StateSpace space, std::vector<Subject> subjects)
        : space_(std::move(space)), subjects_(std::move(subjects)) {
        validate();
    }

    /// Skips validation; for producers that construct valid data by
    /// construction (resampling, simulation).
    static Dataset trusted(StateSpace space, std::vector<Subject> subjects) {
        Dataset d;
        d.space_ = std::move(space);
        d.subjects_ = std::move(subjects);
        return d;
    }

    const StateSpace& state_space() const noexcept { return space_; }
    const std::vector<Subject>& subjects() const noexcept { return subjects_; }
    std::size_t size() const noexcept { return subjects_.size(); }
    bool empty() const noexcept { return subjects_.empty(); }

    /// Throws DataError on the first violated invariant.
    void validate() const {
        for (const auto& s : subjects_) {
            if (s.records.empty()) throw DataError("subject " + s.id + " has no records");
            for (std::size_t k = 0; k < s.records.size(); ++k) {
                const Record& r = s.records[k];
                const std::string where = "subject " + s.id + " record " + std::to_string(k + 1);
                if (!(std::isfinite(r.entry) && std::isfinite(r.exit)) || r.entry < 0.0)
                    throw DataError(where + ": times must be finite and nonnegative");
                if (!(r.entry < r.exit)) throw DataError(where + ": entry must be < exit");
                if (!space_.valid(r.from)) throw DataError(where + ": unknown state");
                if (space_.absorbing(r.from)) throw DataError(where + ": sojourn in absorbing state");
                if (r.to && !space_.allows(r.from, *r.to))
                    throw DataError(where + ": transition " + std::to_string(r.from) + "->" +
                                    std::to_string(*r.to) + " not in state space");
                if (k + 1 < s.records.size()) {
                    const Record& next = s.records[k + 1];
                    if (r.censored()) throw DataError(where + ": censored record is not last");
                    if (space_.absorbing(*r.to)) throw DataError(where + ": records after absorption");
                    if (next.from != *r.to || next.entry != r.exit)
                        throw DataError(where + ": chain violation");
                }
            }
        }
    }

private:
    StateSpace space_;
    std::vector<Subject> subjects_;
};

// ---------------------------------------------------------------------------
// Long-format ingestion: header `id,from,to,entry,exit`, `to = cens` marks a
// censored sojourn.

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    // std::from_chars for double is not available on every libstdc++ we target
    std::string buf(s);
    char* end = nullptr;
    double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<int> parse_int(std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

struct RawRow {
    std::size_t line;
    Record record;
};

}  // namespace detail

/// Infers a state space from observed records: states 0..max, the observed
/// transitions are allowed, states never left are absorbing.
inline StateSpace infer_state_space(const std::vector<Subject>& subjects) {
    int max_state = 0;
    std::vector<std::pair<State, State>> seen;
    for (const auto& s : subjects)
        for (const auto& r : s.records) {
            max_state = std::max(max_state, r.from);
            if (r.to) {
                max_state = std::max(max_state, *r.to);
                seen.emplace_back(r.from, *r.to);
            }
        }
    const int k = max_state + 1;
    std::vector<bool> has_exit(k, false);
    std::vector<TransitionPair> allowed;
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto [l, m] : seen) {
        if (l != m) allowed.push_back({l, m});
        has_exit[l] = true;
    }
    std::vector<bool> occupied(k, false);
    for (const auto& s : subjects)
        for (const auto& r : s.records) occupied[r.from] = true;
    std::vector<State> absorbing;
    for (State j = 0; j < k; ++j)
        if (!has_exit[j] && !occupied[j]) absorbing.push_back(j);
    return StateSpace(k, absorbing, allowed);
}

namespace detail {

inline Dataset ingest(std::istream& in, const StateSpace* space) {
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            if (!trim(line).empty()) return true;
        }
        return false;
    };
    if (!next_line()) throw DataError("missing header", 0);
    const auto header = split(line);
    const std::vector<std::string_view> expected{"id", "from", "to", "entry", "exit"};
    if (header != expected) throw DataError("header must be id,from,to,entry,exit", lineno);

    std::map<std::string, std::vector<RawRow>> by_subject;
    std::vector<std::string> order;
    while (next_line()) {
        const auto f = split(line);
        if (f.size() != 5) throw DataError("expected 5 fields, got " + std::to_string(f.size()), lineno);
        if (f[0].empty()) throw DataError("empty id", lineno);
        Record r;
        auto from = parse_int(f[1]);
        if (!from || *from < 0) throw DataError("bad from-state '" + std::string(f[1]) + "'", lineno);
        r.from = *from;
        if (f[2] != "cens") {
            auto to = parse_int(f[2]);
            if (!to || *to < 0) throw DataError("bad to-state '" + std::string(f[2]) + "'", lineno);
            r.to = *to;
        }
        auto entry = parse_double(f[3]);
        auto exit = parse_double(f[4]);
        if (!entry || !exit) throw DataError("bad time value", lineno);
        if (*entry < 0.0) throw DataError("negative entry time", lineno);
        if (!(*entry < *exit)) throw DataError("entry must be < exit", lineno);
        r.entry = *entry;
        r.exit = *exit;
        if (space) {
            if (!space->valid(r.from) || space->absorbing(r.from))
                throw DataError("state " + std::to_string(r.from) + " cannot be occupied", lineno);
            if (r.to && !space->allows(r.from, *r.to))
                throw DataError("transition " + std::to_string(r.from) + "->" + std::to_string(*r.to) +
                                    " not in state space",
                                lineno);
        }
        std::string id(f[0]);
        auto [it, fresh] = by_subject.try_emplace(id);
        if (fresh) order.push_back(id);
        it->second.push_back({lineno, r});
    }

    std::vector<Subject> subjects;
    subjects.reserve(order.size());
    for (const auto& id : order) {
        auto& rows = by_subject[id];
        std::stable_sort(rows.begin(), rows.end(),
                         [](const RawRow& a, const RawRow& b) { return a.record.entry < b.record.entry; });
        Subject s{id, {}};
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto& r = rows[k].record;
            if (k > 0) {
                const auto& prev = rows[k - 1].record;
                if (prev.censored()) throw DataError("record after censoring for subject " + id, rows[k].line);
                if (r.from != *prev.to)
                    throw DataError("chain violation for subject " + id + ": from-state " + std::to_string(r.from) +
                                        " != previous to-state " + std::to_string(*prev.to),
                                    rows[k].line);
                if (r.entry != prev.exit)
                    throw DataError("chain violation for subject " + id + ": entry does not match previous exit",
                                    rows[k].line);
            }
            s.records.push_back(r);
        }
        subjects.push_back(std::move(s));
    }
    StateSpace sp = space ? *space : infer_state_space(subjects);
    return Dataset(std::move(sp), std::move(subjects));
}

}  // namespace detail

/// Parses long-format text against a known state space.
inline Dataset ingest_long_format(std::istream& in, const StateSpace& space) { return detail::ingest(in, &space); }

/// Parses long-format text, inferring the state space from the data.
inline Dataset ingest_long_format(std::istream& in) { return detail::ingest(in, nullptr); }

inline Dataset ingest_long_format(std::string_view text) {
    std::istringstream in{std::string(text)};
    return ingest_long_format(in);
}

/// Writes the long format read by ingest_long_format.
inline void write_long_format(std::ostream& out, const Dataset& data) {
    out << "id,from,to,entry,exit\n";
    auto old = out.precision(17);
    for (const auto& s : data.subjects())
        for (const auto& r : s.records) {
            out << s.id << ',' << r.from << ',';
            if (r.to)
                out << *r.to;
            else
                out << "cens";
            out << ',' << r.entry << ',' << r.exit << '\n';
        }
    out.precision(old);
}

// ---------------------------------------------------------------------------
// Counting and at-risk processes.

/// One observed transition, attributed to the subject (dataset index) that made it.
struct Jump {
    std::size_t subject;
    State from;
    State to;
};

class EventTable {
public:
    EventTable() = default;
    EventTable(int num_states, std::size_t n) : num_states_(num_states), n_(n) {}

    int num_states() const noexcept { return num_states_; }
    std::size_t n() const noexcept { return n_; }
    std::size_t size() const noexcept { return times_.size(); }
    bool empty() const noexcept { return times_.empty(); }

    const std::vector<double>& times() const noexcept { return times_; }
    double time(std::size_t j) const { return times_[j]; }

    int dN(std::size_t j, State l, State m) const { return counts_[(j * num_states_ + l) * num_states_ + m]; }
    int Y(std::size_t j, State l) const { return at_risk_[j * num_states_ + l]; }
    const std::vector<Jump>& jumps(std::size_t j) const { return jumps_[j]; }

private:
    friend EventTable build_event_table(const Dataset&);

    int num_states_ = 0;
    std::size_t n_ = 0;
    std::vector<double> times_;
    std::vector<int> counts_;
    std::vector<int> at_risk_;
    std::vector<std::vector<Jump>> jumps_;
};

namespace detail {

/// Sorted sojourn boundaries per state: Y_l(t) = #{entry < t} - #{exit < t}.
struct RiskSets {
    std::vector<std::vector<double>> entries, exits;

    RiskSets(const Dataset& data) : entries(data.state_space().size()), exits(data.state_space().size()) {
        for (const auto& s : data.subjects())
            for (const auto& r : s.records) {
                entries[r.from].push_back(r.entry);
                exits[r.from].push_back(r.exit);
            }
        for (auto& v : entries) std::sort(v.begin(), v.end());
        for (auto& v : exits) std::sort(v.begin(), v.end());
    }

    int count(double t, State l) const {
        auto below = [t](const std::vector<double>& v) {
            return static_cast<int>(std::lower_bound(v.begin(), v.end(), t) - v.begin());
        };
        return below(entries[l]) - below(exits[l]);
    }
};

}  // namespace detail

/// Y_l(t): subjects with a record (entry, exit] covering t while in state l.
inline int at_risk_count(const Dataset& data, double t, State l) {
    int y = 0;
    for (const auto& s : data.subjects())
        for (const auto& r : s.records)
            if (r.from == l && r.covers(t)) ++y;
    return y;
}

/// Y_l(0+): subjects under observation in state l immediately after time 0.
inline std::vector<int> at_risk_at_origin(const Dataset& data) {
    std::vector<int> y(data.state_space().size(), 0);
    for (const auto& s : data.subjects()) {
        const auto& r = s.records.front();
        if (r.entry == 0.0) ++y[r.from];
    }
    return y;
}

inline EventTable build_event_table(const Dataset& data) {
    const int k = data.state_space().size();
    EventTable table(k, data.size());

    std::vector<std::pair<double, Jump>> all;
    for (std::size_t i = 0; i < data.size(); ++i)
        for (const auto& r : data.subjects()[i].records)
            if (r.to) all.push_back({r.exit, Jump{i, r.from, *r.to}});
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second.subject < b.second.subject;
    });

    const detail::RiskSets risk(data);
    for (std::size_t p = 0; p < all.size();) {
        const double t = all[p].first;
        table.times_.push_back(t);
        const std::size_t base = table.counts_.size();
        table.counts_.resize(base + static_cast<std::size_t>(k * k), 0);
        auto& jumps = table.jumps_.emplace_back();
        for (; p < all.size() && all[p].first == t; ++p) {
            const Jump& jp = all[p].second;
            ++table.counts_[base + jp.from * k + jp.to];
            jumps.push_back(jp);
        }
        for (State l = 0; l < k; ++l) table.at_risk_.push_back(risk.count(t, l));
    }
    return table;
}

/// Subjects with L < s < C and X(s) = l, records passed through unmodified.
inline Dataset landmark_subset(const Dataset& data, double s, State l) {
    if (!data.state_space().transient(l)) throw std::invalid_argument("landmark state must be transient");
    if (!(s >= 0.0)) throw std::invalid_argument("landmark time must be nonnegative");
    std::vector<Subject> kept;
    const auto& space = data.state_space();
    for (const auto& subj : data.subjects()) {
        // Observation ends at C_i unless the subject is absorbed, in which case
        // C_i lies beyond the absorption time and s == exit still satisfies s < C_i.
        const auto& last = subj.records.back();
        const bool absorbed = last.to && space.absorbing(*last.to);
        const bool observed = subj.entry() < s && (s < subj.exit() || (absorbed && s == subj.exit()));
        if (!observed) continue;
        auto state = subj.state_at(s);
        if (state && *state == l) kept.push_back(subj);
    }
    return Dataset::trusted(data.state_space(), std::move(kept));
}

}  // namespace msm
