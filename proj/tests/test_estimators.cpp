#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "msm/estimators.hpp"

using namespace msm;

TEST(NelsonAalen, D1HandValues) {
    const auto haz = nelson_aalen(build_event_table(fixtures::d1()));
    EXPECT_DOUBLE_EQ(haz.cumulative(5.0, 0, 1), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(haz.cumulative(5.0, 0, 2), 1.0 / 2.0);
    EXPECT_DOUBLE_EQ(haz.cumulative(5.0, 1, 2), 1.0);
    // right-continuous steps
    EXPECT_DOUBLE_EQ(haz.cumulative(0.999, 0, 1), 0.0);
    EXPECT_DOUBLE_EQ(haz.cumulative(1.0, 0, 1), 1.0 / 3.0);
}

TEST(NelsonAalen, IncrementsRowsSumToZero) {
    const auto haz = nelson_aalen(build_event_table(fixtures::d1()));
    for (std::size_t j = 0; j < haz.size(); ++j) {
        const Matrix& d = haz.increment(j);
        for (int l = 0; l < d.rows(); ++l) {
            EXPECT_NEAR(d.row(l).sum(), 0.0, 1e-12);
            EXPECT_GE(d(l, l), -1.0);
            EXPECT_LE(d(l, l), 0.0);
        }
    }
}

TEST(NelsonAalen, LeftTruncatedD1) {
    const auto haz = nelson_aalen(build_event_table(fixtures::d1_truncated()));
    EXPECT_DOUBLE_EQ(haz.cumulative(5.0, 0, 2), 0.5);
    EXPECT_DOUBLE_EQ(haz.cumulative(5.0, 1, 2), 1.0);
    EXPECT_DOUBLE_EQ(haz.cumulative(5.0, 0, 1), 0.0);
}

TEST(NelsonAalen, NoEventsGivesZero) {
    const auto d = ingest_long_format("id,from,to,entry,exit\nA,0,cens,0,3\nB,0,1,0,1\nB,1,cens,1,2\n");
    // one 0->1 event only; use a dataset with none
    const auto none = Dataset(d.state_space(), {d.subjects()[0]});
    const auto haz = nelson_aalen(build_event_table(none));
    EXPECT_EQ(haz.size(), 0u);
    EXPECT_TRUE(haz.cumulative(10.0).isZero());
}

TEST(ProductIntegral, D1HandValues) {
    const auto haz = nelson_aalen(build_event_table(fixtures::d1()));
    const RowVector p4 = product_integral(haz, 0, 4).row(0);
    EXPECT_NEAR(p4(0), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(p4(1), 0.0, 1e-15);
    EXPECT_NEAR(p4(2), 2.0 / 3.0, 1e-15);
    const RowVector p2 = product_integral(haz, 0, 2).row(0);
    for (int m = 0; m < 3; ++m) EXPECT_NEAR(p2(m), 1.0 / 3.0, 1e-15);
}

TEST(ProductIntegral, EmptyIntervalIsIdentity) {
    const auto haz = nelson_aalen(build_event_table(fixtures::d1()));
    EXPECT_TRUE(product_integral(haz, 2.0, 3.9).isIdentity());
    EXPECT_TRUE(product_integral(haz, 4.0, 4.0).isIdentity());
    EXPECT_THROW(product_integral(haz, 3.0, 2.0), std::invalid_argument);
}

TEST(ProductIntegral, TwoStateReducesToKaplanMeier) {
    const StateSpace two(2, {1}, {{0, 1}});
    const auto d = ingest_long_format(
        "id,from,to,entry,exit\n"
        "a,0,1,0,2\nb,0,cens,0,3\nc,0,1,0,3\nd,0,1,0.5,5\ne,0,cens,1,6\nf,0,1,0,7\n");
    const auto t = build_event_table(d);
    const auto haz = nelson_aalen(t);
    double km = 1.0;
    for (std::size_t j = 0; j < t.size(); ++j) km *= 1.0 - static_cast<double>(t.dN(j, 0, 1)) / t.Y(j, 0);
    EXPECT_EQ(product_integral(haz, 0, 10)(0, 0), km);
    (void)two;
}

TEST(InitialDistribution, Policies) {
    const auto d = fixtures::d1();
    EXPECT_EQ(initial_distribution(d, initial::Multinomial{}), (RowVector(3) << 1, 0, 0).finished());
    EXPECT_EQ(initial_distribution(d, initial::CommonState{1}), (RowVector(3) << 0, 1, 0).finished());
    EXPECT_EQ(initial_distribution(d, initial::Supplied{{0.5, 0.5, 0}}), (RowVector(3) << 0.5, 0.5, 0).finished());
    EXPECT_THROW(initial_distribution(d, initial::Supplied{{0.5, 0.4, 0}}), std::invalid_argument);
    EXPECT_THROW(initial_distribution(d, initial::Supplied{{1.0, 0.0}}), std::invalid_argument);
}

TEST(InitialDistribution, AtRiskRenormalizedUnderTruncation) {
    const auto d = ingest_long_format(
        "id,from,to,entry,exit\n"
        "a,0,2,0,2\nb,0,2,0,3\nc,0,1,0,1\nc,1,2,1,4\nd,1,2,0,5\ne,0,2,2,6\n");
    EXPECT_EQ(at_risk_at_origin(d), (std::vector<int>{3, 1, 0}));
    const RowVector p = initial_distribution(d, initial::AtRiskRenormalized{});
    EXPECT_DOUBLE_EQ(p(0), 0.75);
    EXPECT_DOUBLE_EQ(p(1), 0.25);
    EXPECT_DOUBLE_EQ(p(2), 0.0);
    EXPECT_THROW(initial_distribution(d, initial::Multinomial{}), std::invalid_argument);
    EXPECT_THROW(initial_distribution(fixtures::d1_truncated(), initial::Multinomial{}), std::invalid_argument);
    const auto late = ingest_long_format("id,from,to,entry,exit\na,0,2,1,2\n");
    EXPECT_THROW(initial_distribution(late, initial::AtRiskRenormalized{}), NotEstimable);
}

TEST(StateOccupation, D1) {
    const auto curve = state_occupation(fixtures::d1(), initial::CommonState{0});
    const RowVector& p = curve.at(4.0);
    EXPECT_NEAR(p(0), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(p(2), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(curve.at(0.5), (RowVector(3) << 1, 0, 0).finished());
}

TEST(StateOccupation, NoEventsKeepsInitial) {
    const auto d = ingest_long_format("id,from,to,entry,exit\na,0,cens,0,2\nb,1,cens,0,3\nz,1,2,9,10\n");
    const auto curve = state_occupation(Dataset(d.state_space(), {d.subjects()[0], d.subjects()[1]}),
                                        initial::Multinomial{});
    EXPECT_TRUE(curve.times.empty());
    EXPECT_EQ(curve.at(100.0), (RowVector(3) << 0.5, 0.5, 0).finished());
}

TEST(LandmarkAJ, D1HandValues) {
    const auto d = fixtures::d1();
    const RowVector at4 = landmark_aalen_johansen(d, 1.5, 1, 4.0);
    EXPECT_EQ(at4(1), 0.0);
    EXPECT_EQ(at4(2), 1.0);
    const RowVector at39 = landmark_aalen_johansen(d, 1.5, 1, 3.9);
    EXPECT_EQ(at39(1), 1.0);
    EXPECT_EQ(at39(2), 0.0);
}

TEST(LandmarkAJ, AtLandmarkTimeIsUnitVector) {
    const auto d = fixtures::d1();
    EXPECT_EQ(landmark_aalen_johansen(d, 1.5, 0, 1.5), (RowVector(3) << 1, 0, 0).finished());
    EXPECT_EQ(landmark_aalen_johansen(d, 1.5, 1, 1.5), (RowVector(3) << 0, 1, 0).finished());
}

TEST(LandmarkAJ, EmptySubsetIsNotEstimable) {
    EXPECT_THROW(landmark_aalen_johansen(fixtures::d1(), 5.0, 0, 6.0), NotEstimable);
    EXPECT_THROW(landmark_aalen_johansen(fixtures::d1(), 2.0, 0, 1.0), std::invalid_argument);
}

TEST(LandmarkAJ, CarriesForwardWhenRiskSetEmpties) {
    // subset {B, C} at s=1.5 in state 0: B dies at 2, C censored at 3
    const RowVector p = landmark_aalen_johansen(fixtures::d1(), 1.5, 0, 10.0);
    EXPECT_DOUBLE_EQ(p(0), 0.5);
    EXPECT_DOUBLE_EQ(p(2), 0.5);
}

// --- Cox -----------------------------------------------------------------

namespace {

/// Explicit Breslow log partial likelihood with delayed entry at z.
double brute_loglik(const std::vector<double>& z, const std::vector<double>& stop, const std::vector<bool>& event,
                    double beta) {
    double ll = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        if (!event[j]) continue;
        double denom = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (z[i] < stop[j] && stop[j] <= stop[i]) denom += std::exp(beta * z[i]);
        ll += beta * z[j] - std::log(denom);
    }
    return ll;
}

double grid_argmax(const std::vector<double>& z, const std::vector<double>& stop, const std::vector<bool>& event) {
    double best = -10, best_ll = -INFINITY;
    for (double b = -10; b <= 10; b += 1e-3) {
        const double ll = brute_loglik(z, stop, event, b);
        if (ll > best_ll) best_ll = ll, best = b;
    }
    const double lo = best - 1e-3;
    for (int k = 0; k <= 2000; ++k) {
        const double b = lo + k * 1e-6;
        const double ll = brute_loglik(z, stop, event, b);
        if (ll > best_ll) best_ll = ll, best = b;
    }
    return best;
}

Dataset exposure_data(const std::vector<double>& z, const std::vector<double>& stop, const std::vector<bool>& event) {
    std::vector<Subject> s;
    for (std::size_t i = 0; i < z.size(); ++i) {
        Subject x{"s" + std::to_string(i), {}};
        x.records.push_back({0.0, z[i], 0, State{1}});
        x.records.push_back({z[i], stop[i], 1, event[i] ? std::optional<State>(2) : std::nullopt});
        s.push_back(x);
    }
    return Dataset(StateSpace::illness_death(), s);
}

}  // namespace

TEST(CoxCheck, ConstantCovariateGivesZeroAfterOneIteration) {
    const auto d = exposure_data({2, 2, 2, 2}, {3, 5, 6, 9}, {true, true, false, true});
    const auto fit = cox_markov_check(d, 1, 2);
    EXPECT_EQ(fit.beta, 0.0);
    EXPECT_EQ(fit.hazard_ratio, 1.0);
    EXPECT_EQ(fit.iterations, 1);
    EXPECT_TRUE(fit.converged);
    EXPECT_LE(fit.ci_lower, fit.hazard_ratio);
    EXPECT_GE(fit.ci_upper, fit.hazard_ratio);
}

TEST(CoxCheck, MatchesGridSearchOracle) {
    const std::vector<double> z{1, 2, 3}, stop{6, 5, 7};
    const std::vector<bool> ev{true, true, true};
    const auto fit = cox_markov_check(exposure_data(z, stop, ev), 1, 2);
    ASSERT_TRUE(fit.converged);
    EXPECT_NEAR(fit.beta, grid_argmax(z, stop, ev), 1e-6);
    EXPECT_EQ(fit.hazard_ratio, std::exp(fit.beta));
    EXPECT_LT(fit.ci_lower, fit.hazard_ratio);
    EXPECT_GT(fit.ci_upper, fit.hazard_ratio);
}

TEST(CoxCheck, MatchesGridSearchOracleWithTiesAndCensoring) {
    const std::vector<double> z{0.5, 1, 1.5, 2, 3, 3.5, 4};
    const std::vector<double> stop{4, 6, 6, 5, 9, 8, 7};
    const std::vector<bool> ev{true, true, true, false, true, true, false};
    const auto fit = cox_markov_check(exposure_data(z, stop, ev), 1, 2);
    ASSERT_TRUE(fit.converged);
    EXPECT_NEAR(fit.beta, grid_argmax(z, stop, ev), 1e-6);
}

TEST(CoxCheck, NonConvergenceIsFlaggedWithLastIterate) {
    const std::vector<double> z{1, 2, 3}, stop{6, 5, 7};
    const std::vector<bool> ev{true, true, true};
    CoxOptions opt;
    opt.max_iterations = 1;
    const auto fit = cox_markov_check(exposure_data(z, stop, ev), 1, 2, opt);
    EXPECT_FALSE(fit.converged);
    EXPECT_EQ(fit.iterations, 1);
    EXPECT_NE(fit.beta, 0.0);
}

TEST(CoxCheck, NoEventsNotEstimable) {
    EXPECT_THROW(cox_markov_check(exposure_data({1, 2}, {5, 6}, {false, false}), 1, 2), NotEstimable);
    EXPECT_THROW(cox_markov_check(fixtures::d1_truncated(), 1, 2), NotEstimable);
}
