#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "msm/estimators.hpp"
#include "msm/simgen.hpp"

using namespace msm;

namespace {

ScenarioConfig fig1_constant() {
    ScenarioConfig c;
    c.alpha01 = 0.039;
    c.alpha02 = 0.026;
    c.mechanism = mechanism::ConstantMultiplier{0.7};
    c.truncation = truncation::SkewNormal{0, 10, 10};
    c.n = 100;
    return c;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Latent, IllnessRouteProbability) {
    ScenarioConfig c = fig1_constant();
    EXPECT_DOUBLE_EQ(c.alpha01 / (c.alpha01 + c.alpha02), 0.6);
    const auto paths = simulate_latent(c, 100000, 3);
    double ill = 0;
    for (const auto& p : paths) ill += p.via_illness();
    EXPECT_NEAR(ill / 1e5, 0.6, 0.006);
}

TEST(Latent, ConstantMultiplier) {
    ScenarioConfig c = fig1_constant();
    Rng rng(1);
    const double z2 = detail::SojournInIllness{c, 10.0, 1.0, rng}(mechanism::ConstantMultiplier{0.7});
    EXPECT_DOUBLE_EQ(z2, 17.0);
    for (const auto& p : simulate_latent(c, 1000, 9))
        if (p.via_illness()) EXPECT_DOUBLE_EQ(p.z2, 1.7 * *p.z1);
}

TEST(Latent, GammaFrailtyMomentMatching) {
    const auto g = gamma_moments(2.0, 2.0);
    EXPECT_DOUBLE_EQ(g.shape, 2.0);
    EXPECT_DOUBLE_EQ(g.scale, 1.0);
    ScenarioConfig c;
    c.alpha01 = 0.12, c.alpha02 = 0.03, c.alpha12 = 0.1;
    c.mechanism = mechanism::GammaFrailty{2.0, 2.0};
    std::vector<double> f;
    for (const auto& p : simulate_latent(c, 200000, 4)) f.push_back(p.frailty);
    const double m = mean_of(f);
    double v = 0;
    for (double x : f) v += (x - m) * (x - m);
    v /= static_cast<double>(f.size() - 1);
    EXPECT_NEAR(m, 2.0, 0.02);
    EXPECT_NEAR(v, 2.0, 0.05);
}

TEST(Latent, StateAtTimePiecewiseHazard) {
    ScenarioConfig c;
    const mechanism::StateAtTime mech{4.0, 0.05, 0.1};
    Rng rng(11);
    const int n = 400000;
    int beyond_t_star = 0, beyond_10 = 0, late_beyond = 0;
    for (int i = 0; i < n; ++i) {
        const double z2 = detail::SojournInIllness{c, 1.0, 1.0, rng}(mech);
        beyond_t_star += z2 > 4.0;
        beyond_10 += z2 > 10.0;
        // ill after t_star: low hazard throughout
        const double z2b = detail::SojournInIllness{c, 5.0, 1.0, rng}(mech);
        late_beyond += z2b > 11.0;
    }
    EXPECT_NEAR(beyond_t_star / double(n), std::exp(-0.05 * 3), 0.003);
    EXPECT_NEAR(beyond_10 / double(n), std::exp(-0.05 * 3 - 0.1 * 6), 0.003);
    EXPECT_NEAR(late_beyond / double(n), std::exp(-0.05 * 6), 0.003);
}

TEST(SkewNormal, ShapeZeroIsNormal) {
    const auto x = sample_skew_normal(3.0, 2.0, 0.0, 200000, 5);
    const double m = mean_of(x);
    double v = 0;
    for (double a : x) v += (a - m) * (a - m);
    EXPECT_NEAR(m, 3.0, 0.02);
    EXPECT_NEAR(std::sqrt(v / (x.size() - 1)), 2.0, 0.02);
}

TEST(SkewNormal, MeanMatchesClosedForm) {
    const double delta = 10.0 / std::sqrt(101.0);
    const double unit = delta * std::sqrt(2.0 / std::numbers::pi);
    EXPECT_NEAR(10 * unit, 7.94, 0.005);
    EXPECT_NEAR(13 * unit, 10.32, 0.005);
    EXPECT_NEAR(mean_of(sample_skew_normal(0, 10, 10, 1000000, 1)), 10 * unit, 0.05);
    EXPECT_NEAR(mean_of(sample_skew_normal(0, 13, 10, 1000000, 2)), 13 * unit, 0.05);
}

TEST(Truncation, NegativeDrawsClampToOrigin) {
    const std::vector<LatentPath> paths{{std::nullopt, 3.0, 1.0}, {1.0, 5.0, 1.0}};
    const auto d = apply_truncation(paths, truncation::Uniform{-1.0, -0.5}, 1);
    ASSERT_EQ(d.size(), 2u);
    for (const auto& s : d.subjects()) EXPECT_EQ(s.entry(), 0.0);
    EXPECT_EQ(d.subjects()[1].records.size(), 2u);
}

TEST(Truncation, AbsorbedBeforeEntryExcluded) {
    const std::vector<LatentPath> paths{{std::nullopt, 2.0, 1.0}};
    EXPECT_TRUE(apply_truncation(paths, truncation::Uniform{3.0, 3.0 + 1e-9}, 1).empty());
}

TEST(Truncation, EntryInIllnessState) {
    const std::vector<LatentPath> paths{{1.0, 5.0, 1.0}};
    const auto d = apply_truncation(paths, truncation::Uniform{2.0, 2.0 + 1e-12}, 1);
    ASSERT_EQ(d.size(), 1u);
    const auto& r = d.subjects()[0].records;
    ASSERT_EQ(r.size(), 1u);
    EXPECT_NEAR(r[0].entry, 2.0, 1e-9);
    EXPECT_EQ(r[0].from, 1);
    EXPECT_EQ(r[0].to, State{2});
    EXPECT_EQ(r[0].exit, 5.0);
}

TEST(Truncation, InclusionAndOriginFractions) {
    for (auto [scale, mech] : {std::pair<double, Mechanism>{10.0, mechanism::ConstantMultiplier{0.7}},
                               std::pair<double, Mechanism>{13.0, mechanism::CoxSojourn{0.1, 0.01}}}) {
        ScenarioConfig c = fig1_constant();
        c.mechanism = mech;
        const std::size_t n = 200000;
        const auto d = apply_truncation(simulate_latent(c, n, 21), truncation::SkewNormal{0, scale, 10}, 21);
        double origin = 0;
        for (const auto& s : d.subjects()) origin += s.entry() == 0.0;
        EXPECT_NEAR(d.size() / double(n), 0.70, 0.03) << scale;
        EXPECT_NEAR(origin / double(n), 0.03, 0.01) << scale;
    }
}

TEST(Censoring, TypeIIAtMthDeath) {
    std::vector<Subject> s;
    for (int i = 1; i <= 4; ++i) s.push_back({"s" + std::to_string(i), {{0.0, 2.0 * i, 0, State{2}}}});
    const Dataset d(StateSpace::illness_death(), s);
    const auto out = apply_censoring(d, censoring::TypeII{2}, 1);
    EXPECT_FALSE(out.insufficient_events);
    ASSERT_TRUE(out.censoring_time);
    EXPECT_EQ(*out.censoring_time, 4.0);
    const auto& subj = out.data.subjects();
    ASSERT_EQ(subj.size(), 4u);
    EXPECT_EQ(subj[0].records[0].to, State{2});
    EXPECT_EQ(subj[1].records[0].to, State{2});
    EXPECT_EQ(subj[1].records[0].exit, 4.0);
    EXPECT_TRUE(subj[2].records[0].censored());
    EXPECT_EQ(subj[2].records[0].exit, 4.0);
    EXPECT_TRUE(subj[3].records[0].censored());
    EXPECT_NO_THROW(out.data.validate());
}

TEST(Censoring, TypeIIInsufficientEventsFlagged) {
    std::vector<Subject> s{{"a", {{0.0, 1.0, 0, State{2}}}}, {"b", {{0.0, 3.0, 0, std::nullopt}}}};
    const Dataset d(StateSpace::illness_death(), s);
    const auto out = apply_censoring(d, censoring::TypeII{2}, 1);
    EXPECT_TRUE(out.insufficient_events);
    EXPECT_EQ(out.data.subjects()[0].records, d.subjects()[0].records);
}

TEST(Censoring, TypeIIHalfOfStudy) {
    ScenarioConfig c;
    c.alpha01 = 0.01, c.alpha02 = 0.03, c.alpha12 = 0.1;
    c.censoring = censoring::TypeII{50};
    c.n = 100;
    const auto study = simulate_study(c, 5);
    int deaths = 0;
    for (const auto& s : study.data.subjects()) deaths += !s.records.back().censored();
    EXPECT_GE(deaths, 50);
    EXPECT_NO_THROW(study.data.validate());
}

TEST(Censoring, VanishingRateLeavesDataUnchanged) {
    ScenarioConfig c = fig1_constant();
    c.truncation = truncation::None{};
    const auto d = apply_truncation(simulate_latent(c, 1000, 8), c.truncation, 8);
    const auto out = apply_censoring(d, censoring::Exponential{1e-9}, 8);
    ASSERT_EQ(out.data.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d.subjects()[i].exit() <= 100.0) EXPECT_EQ(out.data.subjects()[i].records, d.subjects()[i].records);
}

TEST(Study, Deterministic) {
    ScenarioConfig c = fig1_constant();
    c.censoring = censoring::Exponential{0.02};
    const auto a = simulate_study(c, 77), b = simulate_study(c, 77);
    ASSERT_EQ(a.data.size(), b.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data.subjects()[i].records, b.data.subjects()[i].records);
}

TEST(Study, MarkovCountsMatchClosedForm) {
    // constant hazards, no truncation/censoring: the chi-square statistic of
    // state counts at fixed times must be calibrated across independent seeds
    ScenarioConfig c;
    c.alpha01 = 0.12, c.alpha02 = 0.03, c.alpha12 = 0.1;
    const std::size_t n = 5000, seeds = 300;
    const double lam = c.alpha01 + c.alpha02;
    for (double t : {2.0, 5.0, 10.0, 20.0}) {
        const double p0 = std::exp(-lam * t);
        const double p1 = c.alpha01 / (lam - c.alpha12) * (std::exp(-c.alpha12 * t) - std::exp(-lam * t));
        const double expected[3] = {p0 * n, p1 * n, (1 - p0 - p1) * n};
        double mean_chi2 = 0, exceed = 0;
        for (std::size_t seed = 1; seed <= seeds; ++seed) {
            double observed[3] = {0, 0, 0};
            for (const auto& p : simulate_latent(c, n, seed)) observed[p.state_at(t)] += 1;
            double chi2 = 0;
            for (int k = 0; k < 3; ++k) chi2 += std::pow(observed[k] - expected[k], 2) / expected[k];
            mean_chi2 += chi2 / seeds;
            exceed += (chi2 > 5.991) / double(seeds);  // chi-square(2) at 0.95
        }
        EXPECT_NEAR(mean_chi2, 2.0, 0.35) << "t=" << t;
        EXPECT_NEAR(exceed, 0.05, 0.035) << "t=" << t;
    }
}

TEST(ScenarioConfig, Validation) {
    ScenarioConfig c;
    c.censoring = censoring::TypeII{101};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ScenarioConfig{};
    c.mechanism = mechanism::GammaFrailty{2.0, 0.0};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ScenarioConfig{};
    c.truncation = truncation::SkewNormal{0, -1, 10};
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
