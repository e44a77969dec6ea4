#include <cmath>
#include <optional>
#include <vector>

#include <gtest/gtest.h>

#include "seqdiag/models.hpp"
#include "seqdiag/procedures.hpp"

using namespace seqdiag;

namespace {

struct Stop {
    std::size_t T = 0;
    std::optional<std::size_t> D;
};

// Applies `spec` to a fixed LLR sequence; D is empty when it never stops.
Stop run_on(const ProcedureSpec& spec, const std::vector<std::vector<double>>& llrs) {
    StatisticBank bank(llrs.front().size(), spec.scheme);
    for (std::size_t n = 1; n <= llrs.size(); ++n) {
        bank.advance(llrs[n - 1]);
        if (auto d = check_stop(spec, bank.Y(), bank.W())) return {n, d};
    }
    return {llrs.size(), std::nullopt};
}

std::vector<std::vector<double>> simulate_llrs(const ChangeModel& m, std::size_t nu, std::size_t j, std::size_t len,
                                               std::uint64_t seed, std::size_t path) {
    RandomStream rng = rng_stream(seed, path);
    std::vector<double> x(m.dim());
    std::vector<std::vector<double>> out(len, std::vector<double>(m.K()));
    for (std::size_t n = 1; n <= len; ++n) {
        (n > nu ? m.alternative(j) : m.pre()).sample(rng, x);
        m.llrs(x, out[n - 1]);
    }
    return out;
}

std::vector<StatisticStep> record(const Scheme& s, const std::vector<std::vector<double>>& llrs) {
    StatisticBank bank(llrs.front().size(), s);
    std::vector<StatisticStep> path;
    for (const auto& l : llrs) {
        bank.advance(l);
        path.push_back({std::vector<double>(bank.Y().begin(), bank.Y().end()),
                        std::vector<double>(bank.W().begin(), bank.W().end())});
    }
    return path;
}

const Variant family[] = {Variant::matrix, Variant::adaptive, Variant::vector, Variant::generalized,
                          Variant::generalized_full};

Scheme scheme_of(Variant v) { return Scheme{v, v == Variant::generalized ? 5u : 0u}; }

} // namespace

TEST(CheckStop, AdaptiveExamples) {
    const ProcedureSpec spec{Scheme{Variant::adaptive, 0}, 1.0, 0.5};
    const double Y[] = {1.2, 0.0};
    const double W_ok[] = {0.6, 0.0};
    const double W_low[] = {0.4, 0.0};
    EXPECT_EQ(check_stop(spec, Y, W_ok), std::optional<std::size_t>(0));
    EXPECT_EQ(check_stop(spec, Y, W_low), std::nullopt);
}

TEST(CheckStop, MinCusumTieGoesToSmallestIndex) {
    const ProcedureSpec spec{Scheme{Variant::min_cusum, 0}, 1.0, 0.0};
    const double Y[] = {1.0, 1.0};
    const double W[] = {infinity, infinity};
    EXPECT_EQ(check_stop(spec, Y, W), std::optional<std::size_t>(0));
}

TEST(CheckStop, SimultaneousCrossingDecidesSmallestIndex) {
    const ProcedureSpec spec{Scheme{Variant::matrix, 0}, 1.0, 0.5};
    const double Y[] = {1.5, 2.0, 3.0};
    const double W[] = {0.1, 0.6, 0.9};
    EXPECT_EQ(check_stop(spec, Y, W), std::optional<std::size_t>(1));
}

TEST(CheckStop, NanIsDataError) {
    const ProcedureSpec spec{Scheme{Variant::matrix, 0}, 1.0, 0.5};
    const double Y[] = {std::nan(""), 0.0};
    const double W[] = {0.0, 0.0};
    EXPECT_THROW(check_stop(spec, Y, W), DataError);
}

TEST(ProcedureSpec, Validation) {
    EXPECT_THROW((ProcedureSpec{Scheme{Variant::matrix, 0}, -1.0, 0.0}.validate()), ConfigError);
    EXPECT_THROW((ProcedureSpec{Scheme{Variant::matrix, 0}, 1.0, -0.1}.validate()), ConfigError);
    EXPECT_THROW((ProcedureSpec{Scheme{Variant::generalized, 0}, 1.0, 0.1}.validate()), ConfigError);
}

TEST(Run, ZeroThresholdsStopAtOnce) {
    const ChangeModel m = gaussian_multichannel(2, 0.0, 1.0, 1.0, 1.0, true);
    for (std::size_t p = 0; p < 50; ++p) {
        RandomStream rng = rng_stream(1, p);
        const RunOutcome o = run({Scheme{Variant::adaptive, 0}, 0.0, 0.0}, m, Scenario::no_change(), 100, rng);
        EXPECT_EQ(o.T, 1u);
        EXPECT_FALSE(o.censored);
        EXPECT_TRUE(o.decision.has_value());
        EXPECT_FALSE(o.stopped_after_change);
    }
}

TEST(Run, DelayNearBOverKl) {
    const ChangeModel m = gaussian_mean_shift({1.0});
    double sum = 0.0;
    const int n = 2000;
    for (int p = 0; p < n; ++p) {
        RandomStream rng = rng_stream(2, p);
        sum += static_cast<double>(run({Scheme{Variant::adaptive, 0}, 8.0, 0.0}, m, Scenario::change_at(0, 0),
                                       default_horizon, rng)
                                       .T);
    }
    EXPECT_NEAR(sum / n, 16.0, 0.25 * 16.0);
}

TEST(Run, HorizonCensors) {
    const ChangeModel m = gaussian_mean_shift({1.0, 2.0});
    RandomStream rng = rng_stream(3, 0);
    const RunOutcome o = run({Scheme{Variant::matrix, 0}, 1e9, 0.0}, m, Scenario::change_at(0, 1), 5, rng);
    EXPECT_TRUE(o.censored);
    EXPECT_EQ(o.T, 5u);
    EXPECT_FALSE(o.decision.has_value());
    RandomStream rng2 = rng_stream(3, 0);
    EXPECT_THROW(run({Scheme{Variant::matrix, 0}, 1.0, 0.0}, m, Scenario::no_change(), 0, rng2), ConfigError);
}

TEST(Run, StoppedAfterChangeFlag) {
    const ChangeModel m = gaussian_mean_shift({1.0});
    RandomStream rng = rng_stream(4, 0);
    const RunOutcome o = run({Scheme{Variant::min_cusum, 0}, 0.0, 0.0}, m, Scenario::change_at(3, 0), 100, rng);
    EXPECT_EQ(o.T, 1u);
    EXPECT_FALSE(o.stopped_after_change);
}

TEST(GridStops, AgreesWithPerPointRuns) {
    const ChangeModel m = gaussian_multichannel(2, 0.0, 1.0, 1.0, 1.0, true);
    const std::vector<double> b{0.5, 1.5, 3.0, 4.5};
    const std::vector<double> h{0.05, 0.5, 1.0, 2.5};
    for (Variant v : {Variant::min_cusum, Variant::matrix, Variant::adaptive, Variant::vector, Variant::generalized}) {
        const Scheme s = scheme_of(v);
        for (std::size_t p = 0; p < 50; ++p) {
            const auto llrs = simulate_llrs(m, 20, p % 3, 400, 77, p);
            const auto path = record(s, llrs);
            const GridStops g = pathwise_stop_times(path, b, h, decision_rule(v));
            for (std::size_t r = 0; r < h.size(); ++r) {
                for (std::size_t c = 0; c < b.size(); ++c) {
                    const Stop want = run_on({s, b[c], h[r]}, llrs);
                    const std::size_t k = g.index(c, r);
                    EXPECT_EQ(g.T[k], want.T);
                    EXPECT_EQ(g.censored[k] != 0, !want.D.has_value());
                    if (want.D) EXPECT_EQ(g.D[k], *want.D);
                }
            }
        }
    }
}

TEST(GridStops, SinglePointMatchesRun) {
    const ChangeModel m = gaussian_mean_shift({1.0, 2.0});
    const ProcedureSpec spec{Scheme{Variant::adaptive, 0}, 2.0, 0.7};
    for (std::size_t p = 0; p < 20; ++p) {
        RandomStream rng = rng_stream(8, p);
        const RunOutcome o = run(spec, m, Scenario::change_at(10, 1), 1000, rng);
        const auto llrs = simulate_llrs(m, 10, 1, 1000, 8, p);
        const double b[] = {2.0};
        const double h[] = {0.7};
        const GridStops g = pathwise_stop_times(record(spec.scheme, llrs), b, h, DecisionRule::first_crossing);
        EXPECT_EQ(g.T[0], o.T);
        EXPECT_EQ(g.censored[0] != 0, o.censored);
        if (o.decision) EXPECT_EQ(g.D[0], *o.decision);
    }
}

TEST(GridStops, MonotoneAndDominatedByMinCusum) {
    const ChangeModel m = gaussian_multichannel(2, 0.0, 1.0, 1.0, 1.0, true);
    std::vector<double> b, h;
    for (int k = 0; k <= 20; ++k) b.push_back(0.25 * k);
    for (int k = 1; k <= 10; ++k) h.push_back(0.3 * k);
    for (std::size_t p = 0; p < 100; ++p) {
        const auto llrs = simulate_llrs(m, p % 40, p % 3, 2000, 5, p);
        const GridStops sigma =
            pathwise_stop_times(record(Scheme{Variant::min_cusum, 0}, llrs), b, h, DecisionRule::argmax);
        for (Variant v : family) {
            const GridStops g = pathwise_stop_times(record(scheme_of(v), llrs), b, h, DecisionRule::first_crossing);
            for (std::size_t r = 0; r < h.size(); ++r) {
                for (std::size_t c = 0; c < b.size(); ++c) {
                    const std::size_t k = g.index(c, r);
                    if (c + 1 < b.size()) ASSERT_LE(g.T[k], g.T[g.index(c + 1, r)]);
                    if (r + 1 < h.size()) ASSERT_LE(g.T[k], g.T[g.index(c, r + 1)]);
                    ASSERT_GE(g.T[k], sigma.T[k]);
                }
            }
        }
    }
}

TEST(Procedures, SingleAlternativeDegeneratesToCusum) {
    const ChangeModel m = gaussian_mean_shift({1.0});
    for (std::size_t p = 0; p < 50; ++p) {
        const auto llrs = simulate_llrs(m, 30, 0, 3000, 6, p);
        const Stop sigma = run_on({Scheme{Variant::min_cusum, 0}, 3.0, 0.0}, llrs);
        for (Variant v : family) {
            const Stop tau = run_on({scheme_of(v), 3.0, 5.0}, llrs);
            EXPECT_EQ(tau.T, sigma.T) << to_string(v);
            EXPECT_EQ(tau.D, sigma.D);
        }
    }
}

TEST(Procedures, DecisionUsesNoLookahead) {
    const ChangeModel m = gaussian_multichannel(2, 0.0, 1.0, 1.0, 1.0, true);
    for (Variant v : {Variant::min_cusum, Variant::matrix, Variant::adaptive, Variant::vector, Variant::generalized}) {
        for (std::size_t p = 0; p < 50; ++p) {
            const auto llrs = simulate_llrs(m, 15, p % 3, 2000, 9, p);
            const ProcedureSpec spec{scheme_of(v), 3.0, 1.0};
            const Stop full = run_on(spec, llrs);
            ASSERT_TRUE(full.D.has_value());
            const std::vector<std::vector<double>> cut(llrs.begin(), llrs.begin() + full.T);
            const Stop truncated = run_on(spec, cut);
            EXPECT_EQ(truncated.T, full.T);
            EXPECT_EQ(truncated.D, full.D);
        }
    }
}
