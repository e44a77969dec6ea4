#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqdiag/error.hpp"
#include "seqdiag/models.hpp"
#include "seqdiag/rng.hpp"
#include "seqdiag/statistics.hpp"

namespace seqdiag {

// A fully specified diagnosis procedure (T, D).
struct ProcedureSpec {
    Scheme scheme;
    double b = 0.0;  // detection threshold, nats
    double h = 0.0;  // isolation threshold, nats; ignored by min_cusum

    void validate() const {
        if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("threshold b must be finite and >= 0");
        if (!(h >= 0.0) || !std::isfinite(h)) throw ConfigError("threshold h must be finite and >= 0");
        if (scheme.variant == Variant::generalized && scheme.window == 0) {
            throw ConfigError("generalized variant needs window m >= 1");
        }
    }
};

// Stopping rule evaluated on the statistics at one time n. Family variants
// stop when some i has Y_i >= b and W_i >= h, deciding the smallest such i.
// With K = 1 there is no rival, so the isolation condition is vacuous.
// min_cusum stops when max_i Y_i >= b and decides the argmax (smallest
// index among ties). Returns the 0-based decision, or nullopt to continue.
inline std::optional<std::size_t> check_stop(const ProcedureSpec& spec, std::span<const double> Y,
                                             std::span<const double> W) {
    const std::size_t K = Y.size();
    if (spec.scheme.variant == Variant::min_cusum) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < K; ++i) {
            if (Y[i] > Y[best]) best = i;
        }
        if (!std::isfinite(Y[best])) throw DataError("non-finite CuSum statistic");
        return Y[best] >= spec.b ? std::optional<std::size_t>(best) : std::nullopt;
    }
    for (std::size_t i = 0; i < K; ++i) {
        if (std::isnan(Y[i]) || std::isnan(W[i])) throw DataError("non-finite statistic");
        if (Y[i] >= spec.b && (K == 1 || W[i] >= spec.h)) return i;
    }
    return std::nullopt;
}

// Feeds one observation into the bank and applies the stopping rule.
inline std::optional<std::size_t> step(const ProcedureSpec& spec, StatisticBank& bank,
                                       std::span<const double> x, const ChangeModel& model,
                                       std::span<double> llr_scratch) {
    model.llrs(x, llr_scratch);
    bank.advance(llr_scratch);
    return check_stop(spec, bank.Y(), bank.W());
}

// Data-generating scenario: f up to and including change_point, g_post after.
// An empty change_point means the change never happens (P_inf).
struct Scenario {
    std::optional<std::size_t> change_point;
    std::size_t post_index = 0;

    static Scenario no_change() { return {}; }
    static Scenario change_at(std::size_t nu, std::size_t post) { return {nu, post}; }

    bool pre_change_at(std::size_t n) const { return !change_point || n <= *change_point; }
};

struct RunOutcome {
    std::size_t T = 0;                     // stopping time, or the horizon when censored
    bool censored = false;
    std::optional<std::size_t> decision;   // 0-based; empty iff censored
    bool stopped_after_change = false;     // T > nu (always false under P_inf)
};

inline constexpr std::size_t default_horizon = 100000;

// Simulates observations under `scenario`, advances `bank` and calls
// visit(n, bank) after each step until it returns false or n reaches the
// horizon. Returns the last time simulated.
template <class Visitor>
std::size_t simulate_path(const ChangeModel& model, StatisticBank& bank, const Scenario& scenario,
                          std::size_t horizon, RandomStream& rng, Visitor&& visit) {
    std::vector<double> x(model.dim());
    std::vector<double> llrs(model.K());
    bank.reset();
    for (std::size_t n = 1; n <= horizon; ++n) {
        const Density& law = scenario.pre_change_at(n) ? model.pre() : model.alternative(scenario.post_index);
        law.sample(rng, x);
        model.llrs(x, llrs);
        bank.advance(llrs);
        if (!visit(n, bank)) return n;
    }
    return horizon;
}

inline RunOutcome run(const ProcedureSpec& spec, const ChangeModel& model, const Scenario& scenario,
                      std::size_t horizon, RandomStream& rng) {
    spec.validate();
    if (horizon == 0) throw ConfigError("horizon must be >= 1");
    if (scenario.post_index >= model.K()) throw ConfigError("post-change index out of range");
    StatisticBank bank(model.K(), spec.scheme);
    RunOutcome out;
    out.censored = true;
    out.T = simulate_path(model, bank, scenario, horizon, rng, [&](std::size_t n, const StatisticBank& b) {
        if (auto d = check_stop(spec, b.Y(), b.W())) {
            out.censored = false;
            out.decision = d;
            return false;
        }
        (void)n;
        return true;
    });
    out.stopped_after_change = !out.censored && scenario.change_point && out.T > *scenario.change_point;
    return out;
}

enum class DecisionRule {
    first_crossing,  // family procedures tau(b, h)
    argmax,          // min-CuSum sigma(b)
};

inline DecisionRule decision_rule(Variant v) {
    return v == Variant::min_cusum ? DecisionRule::argmax : DecisionRule::first_crossing;
}

// Stopping data for a whole (b, h) grid from one statistic path. Because
// tau(b, h) is non-decreasing in both thresholds, the set of grid cells that
// have already stopped is a lower set; it is stored as one frontier per h
// row. Newly stopped cells are reported to the sink as contiguous b-ranges:
//     sink(h_index, b_lo, b_hi, n, decision, censored)
// covering b indices [b_lo, b_hi). Every cell is reported exactly once by
// the time finish() returns.
class GridStopTracker {
public:
    GridStopTracker(std::span<const double> b_grid, std::span<const double> h_grid, DecisionRule rule)
        : b_(b_grid.begin(), b_grid.end()), h_(h_grid.begin(), h_grid.end()), rule_(rule),
          covered_(h_grid.size(), 0) {
        if (b_.empty() || h_.empty()) throw ConfigError("threshold grids must be non-empty");
        if (!std::is_sorted(b_.begin(), b_.end()) || !std::is_sorted(h_.begin(), h_.end())) {
            throw ConfigError("threshold grids must be sorted ascending");
        }
    }

    void reset() { std::fill(covered_.begin(), covered_.end(), 0); }

    bool done() const noexcept { return covered_.back() == b_.size(); }

    template <class Sink>
    void observe(std::size_t n, std::span<const double> Y, std::span<const double> W, Sink&& sink) {
        const std::size_t K = Y.size();
        if (rule_ == DecisionRule::argmax) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < K; ++i) {
                if (Y[i] > Y[best]) best = i;
            }
            cover(n, Y[best], infinity, best, sink);
            return;
        }
        for (std::size_t i = 0; i < K && !done(); ++i) {
            cover(n, Y[i], K == 1 ? infinity : W[i], i, sink);
        }
    }

    // Reports every cell that never stopped as censored at the horizon.
    template <class Sink>
    void finish(std::size_t horizon, Sink&& sink) {
        for (std::size_t r = 0; r < h_.size(); ++r) {
            if (covered_[r] < b_.size()) {
                sink(r, covered_[r], b_.size(), horizon, std::size_t{0}, true);
                covered_[r] = b_.size();
            }
        }
    }

private:
    template <class Sink>
    void cover(std::size_t n, double y, double w, std::size_t decision, Sink& sink) {
        const auto nb = static_cast<std::size_t>(std::upper_bound(b_.begin(), b_.end(), y) - b_.begin());
        if (nb == 0) return;
        const auto nh = static_cast<std::size_t>(std::upper_bound(h_.begin(), h_.end(), w) - h_.begin());
        // covered_ is non-increasing in the row index: rows below `first`
        // already reach nb.
        const auto first = static_cast<std::size_t>(
            std::partition_point(covered_.begin(), covered_.end(), [nb](std::size_t c) { return c >= nb; }) -
            covered_.begin());
        for (std::size_t r = first; r < nh; ++r) {
            sink(r, covered_[r], nb, n, decision, false);
            covered_[r] = nb;
        }
    }

    std::vector<double> b_;
    std::vector<double> h_;
    DecisionRule rule_;
    std::vector<std::size_t> covered_;
};

// One recorded step of a statistic path.
struct StatisticStep {
    std::vector<double> Y;
    std::vector<double> W;
};

// Stopping time and decision for every grid cell, row-major by h.
struct GridStops {
    std::size_t B = 0;
    std::size_t H = 0;
    std::vector<std::size_t> T;
    std::vector<std::size_t> D;
    std::vector<std::uint8_t> censored;

    std::size_t index(std::size_t b_idx, std::size_t h_idx) const { return h_idx * B + b_idx; }
};

inline GridStops pathwise_stop_times(std::span<const StatisticStep> path, std::span<const double> b_grid,
                                     std::span<const double> h_grid, DecisionRule rule) {
    GridStops out;
    out.B = b_grid.size();
    out.H = h_grid.size();
    out.T.assign(out.B * out.H, 0);
    out.D.assign(out.B * out.H, 0);
    out.censored.assign(out.B * out.H, 0);
    auto sink = [&](std::size_t r, std::size_t lo, std::size_t hi, std::size_t n, std::size_t d, bool cens) {
        for (std::size_t c = lo; c < hi; ++c) {
            out.T[r * out.B + c] = n;
            out.D[r * out.B + c] = d;
            out.censored[r * out.B + c] = cens ? 1 : 0;
        }
    };
    GridStopTracker tracker(b_grid, h_grid, rule);
    for (std::size_t n = 1; n <= path.size() && !tracker.done(); ++n) {
        tracker.observe(n, path[n - 1].Y, path[n - 1].W, sink);
    }
    tracker.finish(path.size(), sink);
    return out;
}

} // namespace seqdiag
