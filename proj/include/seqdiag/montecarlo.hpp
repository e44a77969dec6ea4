#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "seqdiag/error.hpp"
#include "seqdiag/models.hpp"
#include "seqdiag/procedures.hpp"
#include "seqdiag/rng.hpp"
#include "seqdiag/statistics.hpp"

namespace seqdiag {

struct MCConfig {
    std::size_t paths = 50000;                // L, paths per post-change scenario
    std::size_t horizon = default_horizon;    // censoring cap
    std::uint64_t seed = 0;
    std::size_t workers = 1;                  // never affects results
    double false_alarm_fraction = 0.1;        // P_inf uses this fraction of L
    bool exploit_symmetry = false;            // mirror exchangeable alternatives

    std::size_t false_alarm_paths() const {
        const auto n = static_cast<std::size_t>(std::llround(false_alarm_fraction * static_cast<double>(paths)));
        return std::max<std::size_t>(1, n);
    }

    void validate() const {
        if (paths == 0) throw ConfigError("mc.paths must be >= 1");
        if (horizon == 0) throw ConfigError("mc.horizon must be >= 1");
        if (!(false_alarm_fraction > 0.0) || false_alarm_fraction > 1.0) {
            throw ConfigError("mc.false_alarm_fraction must be in (0, 1]");
        }
    }
};

inline constexpr double unreliable_censoring_fraction = 0.5;
inline constexpr std::size_t min_retained_for_misid = 100;

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// A mean stopping time (or a probability) with its standard error.
struct Estimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t n = 0;         // paths (or retained paths for probabilities)
    std::size_t censored = 0;  // censored contributions (counted at the horizon)
    bool unreliable = false;   // censoring above the tolerated fraction

    // Means count censored runs at the horizon, so they are lower bounds.
    bool lower_bound() const noexcept { return censored > 0; }
};

// Estimates over a (b, h) grid, row-major by h.
struct EstimateTable {
    std::string metric;
    std::vector<double> b;
    std::vector<double> h;
    std::vector<Estimate> cells;

    std::size_t B() const noexcept { return b.size(); }
    std::size_t H() const noexcept { return h.size(); }
    const Estimate& at(std::size_t b_idx, std::size_t h_idx) const { return cells[h_idx * b.size() + b_idx]; }
    Estimate& at(std::size_t b_idx, std::size_t h_idx) { return cells[h_idx * b.size() + b_idx]; }

    std::size_t unreliable_cells() const {
        return static_cast<std::size_t>(
            std::count_if(cells.begin(), cells.end(), [](const Estimate& e) { return e.unreliable; }));
    }
};

inline std::string estimate_csv_header() { return "b,h,metric,estimate,se,censored,n\n"; }

inline std::string to_csv(const EstimateTable& t, bool header = true) {
    std::string out = header ? estimate_csv_header() : std::string();
    for (std::size_t r = 0; r < t.H(); ++r) {
        for (std::size_t c = 0; c < t.B(); ++c) {
            const Estimate& e = t.at(c, r);
            out += format_double(t.b[c]) + ',' + format_double(t.h[r]) + ',' + t.metric + ',' +
                   format_double(e.value) + ',' + format_double(e.se) + ',' + std::to_string(e.censored) + ',' +
                   std::to_string(e.n) + '\n';
        }
    }
    return out;
}

namespace detail {

inline void warn(const std::string& msg) { std::clog << "warning: " << msg << '\n'; }

// Difference arrays over the rows of a grid: adding v to cells [lo, hi) of
// row r is O(1); prefix sums recover the cell totals.
class RowDiff {
public:
    RowDiff() = default;
    RowDiff(std::size_t B, std::size_t H) : B_(B), data_((B + 1) * H, 0) {}

    void add(std::size_t r, std::size_t lo, std::size_t hi, std::int64_t v) {
        data_[r * (B_ + 1) + lo] += v;
        data_[r * (B_ + 1) + hi] -= v;
    }

    void merge(const RowDiff& o) {
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    }

    std::vector<std::int64_t> totals() const {
        const std::size_t H = data_.size() / (B_ + 1);
        std::vector<std::int64_t> out(B_ * H);
        for (std::size_t r = 0; r < H; ++r) {
            std::int64_t run = 0;
            for (std::size_t c = 0; c < B_; ++c) {
                run += data_[r * (B_ + 1) + c];
                out[r * B_ + c] = run;
            }
        }
        return out;
    }

private:
    std::size_t B_ = 0;
    std::vector<std::int64_t> data_;
};

// Integer sums keep the aggregate exact and therefore independent of how
// paths are split across workers.
struct StopTimeAccumulator {
    std::size_t B = 0, H = 0;
    std::size_t paths = 0;
    RowDiff sum, sum_sq, censored;

    StopTimeAccumulator(std::size_t b, std::size_t h) : B(b), H(h), sum(b, h), sum_sq(b, h), censored(b, h) {}

    void on_segment(std::size_t r, std::size_t lo, std::size_t hi, std::size_t n, std::size_t, bool cens) {
        const auto t = static_cast<std::int64_t>(n);
        sum.add(r, lo, hi, t);
        sum_sq.add(r, lo, hi, t * t);
        if (cens) censored.add(r, lo, hi, 1);
    }
    void end_path() { ++paths; }

    void merge(const StopTimeAccumulator& o) {
        paths += o.paths;
        sum.merge(o.sum);
        sum_sq.merge(o.sum_sq);
        censored.merge(o.censored);
    }

    std::vector<Estimate> estimates() const {
        const auto s = sum.totals();
        const auto ss = sum_sq.totals();
        const auto c = censored.totals();
        std::vector<Estimate> out(s.size());
        const auto n = static_cast<__int128>(paths);
        for (std::size_t k = 0; k < s.size(); ++k) {
            Estimate& e = out[k];
            e.n = paths;
            e.censored = static_cast<std::size_t>(c[k]);
            e.value = static_cast<double>(s[k]) / static_cast<double>(paths);
            if (paths > 1) {
                // n * sum_sq - sum^2 is exact in 128-bit arithmetic.
                const __int128 num = n * static_cast<__int128>(ss[k]) -
                                     static_cast<__int128>(s[k]) * static_cast<__int128>(s[k]);
                const double var = static_cast<double>(num) / (static_cast<double>(paths) * (paths - 1.0));
                e.se = std::sqrt(std::max(0.0, var) / static_cast<double>(paths));
            }
            e.unreliable = static_cast<double>(e.censored) > unreliable_censoring_fraction * static_cast<double>(paths);
        }
        return out;
    }
};

struct MisidAccumulator {
    std::size_t B = 0, H = 0;
    std::size_t change_point = 0;
    std::size_t truth = 0;
    std::size_t paths = 0;
    RowDiff retained, wrong, censored;

    MisidAccumulator(std::size_t b, std::size_t h, std::size_t nu, std::size_t j)
        : B(b), H(h), change_point(nu), truth(j), retained(b, h), wrong(b, h), censored(b, h) {}

    void on_segment(std::size_t r, std::size_t lo, std::size_t hi, std::size_t n, std::size_t d, bool cens) {
        if (cens) {
            censored.add(r, lo, hi, 1);
            return;
        }
        if (n <= change_point) return;  // false alarm
        retained.add(r, lo, hi, 1);
        if (d != truth) wrong.add(r, lo, hi, 1);
    }
    void end_path() { ++paths; }

    void merge(const MisidAccumulator& o) {
        paths += o.paths;
        retained.merge(o.retained);
        wrong.merge(o.wrong);
        censored.merge(o.censored);
    }
};

// Runs body(path_index, acc) for every path, split into contiguous blocks
// over `workers` threads, and merges the per-worker accumulators in order.
template <class Acc, class Make, class Body>
Acc run_paths(std::size_t n_paths, std::size_t workers, Make make, Body body) {
    workers = std::max<std::size_t>(1, std::min(workers, n_paths));
    std::vector<Acc> parts;
    parts.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) parts.push_back(make());
    auto work = [&](std::size_t w) {
        const std::size_t lo = n_paths * w / workers;
        const std::size_t hi = n_paths * (w + 1) / workers;
        for (std::size_t p = lo; p < hi; ++p) body(p, parts[w]);
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    work(w);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    for (std::size_t w = 1; w < workers; ++w) parts[0].merge(parts[w]);
    return std::move(parts[0]);
}

inline std::uint64_t scenario_tag(const Scenario& s) {
    if (!s.change_point) return 0;
    return ((static_cast<std::uint64_t>(s.post_index) + 1) << 40) | static_cast<std::uint64_t>(*s.change_point);
}

inline void warn_if_expensive(const Scheme& scheme, std::size_t horizon) {
    if (scheme.variant == Variant::generalized_full && horizon > 1000) {
        warn("generalized_full costs O(n) per step; horizon " + std::to_string(horizon) +
             " may be very slow");
    }
}

// Simulates `n_paths` paths under `scenario` and feeds every grid cell's
// stopping data into an accumulator built by make().
template <class Acc, class Make>
Acc simulate_grid(const ChangeModel& model, const Scheme& scheme, const Scenario& scenario,
                  std::span<const double> b_grid, std::span<const double> h_grid, const MCConfig& mc,
                  std::size_t n_paths, Make make) {
    mc.validate();
    warn_if_expensive(scheme, mc.horizon);
    const std::uint64_t tag = scenario_tag(scenario);
    return run_paths<Acc>(n_paths, mc.workers, make, [&](std::size_t p, Acc& acc) {
        RandomStream rng = rng_stream(mc.seed, p, tag);
        StatisticBank bank(model.K(), scheme);
        GridStopTracker tracker(b_grid, h_grid, decision_rule(scheme.variant));
        auto sink = [&acc](std::size_t r, std::size_t lo, std::size_t hi, std::size_t n, std::size_t d, bool c) {
            acc.on_segment(r, lo, hi, n, d, c);
        };
        simulate_path(model, bank, scenario, mc.horizon, rng, [&](std::size_t n, const StatisticBank& b) {
            tracker.observe(n, b.Y(), b.W(), sink);
            return !tracker.done();
        });
        tracker.finish(mc.horizon, sink);
        acc.end_path();
    });
}

} // namespace detail

// Mean stopping time over the grid under an arbitrary scenario.
inline EstimateTable estimate_stop_time(const Scheme& scheme, const ChangeModel& model, const Scenario& scenario,
                                        std::span<const double> b_grid, std::span<const double> h_grid,
                                        const MCConfig& mc, std::size_t n_paths, std::string metric) {
    auto acc = detail::simulate_grid<detail::StopTimeAccumulator>(
        model, scheme, scenario, b_grid, h_grid, mc, n_paths,
        [&] { return detail::StopTimeAccumulator(b_grid.size(), h_grid.size()); });
    EstimateTable t;
    t.metric = std::move(metric);
    t.b.assign(b_grid.begin(), b_grid.end());
    t.h.assign(h_grid.begin(), h_grid.end());
    t.cells = acc.estimates();
    return t;
}

// E_inf[tau(b, h)] from mc.false_alarm_paths() paths shared by the grid.
inline EstimateTable estimate_arl_false_alarm(const Scheme& scheme, const ChangeModel& model,
                                              std::span<const double> b_grid, std::span<const double> h_grid,
                                              const MCConfig& mc) {
    return estimate_stop_time(scheme, model, Scenario::no_change(), b_grid, h_grid, mc, mc.false_alarm_paths(),
                              "arl_false_alarm");
}

// E_i[tau(b, h)] with the change at time 0, from mc.paths paths. This is the
// Lorden delay for min_cusum, matrix and adaptive; for the other variants it
// is only the delay at change-point 0, and the metric name says so.
inline EstimateTable estimate_delay_at_zero(const Scheme& scheme, const ChangeModel& model, std::size_t i,
                                            std::span<const double> b_grid, std::span<const double> h_grid,
                                            const MCConfig& mc) {
    if (i >= model.K()) throw ConfigError("alternative index out of range");
    const std::string metric = (lorden_equals_zero_delay(scheme.variant) ? "lorden_delay_" : "delay_at_nu0_") +
                               std::to_string(i + 1);
    return estimate_stop_time(scheme, model, Scenario::change_at(0, i), b_grid, h_grid, mc, mc.paths, metric);
}

// P_{nu,j}(D != j | T > nu) with its binomial standard error.
struct MisidEstimate {
    double probability = 0.0;
    double se = 0.0;
    std::size_t retained = 0;     // paths with T > nu that were not censored
    std::size_t false_alarms = 0; // paths with T <= nu
    std::size_t censored = 0;
    std::size_t paths = 0;
    bool low_power = false;       // retained < min_retained_for_misid
};

inline MisidEstimate make_misid(std::int64_t retained, std::int64_t wrong, std::int64_t censored, std::size_t paths) {
    MisidEstimate m;
    m.paths = paths;
    m.retained = static_cast<std::size_t>(retained);
    m.censored = static_cast<std::size_t>(censored);
    m.false_alarms = paths - m.retained - m.censored;
    if (retained > 0) {
        m.probability = static_cast<double>(wrong) / static_cast<double>(retained);
        m.se = std::sqrt(m.probability * (1.0 - m.probability) / static_cast<double>(retained));
    }
    m.low_power = m.retained < min_retained_for_misid;
    return m;
}

struct MisidTable {
    std::vector<double> b;
    std::vector<double> h;
    std::size_t change_point = 0;
    std::size_t truth = 0;
    std::vector<MisidEstimate> cells;  // row-major by h

    const MisidEstimate& at(std::size_t b_idx, std::size_t h_idx) const { return cells[h_idx * b.size() + b_idx]; }
};

// Misidentification over a whole grid from mc.paths shared paths under P_{nu,j}.
inline MisidTable estimate_misid_grid(const Scheme& scheme, const ChangeModel& model, std::size_t nu, std::size_t j,
                                      std::span<const double> b_grid, std::span<const double> h_grid,
                                      const MCConfig& mc) {
    if (j >= model.K()) throw ConfigError("alternative index out of range");
    auto acc = detail::simulate_grid<detail::MisidAccumulator>(
        model, scheme, Scenario::change_at(nu, j), b_grid, h_grid, mc, mc.paths,
        [&] { return detail::MisidAccumulator(b_grid.size(), h_grid.size(), nu, j); });
    const auto retained = acc.retained.totals();
    const auto wrong = acc.wrong.totals();
    const auto censored = acc.censored.totals();
    MisidTable t;
    t.b.assign(b_grid.begin(), b_grid.end());
    t.h.assign(h_grid.begin(), h_grid.end());
    t.change_point = nu;
    t.truth = j;
    t.cells.reserve(retained.size());
    for (std::size_t k = 0; k < retained.size(); ++k) {
        t.cells.push_back(make_misid(retained[k], wrong[k], censored[k], acc.paths));
    }
    return t;
}

inline MisidEstimate estimate_misid(const ProcedureSpec& spec, const ChangeModel& model, std::size_t nu,
                                    std::size_t j, const MCConfig& mc) {
    spec.validate();
    const double b[] = {spec.b};
    const double h[] = {spec.h};
    return estimate_misid_grid(spec.scheme, model, nu, j, b, h, mc).cells.front();
}

} // namespace seqdiag
