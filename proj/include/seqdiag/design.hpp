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
#include "seqdiag/montecarlo.hpp"
#include "seqdiag/procedures.hpp"
#include "seqdiag/statistics.hpp"

namespace seqdiag {

// b_alpha + 2 = |log alpha| + log K + 2.
inline double default_b_max(double alpha, std::size_t K) {
    return std::abs(std::log(alpha)) + std::log(static_cast<double>(K)) + 2.0;
}

namespace detail {
inline std::vector<double> arithmetic_grid(double start, double step, double stop) {
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        // Snap to 1e-9 so that e.g. 285 * 0.01 prints as 2.85.
        out.push_back(std::round((start + static_cast<double>(k) * step) * 1e9) / 1e9);
    }
    return out;
}
} // namespace detail

struct ThresholdGrid {
    double b_step = 0.01;
    double b_max = 0.0;
    double h_start = 0.05;
    double h_step = 0.05;
    double h_max = 0.0;

    static ThresholdGrid defaults(double alpha, std::size_t K) {
        ThresholdGrid g;
        g.b_max = default_b_max(alpha, K);
        g.h_max = g.b_max;
        return g;
    }

    void validate() const {
        if (!(b_step > 0.0) || !(h_step > 0.0)) throw ConfigError("grid steps must be positive");
        if (!(b_max >= 0.0) || !(h_max >= h_start) || !(h_start >= 0.0)) {
            throw ConfigError("grid limits must satisfy 0 <= b_max and 0 <= h_start <= h_max");
        }
    }

    std::vector<double> b_values() const {
        validate();
        return detail::arithmetic_grid(0.0, b_step, b_max);
    }
    std::vector<double> h_values() const {
        validate();
        return detail::arithmetic_grid(h_start, h_step, h_max);
    }
};

struct Calibration {
    std::size_t alternative = 0;  // 0-based
    double b = 0.0;
    std::size_t b_index = 0;
    Estimate arl;                 // E_inf[sigma_i(b)] at the chosen b
};

// Smallest grid b whose estimated E_inf[sigma_i(b)] reaches 1/alpha.
// Since E_inf[sigma_i(b)] >= e^b, the answer lies at or below |log alpha|;
// grid points beyond |log alpha| + 1 are not simulated.
inline Calibration calibrate_cusum(const ChangeModel& model, std::size_t i, double alpha,
                                   std::span<const double> b_grid, const MCConfig& mc) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (i >= model.K()) throw ConfigError("alternative index out of range");
    const double cut = std::abs(std::log(alpha)) + 1.0;
    const auto kept = static_cast<std::size_t>(std::upper_bound(b_grid.begin(), b_grid.end(), cut) - b_grid.begin());
    if (kept > 0) b_grid = b_grid.first(kept);
    const ChangeModel single = model.restrict_to(i);
    const double h[] = {0.0};
    const EstimateTable arl =
        estimate_arl_false_alarm(Scheme{Variant::min_cusum, 0}, single, b_grid, h, mc);
    const double target = 1.0 / alpha;
    double best = 0.0;
    for (std::size_t c = 0; c < arl.B(); ++c) {
        best = std::max(best, arl.at(c, 0).value);
        if (arl.at(c, 0).value >= target) return Calibration{i, arl.b[c], c, arl.at(c, 0)};
    }
    throw GridExhausted("no grid threshold reaches E_inf[sigma_" + std::to_string(i + 1) + "] >= " +
                            format_double(target) + "; largest estimate " + format_double(best),
                        best);
}

// E_i[sigma_i(b)] with the change at time 0: the optimal worst-case delay
// L_i(alpha) when b = b_i(alpha).
inline Estimate optimal_lorden(const ChangeModel& model, std::size_t i, double b, const MCConfig& mc) {
    if (i >= model.K()) throw ConfigError("alternative index out of range");
    const ChangeModel single = model.restrict_to(i);
    const double bs[] = {b};
    const double h[] = {0.0};
    return estimate_delay_at_zero(Scheme{Variant::min_cusum, 0}, single, 0, bs, h, mc).cells.front();
}

// Grid estimates behind the feasibility regions of one scheme.
struct RegionEstimates {
    Scheme scheme;
    EstimateTable arl;                 // E_inf[tau(b, h)]
    std::vector<EstimateTable> delay;  // E_i[tau(b, h)], i = 0..K-1
    bool lorden_exact = true;          // false: delays are the change-point-0 proxy
};

inline RegionEstimates estimate_regions(const Scheme& scheme, const ChangeModel& model,
                                        std::span<const double> b_grid, std::span<const double> h_grid,
                                        const MCConfig& mc) {
    RegionEstimates est;
    est.scheme = scheme;
    est.lorden_exact = lorden_equals_zero_delay(scheme.variant);
    est.arl = estimate_arl_false_alarm(scheme, model, b_grid, h_grid, mc);
    est.delay.resize(model.K());
    for (std::size_t i = 0; i < model.K(); ++i) {
        const std::size_t twin = model.equivalent_to(i);
        if (mc.exploit_symmetry && twin != i) {
            est.delay[i] = est.delay[twin];
            est.delay[i].metric = (est.lorden_exact ? "lorden_delay_" : "delay_at_nu0_") + std::to_string(i + 1);
        } else {
            est.delay[i] = estimate_delay_at_zero(scheme, model, i, b_grid, h_grid, mc);
        }
    }
    return est;
}

// Boolean masks over the grid, row-major by h.
struct RegionMask {
    std::vector<double> b;
    std::vector<double> h;
    std::vector<std::uint8_t> A;               // false-alarm constraint
    std::vector<std::vector<std::uint8_t>> D;  // delay constraint per alternative
    std::vector<std::uint8_t> S;               // A and every D_i
    bool delay_proxy = false;                  // D_i built from the change-point-0 delay
    std::size_t undecided = 0;                 // cells excluded only because of heavy censoring

    std::size_t B() const noexcept { return b.size(); }
    std::size_t H() const noexcept { return h.size(); }
    std::size_t index(std::size_t b_idx, std::size_t h_idx) const { return h_idx * b.size() + b_idx; }
    bool feasible() const { return std::any_of(S.begin(), S.end(), [](std::uint8_t v) { return v != 0; }); }
};

// A(alpha) = {E_inf[tau] >= 1/alpha}, D_i(alpha, r) = {delay_i <= r * max_L}.
// Censored runs enter the means at the horizon, so an ARL estimate is a lower
// bound: a cell whose lower bound already reaches 1/alpha is in A even when
// heavily censored. A heavily censored cell below the target is left out and
// counted as undecided. In conservative mode each estimate must clear its
// constraint by 2 standard errors.
inline RegionMask build_regions(const RegionEstimates& est, double alpha, double r, double max_L,
                                bool conservative = false) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(r > 1.0)) throw ConfigError("delay factor r must be > 1");
    RegionMask m;
    m.b = est.arl.b;
    m.h = est.arl.h;
    m.delay_proxy = !est.lorden_exact;
    const std::size_t cells = m.B() * m.H();
    const double z = conservative ? 2.0 : 0.0;
    m.A.assign(cells, 0);
    m.S.assign(cells, 0);
    for (std::size_t k = 0; k < cells; ++k) {
        const Estimate& e = est.arl.cells[k];
        const bool meets = e.value - z * e.se >= 1.0 / alpha;
        m.A[k] = meets ? 1 : 0;
        if (!meets && e.unreliable) ++m.undecided;
    }
    const double limit = r * max_L;
    m.D.assign(est.delay.size(), std::vector<std::uint8_t>(cells, 0));
    for (std::size_t i = 0; i < est.delay.size(); ++i) {
        for (std::size_t k = 0; k < cells; ++k) {
            const Estimate& e = est.delay[i].cells[k];
            m.D[i][k] = (e.value + z * e.se <= limit && !e.unreliable) ? 1 : 0;
        }
    }
    for (std::size_t k = 0; k < cells; ++k) {
        bool in = m.A[k] != 0;
        for (const auto& d : m.D) in = in && d[k] != 0;
        m.S[k] = in ? 1 : 0;
    }
    return m;
}

inline RegionMask compute_regions(const Scheme& scheme, const ChangeModel& model, double alpha, double r,
                                  const ThresholdGrid& grid, const MCConfig& mc, double max_L,
                                  bool conservative = false) {
    const auto b = grid.b_values();
    const auto h = grid.h_values();
    return build_regions(estimate_regions(scheme, model, b, h, mc), alpha, r, max_L, conservative);
}

struct GridPoint {
    std::size_t b_index = 0;
    std::size_t h_index = 0;

    bool operator==(const GridPoint&) const = default;
};

// Largest h with any feasible b, then the largest feasible b at that h.
inline std::optional<GridPoint> select_thresholds(const RegionMask& mask) {
    for (std::size_t r = mask.H(); r-- > 0;) {
        for (std::size_t c = mask.B(); c-- > 0;) {
            if (mask.S[mask.index(c, r)]) return GridPoint{c, r};
        }
    }
    return std::nullopt;
}

// Worst misidentification at one grid point over alternatives and change-points.
struct WorstMisid {
    MisidEstimate estimate;
    std::size_t truth = 0;
    std::size_t change_point = 0;
};

struct MisidChoice {
    GridPoint point;
    WorstMisid worst;
    bool low_power = false;  // every candidate had fewer retained paths than required
};

// Alternatives to simulate: exchangeable twins are skipped when symmetry is on.
inline std::vector<std::size_t> distinct_alternatives(const ChangeModel& model, const MCConfig& mc) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < model.K(); ++j) {
        if (!mc.exploit_symmetry || model.equivalent_to(j) == j) out.push_back(j);
    }
    return out;
}

// Worst-case misidentification (max over j and nu in nu_grid) for every grid
// cell, estimated from shared paths per (nu, j).
inline std::vector<WorstMisid> worst_misid_grid(const Scheme& scheme, const ChangeModel& model,
                                                std::span<const double> b_grid, std::span<const double> h_grid,
                                                std::span<const std::size_t> nu_grid, const MCConfig& mc) {
    std::vector<WorstMisid> worst(b_grid.size() * h_grid.size());
    bool first = true;
    for (std::size_t j : distinct_alternatives(model, mc)) {
        for (std::size_t nu : nu_grid) {
            const MisidTable t = estimate_misid_grid(scheme, model, nu, j, b_grid, h_grid, mc);
            for (std::size_t k = 0; k < worst.size(); ++k) {
                if (first || t.cells[k].probability > worst[k].estimate.probability) {
                    worst[k] = WorstMisid{t.cells[k], j, nu};
                }
            }
            first = false;
        }
    }
    return worst;
}

// The point of S minimizing the worst-case misidentification, given the
// worst-case estimates for every grid cell. Cells with too few retained paths
// are skipped unless nothing else is feasible. Ties go to the point the
// lexicographic rule prefers.
inline MisidChoice select_misid_optimal(const RegionMask& mask, std::span<const WorstMisid> worst) {
    if (!mask.feasible()) throw ConfigError("misid-optimal selection needs a non-empty feasible region");
    if (worst.size() != mask.S.size()) throw ConfigError("misid grid does not match the region mask");
    std::optional<MisidChoice> best;
    std::optional<MisidChoice> best_low_power;
    for (std::size_t r = mask.H(); r-- > 0;) {
        for (std::size_t c = mask.B(); c-- > 0;) {
            const std::size_t k = mask.index(c, r);
            if (!mask.S[k]) continue;
            auto& slot = worst[k].estimate.low_power ? best_low_power : best;
            if (!slot || worst[k].estimate.probability < slot->worst.estimate.probability) {
                slot = MisidChoice{GridPoint{c, r}, worst[k], worst[k].estimate.low_power};
            }
        }
    }
    return best ? *best : *best_low_power;
}

// Every feasible cell is evaluated: all cells share the same simulated paths,
// so exhaustive search costs no more than a frontier.
inline MisidChoice misid_optimal_thresholds(const Scheme& scheme, const ChangeModel& model, const RegionMask& mask,
                                            std::span<const std::size_t> nu_grid, const MCConfig& mc) {
    if (!mask.feasible()) throw ConfigError("misid-optimal selection needs a non-empty feasible region");
    if (nu_grid.empty()) throw ConfigError("change-point grid must be non-empty");
    const auto worst = worst_misid_grid(scheme, model, mask.b, mask.h, nu_grid, mc);
    return select_misid_optimal(mask, worst);
}

// Everything produced by designing one scheme at one (alpha, r).
struct DesignReport {
    Scheme scheme;
    double alpha = 0.0;
    double r = 0.0;
    std::vector<Calibration> calibration;  // b_i(alpha)
    std::vector<Estimate> optimal_delay;   // L_i(alpha)
    double max_L = 0.0;
    RegionMask mask;
    std::optional<GridPoint> selected;

    std::optional<ProcedureSpec> selected_spec() const {
        if (!selected) return std::nullopt;
        return ProcedureSpec{scheme, mask.b[selected->b_index], mask.h[selected->h_index]};
    }
};

// b_i(alpha) and L_i(alpha) for every alternative.
struct OptimalPerformance {
    std::vector<Calibration> calibration;
    std::vector<Estimate> delay;

    double max_delay() const {
        double m = 0.0;
        for (const auto& e : delay) m = std::max(m, e.value);
        return m;
    }
};

inline OptimalPerformance optimal_performance(const ChangeModel& model, double alpha, std::span<const double> b_grid,
                                              const MCConfig& mc) {
    OptimalPerformance out;
    out.calibration.resize(model.K());
    out.delay.resize(model.K());
    for (std::size_t i = 0; i < model.K(); ++i) {
        const std::size_t twin = model.equivalent_to(i);
        if (mc.exploit_symmetry && twin != i) {
            out.calibration[i] = out.calibration[twin];
            out.calibration[i].alternative = i;
            out.delay[i] = out.delay[twin];
            continue;
        }
        out.calibration[i] = calibrate_cusum(model, i, alpha, b_grid, mc);
        out.delay[i] = optimal_lorden(model, i, out.calibration[i].b, mc);
    }
    return out;
}

inline DesignReport design(const Scheme& scheme, double alpha, double r,
                           const OptimalPerformance& optimal, const RegionEstimates& estimates,
                           bool conservative = false) {
    DesignReport rep;
    rep.scheme = scheme;
    rep.alpha = alpha;
    rep.r = r;
    rep.calibration = optimal.calibration;
    rep.optimal_delay = optimal.delay;
    rep.max_L = optimal.max_delay();
    rep.mask = build_regions(estimates, alpha, r, rep.max_L, conservative);
    rep.selected = select_thresholds(rep.mask);
    return rep;
}

} // namespace seqdiag
