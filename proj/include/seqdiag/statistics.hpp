#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqdiag/error.hpp"

namespace seqdiag {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

// Which isolation statistic W_i accompanies the CuSum statistics Y_i.
enum class Variant {
    min_cusum,         // no W; identification by argmax Y_i
    matrix,            // W_ij = Y_ij, CuSum of l_ij
    adaptive,          // W_ij = Y'_ij, Y_ij restarted whenever Y_i hits 0
    vector,            // W_ij = Y_i - Y_j
    generalized,       // window-limited generalized CuSum, window m
    generalized_full,  // generalized CuSum over the whole history
};

inline std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::min_cusum: return "min_cusum";
    case Variant::matrix: return "matrix";
    case Variant::adaptive: return "adaptive";
    case Variant::vector: return "vector";
    case Variant::generalized: return "generalized";
    case Variant::generalized_full: return "generalized_full";
    }
    return "?";
}

inline Variant parse_variant(std::string_view name) {
    for (Variant v : {Variant::min_cusum, Variant::matrix, Variant::adaptive, Variant::vector,
                      Variant::generalized, Variant::generalized_full}) {
        if (to_string(v) == name) return v;
    }
    throw ConfigError("unknown procedure variant '" + std::string(name) + "'");
}

// True when the worst-case (Lorden) delay equals the delay at change-point 0.
inline bool lorden_equals_zero_delay(Variant v) {
    return v == Variant::min_cusum || v == Variant::matrix || v == Variant::adaptive;
}

// A variant together with its parameters, thresholds excluded.
struct Scheme {
    Variant variant = Variant::adaptive;
    std::size_t window = 0;  // generalized only

    bool operator==(const Scheme&) const = default;
};

inline std::string describe(const Scheme& s) {
    std::string out(to_string(s.variant));
    if (s.variant == Variant::generalized) out += "(m=" + std::to_string(s.window) + ")";
    return out;
}

namespace detail {
inline void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw DataError(std::string("non-finite ") + what);
    }
}
} // namespace detail

// CuSum statistics Y_1..Y_K at time n.
struct CusumVector {
    std::vector<double> Y;
    std::size_t n = 0;

    CusumVector() = default;
    explicit CusumVector(std::size_t K) : Y(K, 0.0) {}
};

// Y_i(n) = (Y_i(n-1) + l_i(n))^+ componentwise.
inline void update_cusum(CusumVector& state, std::span<const double> llrs) {
    detail::require_finite(llrs, "log-likelihood ratio");
    for (std::size_t i = 0; i < state.Y.size(); ++i) {
        state.Y[i] = std::max(state.Y[i] + llrs[i], 0.0);
    }
    ++state.n;
}

// R_i(n): the most recent t <= n with Y_i(t) = 0.
struct ResetClock {
    std::vector<std::size_t> R;

    ResetClock() = default;
    explicit ResetClock(std::size_t K) : R(K, 0) {}
};

// Call after update_cusum. The positive part produces literal zeros, so the
// comparison is exact.
inline void update_reset_clock(ResetClock& clock, const CusumVector& cusums) {
    for (std::size_t i = 0; i < clock.R.size(); ++i) {
        if (cusums.Y[i] == 0.0) clock.R[i] = cusums.n;
    }
}

enum class PairKind { matrix, adaptive, vector };

// K x K row-major pairwise statistics; entry (i, j) is meaningful for i != j.
struct PairMatrix {
    PairKind kind = PairKind::matrix;
    std::size_t K = 0;
    std::vector<double> W;

    PairMatrix() = default;
    PairMatrix(PairKind k, std::size_t alternatives)
        : kind(k), K(alternatives), W(alternatives * alternatives, 0.0) {}

    double operator()(std::size_t i, std::size_t j) const { return W[i * K + j]; }
    double& operator()(std::size_t i, std::size_t j) { return W[i * K + j]; }
};

// Call after update_cusum; the adaptive indicator reads Y_i(n). `pair_llrs`
// is K x K row-major with l_ij(n) at (i, j); unused for the vector kind.
inline void update_pair_matrix(PairMatrix& state, const CusumVector& cusums,
                               std::span<const double> pair_llrs) {
    const std::size_t K = state.K;
    switch (state.kind) {
    case PairKind::matrix:
        for (std::size_t i = 0; i < K; ++i) {
            for (std::size_t j = 0; j < K; ++j) {
                if (j != i) state(i, j) = std::max(state(i, j) + pair_llrs[i * K + j], 0.0);
            }
        }
        break;
    case PairKind::adaptive:
        for (std::size_t i = 0; i < K; ++i) {
            const bool alive = cusums.Y[i] > 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                if (j == i) continue;
                state(i, j) = alive ? std::max(state(i, j) + pair_llrs[i * K + j], 0.0) : 0.0;
            }
        }
        break;
    case PairKind::vector:
        for (std::size_t i = 0; i < K; ++i) {
            for (std::size_t j = 0; j < K; ++j) {
                if (j != i) state(i, j) = cusums.Y[i] - cusums.Y[j];
            }
        }
        break;
    }
}

// History of l_i and l_ij for the generalized CuSum. window == 0 keeps the
// whole history (O(n) work per step); otherwise a ring of the last `window`
// observations.
class GeneralizedBuffer {
public:
    GeneralizedBuffer() = default;
    GeneralizedBuffer(std::size_t K, std::size_t window)
        : K_(K), window_(window), stride_(K + K * K), partial_(K + K * K) {
        if (window_ > 0) slots_.assign(window_ * stride_, 0.0);
    }

    std::size_t window() const noexcept { return window_; }
    std::size_t size() const noexcept { return count_; }

    // Appends time n's ratios and writes
    //   W[i] = max_{max(0, n-m) <= t <= n} min( sum_{u>t} l_i(u), min_{j != i} sum_{u>t} l_ij(u) )
    // into W (K values). The t = n term contributes 0.
    void update(std::span<const double> llrs, std::span<const double> pair_llrs, std::span<double> W) {
        push(llrs, pair_llrs);
        const std::size_t K = K_;
        std::fill(partial_.begin(), partial_.end(), 0.0);
        std::fill(W.begin(), W.begin() + K, 0.0);
        for (std::size_t back = 0; back < count_; ++back) {
            const double* slot = slot_from_newest(back);
            for (std::size_t k = 0; k < stride_; ++k) partial_[k] += slot[k];
            for (std::size_t i = 0; i < K; ++i) {
                double candidate = partial_[i];
                for (std::size_t j = 0; j < K; ++j) {
                    if (j != i) candidate = std::min(candidate, partial_[K + i * K + j]);
                }
                W[i] = std::max(W[i], candidate);
            }
        }
    }

    void reset() {
        count_ = 0;
        head_ = 0;
        if (window_ == 0) slots_.clear();
    }

private:
    void push(std::span<const double> llrs, std::span<const double> pair_llrs) {
        if (window_ == 0) {
            slots_.insert(slots_.end(), llrs.begin(), llrs.begin() + K_);
            slots_.insert(slots_.end(), pair_llrs.begin(), pair_llrs.begin() + K_ * K_);
            ++count_;
            return;
        }
        double* slot = slots_.data() + head_ * stride_;
        std::copy(llrs.begin(), llrs.begin() + K_, slot);
        std::copy(pair_llrs.begin(), pair_llrs.begin() + K_ * K_, slot + K_);
        head_ = (head_ + 1) % window_;
        count_ = std::min(count_ + 1, window_);
    }

    const double* slot_from_newest(std::size_t back) const {
        if (window_ == 0) return slots_.data() + (count_ - 1 - back) * stride_;
        const std::size_t idx = (head_ + window_ - 1 - back) % window_;
        return slots_.data() + idx * stride_;
    }

    std::size_t K_ = 0;
    std::size_t window_ = 0;
    std::size_t stride_ = 0;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    std::vector<double> slots_;
    std::vector<double> partial_;
};

inline void update_generalized(GeneralizedBuffer& buf, std::span<const double> llrs,
                               std::span<const double> pair_llrs, std::span<double> W) {
    detail::require_finite(pair_llrs, "pairwise log-likelihood ratio");
    buf.update(llrs, pair_llrs, W);
}

// Every running statistic needed by one procedure variant, advanced one
// observation at a time. Steady state performs no allocation except for
// generalized_full.
class StatisticBank {
public:
    StatisticBank(std::size_t K, Scheme scheme)
        : K_(K), scheme_(scheme), cusum_(K), clock_(K), pair_llrs_(K * K, 0.0), W_(K, infinity) {
        switch (scheme.variant) {
        case Variant::matrix: pairs_ = PairMatrix(PairKind::matrix, K); break;
        case Variant::adaptive: pairs_ = PairMatrix(PairKind::adaptive, K); break;
        case Variant::vector: pairs_ = PairMatrix(PairKind::vector, K); break;
        case Variant::generalized:
            if (scheme.window == 0) throw ConfigError("generalized variant needs window m >= 1");
            generalized_ = GeneralizedBuffer(K, scheme.window);
            break;
        case Variant::generalized_full: generalized_ = GeneralizedBuffer(K, 0); break;
        case Variant::min_cusum: break;
        }
        reset();
    }

    void reset() {
        cusum_ = CusumVector(K_);
        clock_ = ResetClock(K_);
        std::fill(pairs_.W.begin(), pairs_.W.end(), 0.0);
        generalized_.reset();
        refresh_isolation();
        if (scheme_.variant == Variant::generalized || scheme_.variant == Variant::generalized_full) {
            std::fill(W_.begin(), W_.end(), 0.0);
        }
    }

    // Advances with l_i(n); pairwise ratios are l_i - l_j.
    void advance(std::span<const double> llrs) {
        for (std::size_t i = 0; i < K_; ++i) {
            for (std::size_t j = 0; j < K_; ++j) pair_llrs_[i * K_ + j] = llrs[i] - llrs[j];
        }
        advance(llrs, pair_llrs_);
    }

    // Order within a step: CuSums, then reset clock, then pairwise statistics.
    void advance(std::span<const double> llrs, std::span<const double> pair_llrs) {
        update_cusum(cusum_, llrs);
        update_reset_clock(clock_, cusum_);
        switch (scheme_.variant) {
        case Variant::matrix:
        case Variant::adaptive:
        case Variant::vector:
            detail::require_finite(pair_llrs, "pairwise log-likelihood ratio");
            update_pair_matrix(pairs_, cusum_, pair_llrs);
            refresh_isolation();
            break;
        case Variant::generalized:
        case Variant::generalized_full: update_generalized(generalized_, llrs, pair_llrs, W_); break;
        case Variant::min_cusum: break;
        }
    }

    std::size_t K() const noexcept { return K_; }
    std::size_t n() const noexcept { return cusum_.n; }
    const Scheme& scheme() const noexcept { return scheme_; }
    std::span<const double> Y() const noexcept { return cusum_.Y; }
    // Isolation statistic W_i = min_{j != i} W_ij (or the generalized W_i);
    // +inf for min_cusum and whenever K = 1 with a pairwise variant.
    std::span<const double> W() const noexcept { return W_; }
    const CusumVector& cusums() const noexcept { return cusum_; }
    const ResetClock& reset_clock() const noexcept { return clock_; }
    const PairMatrix& pairs() const noexcept { return pairs_; }

private:
    void refresh_isolation() {
        if (pairs_.K == 0) return;
        for (std::size_t i = 0; i < K_; ++i) {
            double w = infinity;
            for (std::size_t j = 0; j < K_; ++j) {
                if (j != i) w = std::min(w, pairs_(i, j));
            }
            W_[i] = w;
        }
    }

    std::size_t K_;
    Scheme scheme_;
    CusumVector cusum_;
    ResetClock clock_;
    PairMatrix pairs_;
    GeneralizedBuffer generalized_;
    std::vector<double> pair_llrs_;
    std::vector<double> W_;
};

} // namespace seqdiag
