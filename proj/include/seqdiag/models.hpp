#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqdiag/error.hpp"
#include "seqdiag/rng.hpp"

namespace seqdiag {

// Independent Gaussian components: x_k ~ N(mean[k], sd[k]^2).
struct GaussianDiag {
    std::vector<double> mean;
    std::vector<double> sd;

    bool operator==(const GaussianDiag&) const = default;
};

// A density on R^dim that can both be evaluated (in nats) and sampled.
class Density {
public:
    using LogPdf = std::function<double(std::span<const double>)>;
    using Sampler = std::function<void(RandomStream&, std::span<double>)>;

    static Density gaussian(std::vector<double> mean, std::vector<double> sd) {
        if (mean.empty() || mean.size() != sd.size()) {
            throw ModelError("gaussian density needs matching, non-empty mean and sd vectors");
        }
        for (std::size_t k = 0; k < sd.size(); ++k) {
            if (!(sd[k] > 0.0) || !std::isfinite(sd[k]) || !std::isfinite(mean[k])) {
                throw ModelError("gaussian density needs finite means and positive finite sds");
            }
        }
        Density d;
        d.dim_ = mean.size();
        constexpr double half_log_2pi = 0.91893853320467274178;
        for (double s : sd) d.log_norm_.push_back(std::log(s) + half_log_2pi);
        d.gaussian_ = GaussianDiag{std::move(mean), std::move(sd)};
        return d;
    }

    static Density normal(double mean, double sd) { return gaussian({mean}, {sd}); }

    // User-defined density. Both callables must describe the same law.
    static Density custom(std::size_t dim, LogPdf log_pdf, Sampler sampler) {
        if (dim == 0 || !log_pdf || !sampler) {
            throw ModelError("custom density needs dim >= 1, a log-density and a sampler");
        }
        Density d;
        d.dim_ = dim;
        d.log_pdf_ = std::move(log_pdf);
        d.sampler_ = std::move(sampler);
        return d;
    }

    // Joint density of independent blocks, concatenated in order.
    static Density product(std::span<const Density> parts) {
        if (parts.empty()) throw ModelError("product density needs at least one factor");
        const bool all_gaussian = std::all_of(parts.begin(), parts.end(),
                                              [](const Density& p) { return p.is_gaussian(); });
        if (all_gaussian) {
            std::vector<double> mean;
            std::vector<double> sd;
            for (const auto& p : parts) {
                mean.insert(mean.end(), p.gaussian_->mean.begin(), p.gaussian_->mean.end());
                sd.insert(sd.end(), p.gaussian_->sd.begin(), p.gaussian_->sd.end());
            }
            return gaussian(std::move(mean), std::move(sd));
        }
        auto blocks = std::make_shared<std::vector<Density>>(parts.begin(), parts.end());
        std::size_t dim = 0;
        for (const auto& p : parts) dim += p.dim();
        auto log_pdf = [blocks](std::span<const double> x) {
            double total = 0.0;
            std::size_t offset = 0;
            for (const auto& p : *blocks) {
                total += p.log_density(x.subspan(offset, p.dim()));
                offset += p.dim();
            }
            return total;
        };
        auto sampler = [blocks](RandomStream& rng, std::span<double> out) {
            std::size_t offset = 0;
            for (const auto& p : *blocks) {
                p.sample(rng, out.subspan(offset, p.dim()));
                offset += p.dim();
            }
        };
        return custom(dim, std::move(log_pdf), std::move(sampler));
    }

    std::size_t dim() const noexcept { return dim_; }
    bool is_gaussian() const noexcept { return gaussian_.has_value(); }
    const GaussianDiag* gaussian_params() const noexcept {
        return gaussian_ ? &*gaussian_ : nullptr;
    }

    double log_density(std::span<const double> x) const {
        if (!gaussian_) return log_pdf_(x);
        double total = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            const double z = (x[k] - gaussian_->mean[k]) / gaussian_->sd[k];
            total -= 0.5 * z * z + log_norm_[k];
        }
        return total;
    }

    void sample(RandomStream& rng, std::span<double> out) const {
        if (!gaussian_) {
            sampler_(rng, out);
            return;
        }
        for (std::size_t k = 0; k < dim_; ++k) {
            out[k] = gaussian_->mean[k] + gaussian_->sd[k] * rng.normal();
        }
    }

private:
    Density() = default;

    std::size_t dim_ = 0;
    std::optional<GaussianDiag> gaussian_;
    std::vector<double> log_norm_;  // log(sd) + log(2 pi) / 2 per component
    LogPdf log_pdf_;
    Sampler sampler_;
};

// Div(p || q) for independent Gaussian components, in nats.
inline double gaussian_kl(const GaussianDiag& p, const GaussianDiag& q) {
    double total = 0.0;
    for (std::size_t k = 0; k < p.mean.size(); ++k) {
        const double ratio = p.sd[k] / q.sd[k];
        const double shift = (p.mean[k] - q.mean[k]) / q.sd[k];
        total += 0.5 * (ratio * ratio + shift * shift - 1.0) - std::log(ratio);
    }
    return total;
}

// Pre-change density f and post-change alternatives g_1..g_K (0-based here).
class ChangeModel {
public:
    ChangeModel(Density pre, std::vector<Density> alternatives, std::string name = "custom")
        : pre_(std::move(pre)), alternatives_(std::move(alternatives)), name_(std::move(name)) {
        if (alternatives_.empty()) throw ModelError("change model needs at least one alternative");
        for (const auto& g : alternatives_) {
            if (g.dim() != pre_.dim()) {
                throw ModelError("all densities of a change model must share one observation space");
            }
        }
        equivalent_.resize(alternatives_.size());
        for (std::size_t i = 0; i < equivalent_.size(); ++i) equivalent_[i] = i;
    }

    std::size_t K() const noexcept { return alternatives_.size(); }
    std::size_t dim() const noexcept { return pre_.dim(); }
    const std::string& name() const noexcept { return name_; }
    const Density& pre() const noexcept { return pre_; }
    const Density& alternative(std::size_t i) const { return alternatives_.at(i); }

    bool all_gaussian() const noexcept {
        return pre_.is_gaussian() &&
               std::all_of(alternatives_.begin(), alternatives_.end(),
                           [](const Density& g) { return g.is_gaussian(); });
    }

    // log g_i(x) - log f(x).
    double llr_vs_f(std::size_t i, std::span<const double> x) const {
        const double v = alternative(i).log_density(x) - pre_.log_density(x);
        if (!std::isfinite(v)) {
            throw ModelError("model-support error: log-likelihood ratio of alternative " +
                             std::to_string(i + 1) + " is not finite");
        }
        return v;
    }

    // log g_i(x) - log g_j(x), computed as the difference of the two ratios
    // against f so that it is exactly antisymmetric and consistent with them.
    double llr_pair(std::size_t i, std::size_t j, std::span<const double> x) const {
        return llr_vs_f(i, x) - llr_vs_f(j, x);
    }

    // All K ratios against f; `out` must hold K values.
    void llrs(std::span<const double> x, std::span<double> out) const {
        const double lf = pre_.log_density(x);
        for (std::size_t i = 0; i < alternatives_.size(); ++i) {
            out[i] = alternatives_[i].log_density(x) - lf;
            if (!std::isfinite(out[i])) {
                throw ModelError("model-support error: log-likelihood ratio of alternative " +
                                 std::to_string(i + 1) + " is not finite");
            }
        }
    }

    // The one-alternative model (f, g_i); running MIN_CUSUM on it gives the
    // single CuSum stopping time sigma_i.
    ChangeModel restrict_to(std::size_t i) const {
        return ChangeModel(pre_, {alternative(i)}, name_ + "[" + std::to_string(i + 1) + "]");
    }

    // Index of the smallest alternative that is exchangeable with i under a
    // permutation of identical channels (i itself when there is none).
    std::size_t equivalent_to(std::size_t i) const { return equivalent_.at(i); }
    void set_equivalence(std::vector<std::size_t> equivalent) { equivalent_ = std::move(equivalent); }

    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

private:
    Density pre_;
    std::vector<Density> alternatives_;
    std::string name_;
    std::vector<std::size_t> equivalent_;
    std::vector<std::string> warnings_;
};

// Kullback-Leibler numbers of a model, in nats. Indices are 0-based.
struct KLTable {
    std::size_t K = 0;
    std::vector<double> I;         // Div(g_i || f)
    std::vector<double> I_se;      // 0 when closed form
    std::vector<double> Ipair;     // K x K, Div(g_i || g_j); diagonal unused
    std::vector<double> Ipair_se;
    std::vector<double> Istar;     // min_{j != i} Ipair(i, j); +inf when K = 1
    bool closed_form = true;

    double pair(std::size_t i, std::size_t j) const { return Ipair[i * K + j]; }
};

inline constexpr std::size_t kl_mc_samples = 100000;

// Closed form when every density is Gaussian; otherwise a Monte Carlo
// estimate from `samples` draws of each g_i with its standard error.
// Throws ModelError unless every divergence is positive and finite.
inline KLTable kl_table(const ChangeModel& model, std::size_t samples = kl_mc_samples,
                        std::uint64_t seed = 0x6b6c5f7461626c65ULL) {
    const std::size_t K = model.K();
    KLTable t;
    t.K = K;
    t.I.assign(K, 0.0);
    t.I_se.assign(K, 0.0);
    t.Ipair.assign(K * K, 0.0);
    t.Ipair_se.assign(K * K, 0.0);
    t.Istar.assign(K, std::numeric_limits<double>::infinity());
    t.closed_form = model.all_gaussian();

    if (t.closed_form) {
        const auto& f = *model.pre().gaussian_params();
        for (std::size_t i = 0; i < K; ++i) {
            const auto& gi = *model.alternative(i).gaussian_params();
            t.I[i] = gaussian_kl(gi, f);
            for (std::size_t j = 0; j < K; ++j) {
                if (j != i) t.Ipair[i * K + j] = gaussian_kl(gi, *model.alternative(j).gaussian_params());
            }
        }
    } else {
        std::vector<double> x(model.dim());
        std::vector<double> l(K);
        for (std::size_t i = 0; i < K; ++i) {
            RandomStream rng = rng_stream(seed, i);
            std::vector<double> sum(K + 1, 0.0);
            std::vector<double> sum_sq(K + 1, 0.0);
            for (std::size_t s = 0; s < samples; ++s) {
                model.alternative(i).sample(rng, x);
                model.llrs(x, l);
                sum[K] += l[i];
                sum_sq[K] += l[i] * l[i];
                for (std::size_t j = 0; j < K; ++j) {
                    const double v = l[i] - l[j];
                    sum[j] += v;
                    sum_sq[j] += v * v;
                }
            }
            const double n = static_cast<double>(samples);
            auto finish = [n](double s, double ss, double& mean, double& se) {
                mean = s / n;
                const double var = n > 1 ? std::max(0.0, (ss - n * mean * mean) / (n - 1)) : 0.0;
                se = std::sqrt(var / n);
            };
            finish(sum[K], sum_sq[K], t.I[i], t.I_se[i]);
            for (std::size_t j = 0; j < K; ++j) {
                if (j != i) finish(sum[j], sum_sq[j], t.Ipair[i * K + j], t.Ipair_se[i * K + j]);
            }
        }
    }

    for (std::size_t i = 0; i < K; ++i) {
        if (!(t.I[i] > 0.0) || !std::isfinite(t.I[i])) {
            throw ModelError("Div(g_" + std::to_string(i + 1) + " || f) must be positive and finite");
        }
        for (std::size_t j = 0; j < K; ++j) {
            if (j == i) continue;
            const double v = t.Ipair[i * K + j];
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw ModelError("Div(g_" + std::to_string(i + 1) + " || g_" + std::to_string(j + 1) +
                                 ") must be positive and finite");
            }
            t.Istar[i] = std::min(t.Istar[i], v);
        }
    }
    return t;
}

// f = N(0,1), g_i = N(theta_i, 1).
inline ChangeModel gaussian_mean_shift(const std::vector<double>& thetas) {
    if (thetas.empty()) throw ModelError("gaussian_mean_shift needs at least one theta");
    std::vector<Density> alternatives;
    for (double theta : thetas) {
        if (!(theta > 0.0) || !std::isfinite(theta)) {
            throw ModelError("gaussian_mean_shift needs strictly positive finite thetas");
        }
        alternatives.push_back(Density::normal(theta, 1.0));
    }
    ChangeModel model(Density::normal(0.0, 1.0), std::move(alternatives), "gaussian_mean_shift");
    if (!std::is_sorted(thetas.begin(), thetas.end())) {
        model.add_warning("thetas are not in increasing order; alternatives keep the given order");
    }
    kl_table(model);  // rejects repeated thetas
    return model;
}

// d independent channels with pre-change densities pre[k] and post-change
// densities post[k]. Single-fault mode has K = d alternatives, the k-th
// changing channel k only. Simultaneous mode (d = 2 only) adds a third
// alternative where both channels change.
inline ChangeModel multichannel(std::size_t d, const std::vector<Density>& pre,
                                const std::vector<Density>& post, bool simultaneous) {
    if (d == 0) throw ModelError("multichannel model needs at least one channel");
    if (pre.size() != d || post.size() != d) {
        throw ModelError("multichannel model needs one pre- and one post-change density per channel");
    }
    if (simultaneous && d != 2) {
        throw ModelError("unsupported configuration: simultaneous faults are only supported for d = 2");
    }
    for (std::size_t k = 0; k < d; ++k) {
        if (pre[k].dim() != post[k].dim()) {
            throw ModelError("channel " + std::to_string(k + 1) + " pre/post densities differ in dimension");
        }
    }

    auto with_changed = [&](const std::vector<bool>& changed) {
        std::vector<Density> parts;
        parts.reserve(d);
        for (std::size_t k = 0; k < d; ++k) parts.push_back(changed[k] ? post[k] : pre[k]);
        return Density::product(parts);
    };

    std::vector<Density> alternatives;
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<bool> changed(d, false);
        changed[i] = true;
        alternatives.push_back(with_changed(changed));
    }
    if (simultaneous) alternatives.push_back(with_changed(std::vector<bool>(d, true)));

    ChangeModel model(Density::product(pre), std::move(alternatives),
                      simultaneous ? "multichannel_simultaneous" : "multichannel_single");

    // Channels with identical Gaussian laws make their single-fault
    // alternatives exchangeable.
    std::vector<std::size_t> equivalent(model.K());
    for (std::size_t i = 0; i < model.K(); ++i) {
        equivalent[i] = i;
        if (i >= d) continue;
        for (std::size_t j = 0; j < i; ++j) {
            const auto* pi = pre[i].gaussian_params();
            const auto* pj = pre[j].gaussian_params();
            const auto* qi = post[i].gaussian_params();
            const auto* qj = post[j].gaussian_params();
            if (pi && pj && qi && qj && *pi == *pj && *qi == *qj) {
                equivalent[i] = j;
                break;
            }
        }
    }
    model.set_equivalence(std::move(equivalent));
    kl_table(model);
    return model;
}

// Two-channel (or d-channel) model with the same Gaussian law in every channel.
inline ChangeModel gaussian_multichannel(std::size_t d, double pre_mean, double pre_sd,
                                         double post_mean, double post_sd, bool simultaneous) {
    std::vector<Density> pre(d, Density::normal(pre_mean, pre_sd));
    std::vector<Density> post(d, Density::normal(post_mean, post_sd));
    return multichannel(d, pre, post, simultaneous);
}

} // namespace seqdiag
