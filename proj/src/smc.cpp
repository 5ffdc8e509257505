#include "wsnloc/smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wsnloc/errors.hpp"
#include "wsnloc/kernels.hpp"
#include "wsnloc/math_util.hpp"

namespace wsnloc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// phi * (ll_to - ll_from), with the conventions 0 * inf = 0 and
// "anything finite beats -inf".
double tempered_loglik_diff(double ll_from, double ll_to, double phi) {
    if (phi == 0.0) return 0.0;
    if (ll_to == kNegInf) return ll_from == kNegInf ? 0.0 : kNegInf;
    if (ll_from == kNegInf) return std::numeric_limits<double>::infinity();
    return phi * (ll_to - ll_from);
}

}  // namespace

void SmcConfig::validate() const {
    if (n_particles < 1) throw ConfigError("n_particles must be >= 1");
    if (!(cess_frac > 0.0 && cess_frac <= 1.0)) throw ConfigError("cess_frac must be in (0, 1]");
    if (!(ess_frac > 0.0 && ess_frac <= 1.0)) throw ConfigError("ess_frac must be in (0, 1]");
    if (n_mcmc < 1) throw ConfigError("n_mcmc must be >= 1");
    if (!(phi_tol > 0.0)) throw ConfigError("phi_tol must be positive");
    if (max_bisection < 1) throw ConfigError("max_bisection must be >= 1");
    if (!proposal_cov.isApprox(proposal_cov.transpose()))
        throw ConfigError("proposal covariance must be symmetric");
    Eigen::LLT<Eigen::Matrix3d> llt(proposal_cov);
    if (llt.info() != Eigen::Success) throw ConfigError("proposal covariance must be positive definite");
}

Eigen::Matrix3d SmcConfig::default_proposal_cov(const Priors& priors, double std_xy,
                                                double std_p_frac) {
    const double std_p = std_p_frac * priors.power.mode();
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    cov(0, 0) = std_p * std_p;
    cov(1, 1) = std_xy * std_xy;
    cov(2, 2) = std_xy * std_xy;
    return cov;
}

std::vector<double> ParticleSystem::weights() const { return exp_weights(log_weights); }

// -------------------------------------------------------------- diagnostics

double ess(std::span<const double> normalized_weights) {
    double sq = 0.0;
    for (double w : normalized_weights) sq += w * w;
    return 1.0 / sq;
}

double ess_from_log(std::span<const double> normalized_log_weights) {
    std::vector<double> twice(normalized_log_weights.size());
    std::transform(normalized_log_weights.begin(), normalized_log_weights.end(), twice.begin(),
                   [](double x) { return 2.0 * x; });
    return std::exp(-log_sum_exp(twice));
}

double cess(std::span<const double> prev_normalized_weights,
            std::span<const double> incremental_weights) {
    if (prev_normalized_weights.size() != incremental_weights.size())
        throw DimensionMismatch("cess: weight vectors differ in length");
    const double n = static_cast<double>(incremental_weights.size());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < incremental_weights.size(); ++i) {
        const double w = incremental_weights[i];
        if (w < 0.0) throw ConfigError("cess: incremental weights must be non-negative");
        num += prev_normalized_weights[i] * w;
        den += prev_normalized_weights[i] * w * w;
    }
    if (num == 0.0) throw ZeroIncrement("cess: every incremental weight is zero");
    return num * num / (den / n);
}

double cess_from_log(std::span<const double> prev_log_weights,
                     std::span<const double> log_increments) {
    const std::size_t n = log_increments.size();
    std::vector<double> a(n);
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = prev_log_weights[i] + log_increments[i];
        b[i] = prev_log_weights[i] + 2.0 * log_increments[i];
    }
    const double la = log_sum_exp(a);
    if (la == kNegInf) return 0.0;
    return std::exp(2.0 * la - log_sum_exp(b) + std::log(static_cast<double>(n)));
}

// ---------------------------------------------------------- tempering steps

std::vector<double> incremental_log_weights(const ParticleSystem& sys, double phi_new) {
    const double dphi = phi_new - sys.phi;
    std::vector<double> out(sys.size());
    for (std::size_t m = 0; m < out.size(); ++m)
        out[m] = dphi == 0.0 ? 0.0 : dphi * sys.loglik[m];
    return out;
}

double find_next_temperature(const ParticleSystem& sys, double cess_target, double phi_tol,
                             int max_bisection) {
    const double n = static_cast<double>(sys.size());
    if (!(cess_target > 0.0 && cess_target <= n))
        throw ConfigError("cess target must lie in (0, N]");
    // Relative slack so a target of exactly N is met by vanishing steps.
    const double target = cess_target * (1.0 - 1e-12);
    auto ok = [&](double phi) {
        return cess_from_log(sys.log_weights, incremental_log_weights(sys, phi)) >= target;
    };

    const double phi_old = sys.phi;
    if (ok(1.0)) return 1.0;

    double lo = phi_old;
    double hi = 1.0;
    for (int it = 0; it < max_bisection && hi - lo > phi_tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ok(mid))
            lo = mid;
        else
            hi = mid;
    }
    if (lo > phi_old) return lo;

    // Target only met below the bisection resolution: crawl.
    double step = hi - phi_old;
    while (step > 1e-12) {
        step *= 0.5;
        if (ok(phi_old + step)) return phi_old + step;
    }
    throw StalledSchedule("no temperature above " + std::to_string(phi_old) +
                          " reaches the CESS target");
}

void reweight(ParticleSystem& sys, double phi_new) {
    if (phi_new < sys.phi) throw ConfigError("reweight: temperature must not decrease");
    const auto inc = incremental_log_weights(sys, phi_new);
    std::vector<double> lw(sys.size());
    for (std::size_t m = 0; m < lw.size(); ++m) lw[m] = sys.log_weights[m] + inc[m];
    const double log_ratio = log_sum_exp(lw);
    if (!std::isfinite(log_ratio))
        throw AllZeroWeights("every particle weight underflowed at phi = " + std::to_string(phi_new));
    for (double& x : lw) x -= log_ratio;
    sys.log_weights = std::move(lw);
    sys.log_evidence += log_ratio;
    sys.phi = phi_new;
}

std::vector<std::size_t> systematic_indices(std::span<const double> normalized_weights,
                                            double u) {
    const std::size_t n = normalized_weights.size();
    std::vector<std::size_t> idx(n);
    double cum = normalized_weights.empty() ? 0.0 : normalized_weights[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = (u + static_cast<double>(i)) / static_cast<double>(n);
        while (pos >= cum && j + 1 < n) {
            ++j;
            cum += normalized_weights[j];
        }
        idx[i] = j;
    }
    return idx;
}

void resample(ParticleSystem& sys, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto idx = systematic_indices(sys.weights(), unif(rng));
    std::vector<SourceParams> particles(sys.size());
    std::vector<double> loglik(sys.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        particles[i] = sys.particles[idx[i]];
        loglik[i] = sys.loglik[idx[i]];
    }
    sys.particles = std::move(particles);
    sys.loglik = std::move(loglik);
    std::fill(sys.log_weights.begin(), sys.log_weights.end(),
              -std::log(static_cast<double>(sys.size())));
}

// ---------------------------------------------------------------- mutation

double log_tempered_target(double loglik, double log_prior_value, double phi) {
    if (log_prior_value == kNegInf) return kNegInf;
    if (phi == 0.0) return log_prior_value;
    return log_prior_value + phi * loglik;
}

double log_acceptance(const SourceParams& from, const SourceParams& to, double phi,
                      const ObservationVector& z, const ScenarioConfig& cfg,
                      const Priors& priors) {
    const double lp_to = log_prior(to, priors);
    if (lp_to == kNegInf) return kNegInf;
    const double diff = tempered_loglik_diff(log_likelihood(z, from, cfg),
                                             log_likelihood(z, to, cfg), phi) +
                        lp_to - log_prior(from, priors);
    return std::min(0.0, diff);
}

MoveResult mwg_move(const SourceParams& theta, double loglik, double phi,
                    const ObservationVector& z, const ScenarioConfig& cfg,
                    const Priors& priors, const SmcConfig& smc_cfg, Rng& rng) {
    const std::size_t k = theta.size();
    const std::size_t n_sensors = cfg.n_sensors();
    const Eigen::Matrix3d chol = smc_cfg.proposal_cov.llt().matrixL();
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    MoveResult out{theta, loglik, 0, 0};
    // contrib[b][i]: amplitude at sensor i due to block b
    std::vector<std::vector<double>> contrib(k, std::vector<double>(n_sensors));
    for (std::size_t b = 0; b < k; ++b)
        for (std::size_t i = 0; i < n_sensors; ++i)
            contrib[b][i] = source_amplitude(cfg.sensors[i], theta.blocks[b], cfg);

    std::vector<double> proposed_contrib(n_sensors);
    std::vector<double> amps(n_sensors);
    for (int sweep = 0; sweep < smc_cfg.n_mcmc; ++sweep) {
        for (std::size_t b = 0; b < k; ++b) {
            const Eigen::Vector3d eps(std_normal(rng), std_normal(rng), std_normal(rng));
            const Eigen::Vector3d step = chol * eps;
            const Source& cur = out.theta.blocks[b];
            const Source prop{cur.power + step(0), cur.x + step(1), cur.y + step(2)};
            const double log_u = std::log(unif(rng));
            ++out.proposed;
            if (!(prop.power > 0.0)) continue;

            bool singular = false;
            for (std::size_t i = 0; i < n_sensors && !singular; ++i) {
                const double dx = cfg.sensors[i].x - prop.x;
                const double dy = cfg.sensors[i].y - prop.y;
                if (dx == 0.0 && dy == 0.0)
                    singular = true;
                else
                    proposed_contrib[i] = source_amplitude(cfg.sensors[i], prop, cfg);
            }
            if (singular) continue;

            // Same summation order as amplitude(), so cached values match a
            // fresh evaluation bitwise.
            for (std::size_t i = 0; i < n_sensors; ++i) {
                double a = 0.0;
                for (std::size_t bb = 0; bb < k; ++bb)
                    a += bb == b ? proposed_contrib[i] : contrib[bb][i];
                amps[i] = a;
            }
            const double ll_prop = log_likelihood_from_amplitudes(z, amps, cfg);
            const double log_alpha = tempered_loglik_diff(out.loglik, ll_prop, phi) +
                                     log_prior_block(prop, priors) -
                                     log_prior_block(cur, priors);
            if (log_alpha >= 0.0 || log_u < log_alpha) {
                out.theta.blocks[b] = prop;
                out.loglik = ll_prop;
                contrib[b].swap(proposed_contrib);
                ++out.accepted;
            }
        }
    }
    return out;
}

// ----------------------------------------------------------------- sampler

SmcResult run_smc(int k, const ObservationVector& z, const ScenarioConfig& cfg,
                  const Priors& priors, const SmcConfig& smc_cfg) {
    if (k < 1) throw ConfigError("k must be >= 1");
    cfg.validate();
    priors.validate();
    smc_cfg.validate();
    z.validate(cfg);

    const auto n = static_cast<std::size_t>(smc_cfg.n_particles);
    const int threads = smc_cfg.threads;
    const bool serial = kernels::execution_for(threads) == kernels::Execution::Serial;

    SmcResult res;
    ParticleSystem& sys = res.system;
    sys.particles.resize(n);
    sys.loglik.resize(n);
    sys.log_weights.assign(n, -std::log(static_cast<double>(n)));
    if (serial)
        kernels::sample_prior_serial(k, priors, smc_cfg.seed, stream::kInit, sys.particles);
    else
        kernels::sample_prior_parallel(k, priors, smc_cfg.seed, stream::kInit, sys.particles,
                                       threads);
    kernels::loglik(sys.particles, z, cfg, sys.loglik, threads);

    SmcRunInfo& info = res.info;
    info.temperatures.push_back(0.0);
    long accepted = 0;
    long proposed = 0;
    int t = 1;
    const double cess_target = smc_cfg.cess_frac * static_cast<double>(n);
    const double ess_threshold = smc_cfg.ess_frac * static_cast<double>(n);
    while (sys.phi < 1.0) {
        ++t;
        const double phi_next =
            find_next_temperature(sys, cess_target, smc_cfg.phi_tol, smc_cfg.max_bisection);
        reweight(sys, phi_next);
        const double ess_t = ess_from_log(sys.log_weights);
        info.temperatures.push_back(sys.phi);
        info.ess_history.push_back(ess_t);
        if (ess_t < ess_threshold) {
            Rng rng = make_rng(smc_cfg.seed, {stream::kResample, static_cast<std::uint64_t>(t)});
            resample(sys, rng);
            ++info.n_resamples;
        }
        const auto stats =
            serial ? kernels::mutate_serial(sys, z, cfg, priors, smc_cfg, t)
                   : kernels::mutate_parallel(sys, z, cfg, priors, smc_cfg, t, threads);
        accepted += stats.accepted;
        proposed += stats.proposed;
    }
    info.n_iters = t;
    info.final_ess = info.ess_history.empty() ? static_cast<double>(n) : info.ess_history.back();
    info.acceptance_rate = proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0;
    res.log_evidence = sys.log_evidence;
    return res;
}

std::vector<double> posterior_expectation(
    const ParticleSystem& sys, const std::function<std::vector<double>(const SourceParams&)>& f) {
    std::vector<double> acc;
    for (std::size_t m = 0; m < sys.size(); ++m) {
        const double w = std::exp(sys.log_weights[m]);
        const auto v = f(sys.particles[m]);
        if (acc.empty()) acc.assign(v.size(), 0.0);
        if (v.size() != acc.size())
            throw DimensionMismatch("posterior_expectation: f returned vectors of varying length");
        for (std::size_t j = 0; j < v.size(); ++j) acc[j] += w * v[j];
    }
    return acc;
}

}  // namespace wsnloc
