#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wsnloc/priors.hpp"
#include "wsnloc/rng.hpp"
#include "wsnloc/sensor_model.hpp"

namespace wsnloc {

/// Tuning of one tempered SMC sampler.
struct SmcConfig {
    int n_particles = 100;
    double cess_frac = 0.9;  // CESS target as a fraction of N
    double ess_frac = 0.5;   // resample when ESS < ess_frac * N
    int n_mcmc = 5;          // MWG sweeps per mutation
    /// Random-walk covariance for one (P, x, y) block.
    Eigen::Matrix3d proposal_cov = default_proposal_cov(Priors{});
    double phi_tol = 1e-6;
    int max_bisection = 60;
    std::uint64_t seed = 1;
    /// 1 selects the serial reference kernels; 0 lets OpenMP pick.
    int threads = 0;

    void validate() const;

    /// Diagonal covariance with std std_xy on the coordinates and
    /// std_p_frac times the prior power mode on the power.
    static Eigen::Matrix3d default_proposal_cov(const Priors& priors, double std_xy = 2.0,
                                                double std_p_frac = 0.1);
};

/// Weighted particle approximation of one tempered target.
struct ParticleSystem {
    std::vector<SourceParams> particles;
    std::vector<double> log_weights;  // normalized: log-sum-exp is 0
    std::vector<double> loglik;       // cached log p(z | particle)
    double phi = 0.0;
    double log_evidence = 0.0;        // running log(Z_t / Z_1)

    std::size_t size() const noexcept { return particles.size(); }
    std::vector<double> weights() const;
};

/// Inverse sum of squared normalized weights.
double ess(std::span<const double> normalized_weights);
double ess_from_log(std::span<const double> normalized_log_weights);

/// Conditional ESS of incremental weights w under previous weights W.
double cess(std::span<const double> prev_normalized_weights,
            std::span<const double> incremental_weights);
/// Same quantity from log W and log w; returns 0 when every increment is 0.
double cess_from_log(std::span<const double> prev_log_weights,
                     std::span<const double> log_increments);

/// (phi_new - phi) * cached log-likelihood, per particle.
std::vector<double> incremental_log_weights(const ParticleSystem& sys, double phi_new);

/// Largest phi in (sys.phi, 1] keeping CESS >= cess_target, found by
/// bisection to phi_tol; returns 1 when the full step already qualifies.
double find_next_temperature(const ParticleSystem& sys, double cess_target,
                             double phi_tol = 1e-6, int max_bisection = 60);

/// Moves the system to phi_new: accumulates the evidence ratio and
/// renormalizes the weights. Throws AllZeroWeights on total underflow.
void reweight(ParticleSystem& sys, double phi_new);

/// Systematic resampling offsets (u + i) / N against the weight CDF.
std::vector<std::size_t> systematic_indices(std::span<const double> normalized_weights,
                                            double u);
void resample(ParticleSystem& sys, Rng& rng);

/// log of p(theta) p(z | theta)^phi; loglik is the cached likelihood.
double log_tempered_target(double loglik, double log_prior_value, double phi);

/// log of the Metropolis acceptance probability for moving from `from` to `to`.
double log_acceptance(const SourceParams& from, const SourceParams& to, double phi,
                      const ObservationVector& z, const ScenarioConfig& cfg,
                      const Priors& priors);

struct MoveResult {
    SourceParams theta;
    double loglik = 0.0;
    int accepted = 0;
    int proposed = 0;
};

/// n_mcmc Metropolis-within-Gibbs sweeps over the (P, x, y) blocks, leaving
/// p(theta) p(z | theta)^phi invariant.
MoveResult mwg_move(const SourceParams& theta, double loglik, double phi,
                    const ObservationVector& z, const ScenarioConfig& cfg,
                    const Priors& priors, const SmcConfig& smc_cfg, Rng& rng);

struct SmcRunInfo {
    int n_iters = 1;  // final value of the iteration counter, initialization is t = 1
    std::vector<double> temperatures;
    std::vector<double> ess_history;  // ESS right after each reweight
    int n_resamples = 0;
    double acceptance_rate = 0.0;
    double final_ess = 0.0;           // ESS after the last reweight
};

struct SmcResult {
    ParticleSystem system;
    double log_evidence = 0.0;
    SmcRunInfo info;
};

/// Tempered SMC sampler for the k-source model: returns the weighted
/// posterior approximation at phi = 1 and the log-evidence estimate.
SmcResult run_smc(int k, const ObservationVector& z, const ScenarioConfig& cfg,
                  const Priors& priors, const SmcConfig& smc_cfg);

/// Weighted mean of f over the particles.
std::vector<double> posterior_expectation(
    const ParticleSystem& sys, const std::function<std::vector<double>(const SourceParams&)>& f);

}  // namespace wsnloc
