#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "wsnloc/priors.hpp"
#include "wsnloc/sensor_model.hpp"

namespace wsnloc {

/// 3K x 3K information matrix, ordered (P_1, x_1, y_1, ..., P_K, x_K, y_K).
using FisherMatrix = Eigen::MatrixXd;

struct PcrbConfig {
    int k = 1;
    int n_mc = 1000;  // prior draws averaged for the data information
    std::uint64_t seed = 1;
    int threads = 0;

    void validate() const;
};

/// Difference of the Gaussian kernels at the two edges of bin l:
/// exp(-(lambda_l - a)^2 / 2 sigma^2) - exp(-(lambda_{l+1} - a)^2 / 2 sigma^2).
/// Infinite edges contribute zero.
double rho(std::size_t sensor, int level, const SourceParams& theta, const ScenarioConfig& cfg);
double rho_at(double amp, int level, const ScenarioConfig& cfg);

/// Gradient of the amplitude at one sensor with respect to theta.
Eigen::VectorXd grad_amplitude(std::size_t sensor, const SourceParams& theta,
                               const ScenarioConfig& cfg);

/// Gradient of p(b_i = l | theta).
Eigen::VectorXd grad_level_prob(std::size_t sensor, int level, const SourceParams& theta,
                                const ScenarioConfig& cfg);

/// Gradient of p(z_i = j | theta), the channel-weighted sum of grad_level_prob.
Eigen::VectorXd grad_obs_prob(std::size_t sensor, int j, const SourceParams& theta,
                              const ScenarioConfig& cfg);

/// Fisher information of z at a fixed theta. Terms with p(z_i = j) < 1e-300
/// are skipped.
FisherMatrix fim_data_at(const SourceParams& theta, const ScenarioConfig& cfg);

struct FimAverage {
    FisherMatrix j_d;
    int n_rejected = 0;  // prior draws redrawn after a SingularDistance
};

/// Monte-Carlo average of fim_data_at over n_mc prior draws; draw i uses
/// stream (seed, kPcrb, i, attempt).
FimAverage fim_data_avg(const ScenarioConfig& cfg, const Priors& priors,
                        const PcrbConfig& pcrb_cfg);

/// a(a+1)(a+3) / b^2, the expected information of the inverse-gamma power prior.
double power_prior_information(const PowerPrior& prior);

/// Block diagonal prior information: power entry power_prior_information,
/// location block the inverse prior covariance.
FisherMatrix fim_prior(int k, const Priors& priors);

struct PcrbResult {
    FisherMatrix j;
    FisherMatrix j_d;
    FisherMatrix j_p;
    FisherMatrix bound;               // J^{-1}
    double location_mse_bound = 0.0;  // sum of the x, y diagonal entries of J^{-1}
    double power_mse_bound = 0.0;     // sum of the P diagonal entries of J^{-1}
    int n_rejected = 0;
};

/// Inverts J = J_d + J_p. Throws SingularFim if cond(J) > 1e12.
PcrbResult assemble_pcrb(FisherMatrix j_d, FisherMatrix j_p);

PcrbResult pcrb_bound(const ScenarioConfig& cfg, const Priors& priors,
                      const PcrbConfig& pcrb_cfg);

}  // namespace wsnloc
