#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wsnloc/priors.hpp"
#include "wsnloc/sensor_model.hpp"
#include "wsnloc/smc.hpp"

namespace wsnloc {

/// Prior-proposal importance sampler: weights are the likelihood.
struct IsResult {
    ParticleSystem system;  // phi = 1, normalized weights
    double log_evidence = 0.0;
    double ess = 0.0;
};

/// Draws n_is particles from the prior (particle m on stream
/// (seed, kImportance, m)) and weights them by the likelihood.
IsResult run_is(int k, const ObservationVector& z, const ScenarioConfig& cfg,
                const Priors& priors, int n_is, std::uint64_t seed, int threads = 0);

/// Budget-matched IS size N_IS = T * N, T the average SMC iteration count.
int match_budget(double avg_iters, int n_particles);

/// argmax_k of log-evidence + log prior, ties to the smaller k. Returns k in
/// 1..k_max. Throws NoFiniteEvidence when every entry is -inf.
int select_map(std::span<const double> log_evidence, const ModelPrior& model_prior);

/// Posterior model probabilities, softmax of log-evidence + log prior.
std::vector<double> model_posterior(std::span<const double> log_evidence,
                                    const ModelPrior& model_prior);

struct ModelEvidenceTable {
    std::vector<double> log_evidence;  // index k-1
    std::vector<double> posterior;
    std::vector<double> ess;
    std::vector<int> n_iters;
    int k_star = 1;
};

ModelEvidenceTable make_table(std::vector<double> log_evidence, std::vector<double> ess,
                              std::vector<int> n_iters, const ModelPrior& model_prior);

/// Seed of the sampler for model k under a master seed.
std::uint64_t model_seed(std::uint64_t master, int k);

struct SmcModelRuns {
    std::vector<SmcResult> runs;  // index k-1
    ModelEvidenceTable table;
};

/// One SMC sampler per model k = 1..k_max, each on its own derived seed.
SmcModelRuns run_smc_models(const ObservationVector& z, const ScenarioConfig& cfg,
                            const Priors& priors, const ModelPrior& model_prior,
                            const SmcConfig& smc_cfg);

struct IsModelRuns {
    std::vector<IsResult> runs;
    ModelEvidenceTable table;
};

/// One IS run per model with n_is[k-1] particles.
IsModelRuns run_is_models(const ObservationVector& z, const ScenarioConfig& cfg,
                          const Priors& priors, const ModelPrior& model_prior,
                          std::span<const int> n_is, std::uint64_t seed, int threads = 0);

}  // namespace wsnloc
