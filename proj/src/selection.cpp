#include "wsnloc/selection.hpp"

#include <cmath>
#include <limits>

#include "wsnloc/errors.hpp"
#include "wsnloc/kernels.hpp"
#include "wsnloc/math_util.hpp"

namespace wsnloc {

IsResult run_is(int k, const ObservationVector& z, const ScenarioConfig& cfg,
                const Priors& priors, int n_is, std::uint64_t seed, int threads) {
    if (n_is < 1) throw ConfigError("n_is must be >= 1");
    if (k < 1) throw ConfigError("k must be >= 1");
    cfg.validate();
    priors.validate();
    z.validate(cfg);

    const auto n = static_cast<std::size_t>(n_is);
    IsResult res;
    ParticleSystem& sys = res.system;
    sys.particles.resize(n);
    sys.loglik.resize(n);
    if (kernels::execution_for(threads) == kernels::Execution::Serial)
        kernels::sample_prior_serial(k, priors, seed, stream::kImportance, sys.particles);
    else
        kernels::sample_prior_parallel(k, priors, seed, stream::kImportance, sys.particles,
                                       threads);
    kernels::loglik(sys.particles, z, cfg, sys.loglik, threads);

    sys.log_weights = sys.loglik;
    const double total = log_sum_exp(sys.log_weights);
    if (!std::isfinite(total)) throw AllZeroWeights("every importance weight underflowed");
    for (double& x : sys.log_weights) x -= total;
    sys.phi = 1.0;
    sys.log_evidence = total - std::log(static_cast<double>(n));
    res.log_evidence = sys.log_evidence;
    res.ess = ess_from_log(sys.log_weights);
    return res;
}

int match_budget(double avg_iters, int n_particles) {
    if (!(avg_iters >= 1.0)) throw ConfigError("average iteration count must be >= 1");
    if (n_particles < 1) throw ConfigError("n_particles must be >= 1");
    return static_cast<int>(std::lround(avg_iters * n_particles));
}

int select_map(std::span<const double> log_evidence, const ModelPrior& model_prior) {
    if (static_cast<int>(log_evidence.size()) != model_prior.k_max())
        throw DimensionMismatch("one log-evidence per model is required");
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < log_evidence.size(); ++i) {
        const double score = log_evidence[i] + std::log(model_prior.probs[i]);
        // strict comparison keeps the smaller k on ties
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(i) + 1;
        }
    }
    if (best == 0) throw NoFiniteEvidence("no model has a finite log-evidence");
    return best;
}

std::vector<double> model_posterior(std::span<const double> log_evidence,
                                    const ModelPrior& model_prior) {
    if (static_cast<int>(log_evidence.size()) != model_prior.k_max())
        throw DimensionMismatch("one log-evidence per model is required");
    std::vector<double> score(log_evidence.size());
    for (std::size_t i = 0; i < score.size(); ++i)
        score[i] = log_evidence[i] + std::log(model_prior.probs[i]);
    const double total = log_sum_exp(score);
    if (!std::isfinite(total)) throw NoFiniteEvidence("no model has a finite log-evidence");
    for (double& s : score) s = std::exp(s - total);
    return score;
}

ModelEvidenceTable make_table(std::vector<double> log_evidence, std::vector<double> ess,
                              std::vector<int> n_iters, const ModelPrior& model_prior) {
    ModelEvidenceTable t;
    t.posterior = model_posterior(log_evidence, model_prior);
    t.k_star = select_map(log_evidence, model_prior);
    t.log_evidence = std::move(log_evidence);
    t.ess = std::move(ess);
    t.n_iters = std::move(n_iters);
    return t;
}

std::uint64_t model_seed(std::uint64_t master, int k) {
    return derive_seed(master, {stream::kModel, static_cast<std::uint64_t>(k)});
}

SmcModelRuns run_smc_models(const ObservationVector& z, const ScenarioConfig& cfg,
                            const Priors& priors, const ModelPrior& model_prior,
                            const SmcConfig& smc_cfg) {
    model_prior.validate();
    SmcModelRuns out;
    std::vector<double> le;
    std::vector<double> ess;
    std::vector<int> iters;
    for (int k = 1; k <= model_prior.k_max(); ++k) {
        SmcConfig c = smc_cfg;
        c.seed = model_seed(smc_cfg.seed, k);
        out.runs.push_back(run_smc(k, z, cfg, priors, c));
        le.push_back(out.runs.back().log_evidence);
        ess.push_back(out.runs.back().info.final_ess);
        iters.push_back(out.runs.back().info.n_iters);
    }
    out.table = make_table(std::move(le), std::move(ess), std::move(iters), model_prior);
    return out;
}

IsModelRuns run_is_models(const ObservationVector& z, const ScenarioConfig& cfg,
                          const Priors& priors, const ModelPrior& model_prior,
                          std::span<const int> n_is, std::uint64_t seed, int threads) {
    model_prior.validate();
    if (static_cast<int>(n_is.size()) != model_prior.k_max())
        throw DimensionMismatch("one IS budget per model is required");
    IsModelRuns out;
    std::vector<double> le;
    std::vector<double> ess;
    std::vector<int> iters;
    for (int k = 1; k <= model_prior.k_max(); ++k) {
        out.runs.push_back(run_is(k, z, cfg, priors, n_is[static_cast<std::size_t>(k - 1)],
                                  model_seed(seed, k), threads));
        le.push_back(out.runs.back().log_evidence);
        ess.push_back(out.runs.back().ess);
        iters.push_back(1);
    }
    out.table = make_table(std::move(le), std::move(ess), std::move(iters), model_prior);
    return out;
}

}  // namespace wsnloc
