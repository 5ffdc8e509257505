#pragma once

// Data-parallel inner loops over particles. Each loop has a serial reference
// version and an OpenMP version; both call the same per-element routine with
// an element-keyed RNG stream, so their outputs are bitwise identical.

#include <cstdint>
#include <span>
#include <vector>

#include "wsnloc/priors.hpp"
#include "wsnloc/smc.hpp"

namespace wsnloc::kernels {

enum class Execution { Serial, Parallel };

/// Serial when threads == 1, Parallel otherwise.
Execution execution_for(int threads);
/// Threads OpenMP will use for `threads` (0 = runtime default).
int resolve_threads(int threads);

void loglik_serial(std::span<const SourceParams> particles, const ObservationVector& z,
                   const ScenarioConfig& cfg, std::span<double> out);
void loglik_parallel(std::span<const SourceParams> particles, const ObservationVector& z,
                     const ScenarioConfig& cfg, std::span<double> out, int threads = 0);
void loglik(std::span<const SourceParams> particles, const ObservationVector& z,
            const ScenarioConfig& cfg, std::span<double> out, int threads);

/// Draws particles[m] from the prior with stream (seed, tag, m).
void sample_prior_serial(int k, const Priors& priors, std::uint64_t seed, std::uint64_t tag,
                         std::span<SourceParams> out);
void sample_prior_parallel(int k, const Priors& priors, std::uint64_t seed, std::uint64_t tag,
                           std::span<SourceParams> out, int threads = 0);

struct MutationStats {
    long accepted = 0;
    long proposed = 0;
};

/// One MWG move per particle at sys.phi; particle m at iteration t uses
/// stream (seed, kMutate, t, m). Updates particles and cached loglik.
MutationStats mutate_serial(ParticleSystem& sys, const ObservationVector& z,
                            const ScenarioConfig& cfg, const Priors& priors,
                            const SmcConfig& smc_cfg, int iteration);
MutationStats mutate_parallel(ParticleSystem& sys, const ObservationVector& z,
                              const ScenarioConfig& cfg, const Priors& priors,
                              const SmcConfig& smc_cfg, int iteration, int threads = 0);

}  // namespace wsnloc::kernels
