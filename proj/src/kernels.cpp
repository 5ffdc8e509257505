#include "wsnloc/kernels.hpp"

#include <exception>
#include <mutex>

#ifdef WSNLOC_HAVE_OPENMP
#include <omp.h>
#endif

namespace wsnloc::kernels {

namespace {

// Exceptions must not escape an OpenMP region; the first one is kept and
// rethrown after the join.
class ExceptionSlot {
public:
    template <typename F>
    void run(F&& f) {
        try {
            f();
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu_);
            if (!ptr_) ptr_ = std::current_exception();
        }
    }
    void rethrow() const {
        if (ptr_) std::rethrow_exception(ptr_);
    }

private:
    std::mutex mu_;
    std::exception_ptr ptr_;
};

MoveResult move_one(const ParticleSystem& sys, std::size_t m, const ObservationVector& z,
                    const ScenarioConfig& cfg, const Priors& priors, const SmcConfig& smc_cfg,
                    int iteration) {
    Rng rng = make_rng(smc_cfg.seed, {stream::kMutate, static_cast<std::uint64_t>(iteration),
                                      static_cast<std::uint64_t>(m)});
    return mwg_move(sys.particles[m], sys.loglik[m], sys.phi, z, cfg, priors, smc_cfg, rng);
}

}  // namespace

Execution execution_for(int threads) {
    return threads == 1 ? Execution::Serial : Execution::Parallel;
}

int resolve_threads(int threads) {
#ifdef WSNLOC_HAVE_OPENMP
    return threads > 0 ? threads : omp_get_max_threads();
#else
    (void)threads;
    return 1;
#endif
}

void loglik_serial(std::span<const SourceParams> particles, const ObservationVector& z,
                   const ScenarioConfig& cfg, std::span<double> out) {
    for (std::size_t m = 0; m < particles.size(); ++m)
        out[m] = log_likelihood(z, particles[m], cfg);
}

void loglik_parallel(std::span<const SourceParams> particles, const ObservationVector& z,
                     const ScenarioConfig& cfg, std::span<double> out, int threads) {
    ExceptionSlot err;
    const long n = static_cast<long>(particles.size());
    [[maybe_unused]] const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(static) num_threads(nt)
    for (long m = 0; m < n; ++m) {
        err.run([&] {
            out[static_cast<std::size_t>(m)] =
                log_likelihood(z, particles[static_cast<std::size_t>(m)], cfg);
        });
    }
    err.rethrow();
}

void loglik(std::span<const SourceParams> particles, const ObservationVector& z,
            const ScenarioConfig& cfg, std::span<double> out, int threads) {
    if (execution_for(threads) == Execution::Serial)
        loglik_serial(particles, z, cfg, out);
    else
        loglik_parallel(particles, z, cfg, out, threads);
}

void sample_prior_serial(int k, const Priors& priors, std::uint64_t seed, std::uint64_t tag,
                         std::span<SourceParams> out) {
    for (std::size_t m = 0; m < out.size(); ++m) {
        Rng rng = make_rng(seed, {tag, static_cast<std::uint64_t>(m)});
        out[m] = sample_prior(k, priors, rng);
    }
}

void sample_prior_parallel(int k, const Priors& priors, std::uint64_t seed, std::uint64_t tag,
                           std::span<SourceParams> out, int threads) {
    const long n = static_cast<long>(out.size());
    [[maybe_unused]] const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(static) num_threads(nt)
    for (long m = 0; m < n; ++m) {
        Rng rng = make_rng(seed, {tag, static_cast<std::uint64_t>(m)});
        out[static_cast<std::size_t>(m)] = sample_prior(k, priors, rng);
    }
}

MutationStats mutate_serial(ParticleSystem& sys, const ObservationVector& z,
                            const ScenarioConfig& cfg, const Priors& priors,
                            const SmcConfig& smc_cfg, int iteration) {
    MutationStats stats;
    for (std::size_t m = 0; m < sys.size(); ++m) {
        MoveResult r = move_one(sys, m, z, cfg, priors, smc_cfg, iteration);
        sys.particles[m] = std::move(r.theta);
        sys.loglik[m] = r.loglik;
        stats.accepted += r.accepted;
        stats.proposed += r.proposed;
    }
    return stats;
}

MutationStats mutate_parallel(ParticleSystem& sys, const ObservationVector& z,
                              const ScenarioConfig& cfg, const Priors& priors,
                              const SmcConfig& smc_cfg, int iteration, int threads) {
    const long n = static_cast<long>(sys.size());
    std::vector<MoveResult> moved(sys.size());
    ExceptionSlot err;
    [[maybe_unused]] const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic, 4) num_threads(nt)
    for (long m = 0; m < n; ++m) {
        err.run([&] {
            moved[static_cast<std::size_t>(m)] =
                move_one(sys, static_cast<std::size_t>(m), z, cfg, priors, smc_cfg, iteration);
        });
    }
    err.rethrow();
    MutationStats stats;
    for (std::size_t m = 0; m < moved.size(); ++m) {
        sys.particles[m] = std::move(moved[m].theta);
        sys.loglik[m] = moved[m].loglik;
        stats.accepted += moved[m].accepted;
        stats.proposed += moved[m].proposed;
    }
    return stats;
}

}  // namespace wsnloc::kernels
