// Serial reference kernels against their OpenMP counterparts.
// Arg(0) selects the serial path, Arg(n) runs the parallel one on n threads
// (0 means the OpenMP default, passed as -1 here).

#include <benchmark/benchmark.h>

#include "wsnloc/harness.hpp"
#include "wsnloc/kernels.hpp"
#include "wsnloc/pcrb.hpp"

using namespace wsnloc;

namespace {

constexpr int kSources = 3;
constexpr int kParticles = 2000;

struct Fixture {
    harness::ExperimentManifest m = harness::ExperimentManifest::defaults();
    ObservationVector z;
    std::vector<SourceParams> particles = std::vector<SourceParams>(kParticles);

    Fixture() {
        Rng rng = make_rng(5, {stream::kObservation});
        z = simulate(SourceParams{{{5000, 30, 30}, {5000, 70, 40}, {5000, 50, 75}}}, m.scenario, rng);
        kernels::sample_prior_serial(kSources, m.priors, 5, 0, particles);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

int threads_of(const benchmark::State& st) { return st.range(0) < 0 ? 0 : static_cast<int>(st.range(0)); }

void BM_Loglik(benchmark::State& st) {
    const auto& f = fixture();
    std::vector<double> out(f.particles.size());
    for (auto _ : st) {
        if (st.range(0) == 0)
            kernels::loglik_serial(f.particles, f.z, f.m.scenario, out);
        else
            kernels::loglik_parallel(f.particles, f.z, f.m.scenario, out, threads_of(st));
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * kParticles);
}

void BM_SamplePrior(benchmark::State& st) {
    const auto& f = fixture();
    std::vector<SourceParams> out(kParticles);
    for (auto _ : st) {
        if (st.range(0) == 0)
            kernels::sample_prior_serial(kSources, f.m.priors, 9, 1, out);
        else
            kernels::sample_prior_parallel(kSources, f.m.priors, 9, 1, out, threads_of(st));
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * kParticles);
}

void BM_Mutate(benchmark::State& st) {
    const auto& f = fixture();
    ParticleSystem sys;
    sys.particles = f.particles;
    sys.loglik.resize(kParticles);
    kernels::loglik_serial(sys.particles, f.z, f.m.scenario, sys.loglik);
    sys.log_weights.assign(kParticles, -std::log(double(kParticles)));
    sys.phi = 0.3;
    SmcConfig sc = f.m.smc;
    sc.n_mcmc = 1;
    int it = 0;
    for (auto _ : st) {
        if (st.range(0) == 0)
            kernels::mutate_serial(sys, f.z, f.m.scenario, f.m.priors, sc, ++it);
        else
            kernels::mutate_parallel(sys, f.z, f.m.scenario, f.m.priors, sc, ++it, threads_of(st));
    }
    st.SetItemsProcessed(st.iterations() * kParticles);
}

void BM_FimDataAvg(benchmark::State& st) {
    const auto& f = fixture();
    PcrbConfig pc;
    pc.k = kSources;
    pc.n_mc = 200;
    pc.threads = st.range(0) == 0 ? 1 : threads_of(st);
    for (auto _ : st) benchmark::DoNotOptimize(fim_data_avg(f.m.scenario, f.m.priors, pc));
    st.SetItemsProcessed(st.iterations() * pc.n_mc);
}

void thread_args(benchmark::internal::Benchmark* b) {
    b->ArgName("threads")->Arg(0)->Arg(-1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_Loglik)->Apply(thread_args);
BENCHMARK(BM_SamplePrior)->Apply(thread_args);
BENCHMARK(BM_Mutate)->Apply(thread_args);
BENCHMARK(BM_FimDataAvg)->Apply(thread_args);

BENCHMARK_MAIN();
