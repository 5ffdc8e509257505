// Command-line front end: simulate, infer, pcrb, experiment.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wsnloc/errors.hpp"
#include "wsnloc/harness.hpp"
#include "wsnloc/io.hpp"

namespace {

using namespace wsnloc;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 1;

struct SimulateArgs {
    std::string scenario, truth, out;
    std::uint64_t seed = 1;
};

struct InferArgs {
    std::string scenario, obs, smc_config, out;
};

struct PcrbArgs {
    std::string scenario, out;
    int k = 1;
    int n_mc = 1000;
    std::uint64_t seed = 1;
};

struct ExperimentArgs {
    std::string manifest, out;
};

void simulate_cmd(const SimulateArgs& a) {
    const json sj = io::read_json(a.scenario);
    const auto cfg = io::scenario_from_json(sj);
    const auto truth = io::truth_from_json(io::read_json(a.truth));
    Rng rng = make_rng(a.seed, {stream::kObservation});
    io::write_json(a.out, io::observations_to_json(simulate(truth, cfg, rng)));
}

void infer_cmd(const InferArgs& a) {
    const json sj = io::read_json(a.scenario);
    const auto cfg = io::scenario_from_json(sj);
    const auto priors = io::priors_from_json(sj, cfg.roi_side);
    const auto z = io::observations_from_json(io::read_json(a.obs));
    z.validate(cfg);
    const json cj = a.smc_config.empty() ? json::object() : io::read_json(a.smc_config);
    const auto smc = io::smc_config_from_json(cj, priors);
    ModelPrior mp = ModelPrior::uniform(cj.value("k_max", 5));
    if (cj.contains("model_prior")) mp.probs = cj.at("model_prior").get<std::vector<double>>();
    mp.validate();
    json report = harness::infer_report(z, cfg, priors, mp, smc);
    report["smc_config"] = io::smc_config_to_json(smc);
    io::write_json(a.out, report);
}

void pcrb_cmd(const PcrbArgs& a) {
    const json sj = io::read_json(a.scenario);
    const auto cfg = io::scenario_from_json(sj);
    const auto priors = io::priors_from_json(sj, cfg.roi_side);
    PcrbConfig pc;
    pc.k = a.k;
    pc.n_mc = a.n_mc;
    pc.seed = a.seed;
    io::write_json(a.out, harness::pcrb_report(pcrb_bound(cfg, priors, pc)));
}

void experiment_cmd(const ExperimentArgs& a) {
    const auto m = harness::manifest_from_json(io::read_json(a.manifest));
    const auto report = harness::run_experiment(m);
    harness::emit_report(report, a.out);
    std::cout << "wrote " << a.out << " in " << report.wall_seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-source localization from quantized sensor readings"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Draw quantized observations for a known truth");
    s->add_option("--scenario", sim.scenario, "Scenario JSON")->required();
    s->add_option("--truth", sim.truth, "Truth JSON")->required();
    s->add_option("--seed", sim.seed, "RNG seed");
    s->add_option("-o,--output", sim.out, "Observation JSON to write")->required();

    InferArgs inf;
    auto* i = app.add_subcommand("infer", "Run SMC for every model and select k");
    i->add_option("--scenario", inf.scenario, "Scenario JSON")->required();
    i->add_option("--obs", inf.obs, "Observation JSON")->required();
    i->add_option("--smc-config", inf.smc_config, "SMC config JSON");
    i->add_option("-o,--output", inf.out, "Report JSON to write")->required();

    PcrbArgs pa;
    auto* p = app.add_subcommand("pcrb", "Posterior Cramer-Rao bound for k sources");
    p->add_option("--scenario", pa.scenario, "Scenario JSON")->required();
    p->add_option("--k", pa.k, "Number of sources")->required();
    p->add_option("--n-mc", pa.n_mc, "Prior draws for the data information");
    p->add_option("--seed", pa.seed, "RNG seed");
    p->add_option("-o,--output", pa.out, "PCRB JSON to write")->required();

    ExperimentArgs ex;
    auto* e = app.add_subcommand("experiment", "Run an experiment manifest");
    e->add_option("--manifest", ex.manifest, "Manifest JSON")->required();
    e->add_option("-o,--output", ex.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*s) simulate_cmd(sim);
        if (*i) infer_cmd(inf);
        if (*p) pcrb_cmd(pa);
        if (*e) experiment_cmd(ex);
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        switch (err.kind()) {
            case ErrorKind::Config: return kExitConfig;
            case ErrorKind::Numerical: return kExitNumerical;
            case ErrorKind::Io: return kExitIo;
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitIo;
    }
    return 0;
}
