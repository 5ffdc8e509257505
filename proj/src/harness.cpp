#include "wsnloc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "wsnloc/errors.hpp"
#include "wsnloc/io.hpp"
#include "wsnloc/kernels.hpp"
#include "wsnloc/relabel.hpp"

namespace wsnloc::harness {

namespace {

// study tags under kReplicate
constexpr std::uint64_t kCalibrationStudy = 0;
constexpr std::uint64_t kSelectionStudy = 1;
constexpr std::uint64_t kVarianceStudy = 2;
constexpr std::uint64_t kSweepLevels = 3;
constexpr std::uint64_t kSweepSensors = 4;
constexpr std::uint64_t kSweepSigma2 = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double std_error(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    return std::sqrt(sample_var(v) / static_cast<double>(v.size()));
}

// Permutation p minimizing sum |est[i] - ref[p[i]]|^2.
BlockPermutation best_assignment(std::span<const Point> est, std::span<const Point> ref) {
    if (est.size() != ref.size())
        throw DimensionMismatch("estimate and truth have different numbers of sources");
    if (est.empty()) return {};
    BlockPermutation best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& p : all_permutations(static_cast<int>(est.size()))) {
        double cost = 0.0;
        for (std::size_t i = 0; i < est.size(); ++i) {
            const Point& r = ref[static_cast<std::size_t>(p[i])];
            cost += (est[i].x - r.x) * (est[i].x - r.x) + (est[i].y - r.y) * (est[i].y - r.y);
        }
        if (cost < best_cost) {
            best_cost = cost;
            best = p;
        }
    }
    return best;
}

// Runs body(i) for i in [0, n), in parallel over i unless threads == 1.
template <typename F>
void for_each_replicate(int n, int threads, F&& body) {
    if (kernels::execution_for(threads) == kernels::Execution::Serial) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    [[maybe_unused]] const int nt = kernels::resolve_threads(threads);
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
    for (int i = 0; i < n; ++i) body(i);
}

struct Realization {
    SourceParams truth;
    ObservationVector z;
};

Realization make_realization(int k, const ScenarioConfig& cfg, const Priors& priors,
                             double min_separation, std::uint64_t rep_seed) {
    Rng truth_rng = make_rng(rep_seed, {stream::kTruth});
    Rng obs_rng = make_rng(rep_seed, {stream::kObservation});
    Realization r;
    r.truth = draw_truth(k, priors, min_separation, cfg.roi_side, truth_rng);
    r.z = simulate(r.truth, cfg, obs_rng);
    return r;
}

SourceParams relabeled_mmse(const ParticleSystem& sys, const Priors& priors) {
    return mmse_estimate(online_relabel(sys, priors).system);
}

SmcConfig inner_smc(const ExperimentManifest& m) {
    SmcConfig c = m.smc;
    // replicates already run concurrently; keep each one serial
    c.threads = kernels::execution_for(m.threads) == kernels::Execution::Serial ? m.smc.threads : 1;
    return c;
}

int inner_threads(const ExperimentManifest& m) {
    return kernels::execution_for(m.threads) == kernels::Execution::Serial ? m.smc.threads : 1;
}

json sweep_to_json(std::span<const SweepPoint> pts) {
    json arr = json::array();
    for (const auto& p : pts)
        arr.push_back({{"value", p.value},
                       {"n_ok", p.n_ok},
                       {"t_tilde", p.t_tilde},
                       {"n_is", p.n_is},
                       {"mean_mse_smc", p.mean_mse_smc},
                       {"se_mse_smc", p.se_mse_smc},
                       {"mean_mse_is", p.mean_mse_is},
                       {"se_mse_is", p.se_mse_is},
                       {"pcrb_bound", p.pcrb_bound},
                       {"mse_smc", p.mse_smc},
                       {"mse_is", p.mse_is}});
    return arr;
}

std::string model_header(int k_max) {
    std::string h;
    for (int k = 1; k <= k_max; ++k) h += ",M" + std::to_string(k);
    return h;
}

}  // namespace

std::vector<Point> locations(const SourceParams& theta) {
    std::vector<Point> out;
    out.reserve(theta.size());
    for (const auto& b : theta.blocks) out.push_back({b.x, b.y});
    return out;
}

double mse(std::span<const Point> estimate, std::span<const Point> truth) {
    const auto p = best_assignment(estimate, truth);
    double total = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const Point& t = truth[static_cast<std::size_t>(p[i])];
        total += (estimate[i].x - t.x) * (estimate[i].x - t.x) +
                 (estimate[i].y - t.y) * (estimate[i].y - t.y);
    }
    return total;
}

double mse(const SourceParams& estimate, const SourceParams& truth) {
    return mse(locations(estimate), locations(truth));
}

SourceParams draw_truth(int k, const Priors& priors, double min_separation, double roi_side, Rng& rng) {
    if (min_separation < 0.0) throw ConfigError("min_separation must be >= 0");
    if (!(roi_side > 0.0)) throw ConfigError("roi_side must be positive");
    auto inside = [roi_side](const Source& s) {
        return s.x >= 0.0 && s.x <= roi_side && s.y >= 0.0 && s.y <= roi_side;
    };
    for (int attempt = 0; attempt < 100000; ++attempt) {
        SourceParams theta = sample_prior(k, priors, rng);
        bool ok = std::all_of(theta.blocks.begin(), theta.blocks.end(), inside);
        for (std::size_t a = 0; a < theta.size() && ok; ++a)
            for (std::size_t b = a + 1; b < theta.size() && ok; ++b)
                ok = distance({theta.blocks[a].x, theta.blocks[a].y},
                              {theta.blocks[b].x, theta.blocks[b].y}) >= min_separation;
        if (ok) return theta;
    }
    throw ConfigError("could not draw sources with the requested separation");
}

void ExperimentManifest::validate() const {
    scenario.validate();
    priors.validate();
    model_prior.validate();
    smc.validate();
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    if (k_true < 1) throw ConfigError("k_true must be >= 1");
    if (k_true > kMaxRelabelSources) throw ConfigError("k_true is too large to relabel");
    if (k_true > k_max()) throw ConfigError("k_true must not exceed k_max");
    if (calibration_runs < 1) throw ConfigError("calibration_runs must be >= 1");
    if (variance_repeats == 1) throw ConfigError("variance_repeats must be 0 or >= 2");
    if (variance_repeats < 0) throw ConfigError("variance_repeats must be >= 0");
    if (!(lambda_max > lambda_min)) throw ConfigError("lambda_max must exceed lambda_min");
    if (channel_epsilon < 0.0) throw ConfigError("channel_epsilon must be >= 0");
    if (sweeps.k < 1 || sweeps.k > kMaxRelabelSources) throw ConfigError("sweeps.k out of range");
    if (!sweeps.empty() && sweeps.replicates < 1)
        throw ConfigError("sweeps.replicates must be >= 1");
    for (int l : sweeps.levels)
        if (l < 2 || (l & (l - 1)) != 0) throw ConfigError("sweep levels must be powers of two");
    for (int n : sweeps.n_sensors) {
        const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
        if (n < 1 || r * r != n) throw ConfigError("sweep sensor counts must be perfect squares");
    }
    for (double s : sweeps.sigma2)
        if (!(s > 0.0)) throw ConfigError("sweep sigma2 values must be > 0");
    pcrb.validate();
}

ExperimentManifest ExperimentManifest::defaults() {
    ExperimentManifest m;
    m.scenario.sensors = ScenarioConfig::grid(10, 10, 100.0);
    m.priors = default_hyperparams(100.0);
    m.smc.proposal_cov = SmcConfig::default_proposal_cov(m.priors);
    return m;
}

ExperimentManifest manifest_from_json(const json& j) {
    ExperimentManifest m = ExperimentManifest::defaults();
    try {
        if (j.contains("scenario")) {
            const json& s = j.at("scenario");
            m.scenario = io::scenario_from_json(s);
            m.priors = io::priors_from_json(s, m.scenario.roi_side);
            const json q = s.value("quantizer", json::object());
            if (q.contains("thresholds")) {
                const auto t = q.at("thresholds").get<std::vector<double>>();
                m.lambda_min = t.front();
                m.lambda_max = t.size() > 1 ? t.back() : t.front() + 1.0;
            } else {
                m.lambda_min = q.value("lambda_min", 0.0);
                m.lambda_max = q.value("lambda_max", 22.0);
            }
            const json c = s.value("channel", json::object());
            if (c.value("preset", std::string("identity")) == "symmetric")
                m.channel_epsilon = c.value("epsilon", 0.0);
        }
        m.lambda_min = j.value("lambda_min", m.lambda_min);
        m.lambda_max = j.value("lambda_max", m.lambda_max);
        m.channel_epsilon = j.value("channel_epsilon", m.channel_epsilon);
        m.smc = io::smc_config_from_json(j.value("smc", json::object()), m.priors);
        if (j.contains("model_prior"))
            m.model_prior.probs = j.at("model_prior").get<std::vector<double>>();
        else if (j.contains("k_max"))
            m.model_prior = ModelPrior::uniform(j.at("k_max").get<int>());
        const json p = j.value("pcrb", json::object());
        m.pcrb.n_mc = p.value("n_mc", m.pcrb.n_mc);
        m.pcrb.seed = p.value("seed", m.pcrb.seed);
        m.k_true = j.value("k_true", m.k_true);
        m.replicates = j.value("replicates", m.replicates);
        m.seed = j.value("seed", m.seed);
        m.min_separation = j.value("min_separation", m.min_separation);
        m.calibration_runs = j.value("calibration_runs", m.calibration_runs);
        m.run_selection = j.value("selection", m.run_selection);
        m.variance_repeats = j.value("variance_repeats", m.variance_repeats);
        m.threads = j.value("threads", m.threads);
        if (j.contains("sweeps")) {
            const json& s = j.at("sweeps");
            m.sweeps.levels = s.value("levels", std::vector<int>{});
            m.sweeps.n_sensors = s.value("n_sensors", std::vector<int>{});
            m.sweeps.sigma2 = s.value("sigma2", std::vector<double>{});
            m.sweeps.k = s.value("k", m.sweeps.k);
            m.sweeps.replicates = s.value("replicates", m.sweeps.replicates);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
    m.pcrb.threads = m.threads;
    m.validate();
    return m;
}

json manifest_to_json(const ExperimentManifest& m) {
    json scenario = io::scenario_to_json(m.scenario);
    scenario["prior"] = {{"a", m.priors.power.shape},
                         {"b", m.priors.power.scale},
                         {"sigma_p", std::sqrt(m.priors.location.var_x)}};
    json smc = io::smc_config_to_json(m.smc);
    smc.erase("proposal_std_p");
    smc["proposal_std_p_frac"] = std::sqrt(m.smc.proposal_cov(0, 0)) / m.priors.power.mode();
    return json{{"scenario", scenario},
                {"lambda_min", m.lambda_min},
                {"lambda_max", m.lambda_max},
                {"channel_epsilon", m.channel_epsilon},
                {"smc", smc},
                {"model_prior", m.model_prior.probs},
                {"pcrb", {{"n_mc", m.pcrb.n_mc}, {"seed", m.pcrb.seed}}},
                {"k_true", m.k_true},
                {"replicates", m.replicates},
                {"seed", m.seed},
                {"min_separation", m.min_separation},
                {"calibration_runs", m.calibration_runs},
                {"selection", m.run_selection},
                {"variance_repeats", m.variance_repeats},
                {"sweeps",
                 {{"levels", m.sweeps.levels},
                  {"n_sensors", m.sweeps.n_sensors},
                  {"sigma2", m.sweeps.sigma2},
                  {"k", m.sweeps.k},
                  {"replicates", m.sweeps.replicates}}},
                {"threads", m.threads}};
}

Calibration calibrate(const ScenarioConfig& cfg, const Priors& priors, const SmcConfig& smc,
                      int k_true, std::span<const int> models, int runs, double min_separation,
                      std::uint64_t seed) {
    if (runs < 1) throw ConfigError("calibration needs at least one run");
    const int k_hi = models.empty() ? 0 : *std::max_element(models.begin(), models.end());
    Calibration cal;
    cal.t_tilde.assign(static_cast<std::size_t>(k_hi), 0.0);
    cal.n_is.assign(static_cast<std::size_t>(k_hi), 0);
    for (int r = 0; r < runs; ++r) {
        const auto rep_seed = derive_seed(seed, {stream::kReplicate, kCalibrationStudy,
                                                 static_cast<std::uint64_t>(r)});
        const auto real = make_realization(k_true, cfg, priors, min_separation, rep_seed);
        for (int k : models) {
            SmcConfig c = smc;
            c.seed = model_seed(rep_seed, k);
            cal.t_tilde[static_cast<std::size_t>(k - 1)] +=
                run_smc(k, real.z, cfg, priors, c).info.n_iters;
        }
    }
    for (int k : models) {
        auto& t = cal.t_tilde[static_cast<std::size_t>(k - 1)];
        t /= runs;
        cal.n_is[static_cast<std::size_t>(k - 1)] = match_budget(t, smc.n_particles);
    }
    return cal;
}

SelectionSummary run_selection(const ExperimentManifest& m, const Calibration& cal) {
    const int k_max = m.k_max();
    if (static_cast<int>(cal.n_is.size()) < k_max)
        throw ConfigError("calibration does not cover every model");
    const std::vector<int> n_is(cal.n_is.begin(), cal.n_is.begin() + k_max);
    SelectionSummary out;
    out.replicates.resize(static_cast<std::size_t>(m.replicates));
    const SmcConfig smc = inner_smc(m);
    const int threads = inner_threads(m);

    for_each_replicate(m.replicates, m.threads, [&](int i) {
        ReplicateRecord& rec = out.replicates[static_cast<std::size_t>(i)];
        rec.index = i;
        rec.seed = derive_seed(m.seed, {stream::kReplicate, kSelectionStudy,
                                        static_cast<std::uint64_t>(i)});
        const auto t0 = Clock::now();
        try {
            const auto real =
                make_realization(m.k_true, m.scenario, m.priors, m.min_separation, rec.seed);
            rec.truth = real.truth;
            SmcConfig c = smc;
            c.seed = derive_seed(rec.seed, {stream::kInit});
            const auto smc_runs = run_smc_models(real.z, m.scenario, m.priors, m.model_prior, c);
            const auto is_runs = run_is_models(real.z, m.scenario, m.priors, m.model_prior, n_is,
                                               derive_seed(rec.seed, {stream::kImportance}),
                                               threads);
            rec.smc = smc_runs.table;
            rec.is = is_runs.table;
            if (m.k_true <= k_max) {
                const auto idx = static_cast<std::size_t>(m.k_true - 1);
                rec.mmse_smc = relabeled_mmse(smc_runs.runs[idx].system, m.priors);
                rec.mmse_is = relabeled_mmse(is_runs.runs[idx].system, m.priors);
                rec.mse_smc = mse(rec.mmse_smc, rec.truth);
                rec.mse_is = mse(rec.mmse_is, rec.truth);
            }
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        rec.wall_seconds = seconds_since(t0);
    });

    out.smc_counts.assign(static_cast<std::size_t>(k_max), 0);
    out.is_counts.assign(static_cast<std::size_t>(k_max), 0);
    std::vector<double> ms, mi;
    for (const auto& rec : out.replicates) {
        if (!rec.ok) {
            ++out.n_failed;
            continue;
        }
        ++out.smc_counts[static_cast<std::size_t>(rec.smc.k_star - 1)];
        ++out.is_counts[static_cast<std::size_t>(rec.is.k_star - 1)];
        ms.push_back(rec.mse_smc);
        mi.push_back(rec.mse_is);
    }
    out.mean_mse_smc = mean_of(ms);
    out.mean_mse_is = mean_of(mi);
    return out;
}

VarianceStudy variance_study(const ExperimentManifest& m, const Calibration& cal, int n_repeats,
                             bool identical_seeds) {
    if (n_repeats < 2) throw ConfigError("variance study needs n_repeats >= 2");
    const int k_max = m.k_max();
    if (static_cast<int>(cal.n_is.size()) < k_max)
        throw ConfigError("calibration does not cover every model");
    const auto base = derive_seed(m.seed, {stream::kReplicate, kVarianceStudy});
    const auto real = make_realization(m.k_true, m.scenario, m.priors, m.min_separation,
                                       derive_seed(base, {0}));
    VarianceStudy out;
    out.truth = real.truth;
    out.z = real.z;

    struct Repeat {
        std::vector<double> logz_smc, logz_is, ess_smc, ess_is;
        std::vector<SourceParams> mmse_smc, mmse_is;
    };
    std::vector<Repeat> reps(static_cast<std::size_t>(n_repeats));
    const SmcConfig smc = inner_smc(m);
    const int threads = inner_threads(m);

    for_each_replicate(n_repeats, m.threads, [&](int r) {
        const auto rep_seed =
            derive_seed(base, {1, static_cast<std::uint64_t>(identical_seeds ? 0 : r)});
        Repeat& rep = reps[static_cast<std::size_t>(r)];
        for (int k = 1; k <= k_max; ++k) {
            SmcConfig c = smc;
            c.seed = model_seed(derive_seed(rep_seed, {stream::kInit}), k);
            const auto s = run_smc(k, real.z, m.scenario, m.priors, c);
            const auto is = run_is(k, real.z, m.scenario, m.priors,
                                   cal.n_is[static_cast<std::size_t>(k - 1)],
                                   model_seed(derive_seed(rep_seed, {stream::kImportance}), k),
                                   threads);
            rep.logz_smc.push_back(s.log_evidence);
            rep.logz_is.push_back(is.log_evidence);
            rep.ess_smc.push_back(s.info.final_ess / smc.n_particles);
            rep.ess_is.push_back(is.ess / cal.n_is[static_cast<std::size_t>(k - 1)]);
            rep.mmse_smc.push_back(k <= kMaxRelabelSources ? relabeled_mmse(s.system, m.priors)
                                                           : mmse_estimate(s.system));
            rep.mmse_is.push_back(k <= kMaxRelabelSources ? relabeled_mmse(is.system, m.priors)
                                                          : mmse_estimate(is.system));
        }
    });

    // Trace of the location covariance across repeats, each estimate aligned
    // to the first repeat's block order.
    auto mmse_var = [&](int k, bool smc_side) {
        const auto idx = static_cast<std::size_t>(k - 1);
        const auto ref = locations(smc_side ? reps[0].mmse_smc[idx] : reps[0].mmse_is[idx]);
        std::vector<std::vector<double>> coords(2 * ref.size());
        for (const auto& rep : reps) {
            const auto est = locations(smc_side ? rep.mmse_smc[idx] : rep.mmse_is[idx]);
            const auto p = best_assignment(est, ref);
            for (std::size_t b = 0; b < est.size(); ++b) {
                const auto dest = static_cast<std::size_t>(p[b]);
                coords[2 * dest].push_back(est[b].x);
                coords[2 * dest + 1].push_back(est[b].y);
            }
        }
        double tr = 0.0;
        for (const auto& c : coords) tr += sample_var(c);
        return tr;
    };

    for (int k = 1; k <= k_max; ++k) {
        const auto idx = static_cast<std::size_t>(k - 1);
        std::vector<double> ls, li, es, ei;
        for (const auto& rep : reps) {
            ls.push_back(rep.logz_smc[idx]);
            li.push_back(rep.logz_is[idx]);
            es.push_back(rep.ess_smc[idx]);
            ei.push_back(rep.ess_is[idx]);
        }
        ModelVariance mv;
        mv.k = k;
        mv.t_tilde = cal.t_tilde[idx];
        mv.n_is = cal.n_is[idx];
        mv.mean_logz_smc = mean_of(ls);
        mv.mean_logz_is = mean_of(li);
        mv.var_logz_smc = sample_var(ls);
        mv.var_logz_is = sample_var(li);
        mv.var_mmse_smc = mmse_var(k, true);
        mv.var_mmse_is = mmse_var(k, false);
        mv.ess_smc = mean_of(es);
        mv.ess_is = mean_of(ei);
        out.models.push_back(mv);
    }
    return out;
}

ScenarioConfig scenario_with_levels(const ExperimentManifest& m, int levels) {
    ScenarioConfig cfg = m.scenario;
    int bits = 0;
    while ((1 << bits) < levels) ++bits;
    cfg.quantizer = Quantizer::uniform(bits, m.lambda_min, m.lambda_max);
    cfg.channel = m.channel_epsilon > 0.0 ? ChannelMatrix::symmetric(levels, m.channel_epsilon)
                                          : ChannelMatrix::identity(levels);
    cfg.validate();
    return cfg;
}

ScenarioConfig scenario_with_sensors(const ExperimentManifest& m, int n_sensors) {
    ScenarioConfig cfg = m.scenario;
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_sensors))));
    if (side * side != n_sensors) throw ConfigError("sensor count must be a perfect square");
    cfg.sensors = ScenarioConfig::grid(side, side, cfg.roi_side);
    cfg.validate();
    return cfg;
}

ScenarioConfig scenario_with_sigma2(const ExperimentManifest& m, double sigma2) {
    ScenarioConfig cfg = m.scenario;
    cfg.sigma2 = sigma2;
    cfg.validate();
    return cfg;
}

SweepPoint run_sweep_point(const ExperimentManifest& m, const ScenarioConfig& cfg, double value,
                           std::uint64_t tag) {
    SweepPoint pt;
    pt.value = value;
    const int k = m.sweeps.k;
    const auto base = derive_seed(m.seed, {stream::kReplicate, tag,
                                           static_cast<std::uint64_t>(std::llround(value * 1e6))});
    const int models[] = {k};
    const SmcConfig smc = inner_smc(m);
    const int threads = inner_threads(m);
    const auto cal = calibrate(cfg, m.priors, smc, k, models, m.calibration_runs,
                               m.min_separation, derive_seed(base, {0}));
    pt.t_tilde = cal.t_tilde[static_cast<std::size_t>(k - 1)];
    pt.n_is = cal.n_is[static_cast<std::size_t>(k - 1)];

    const int n = m.sweeps.replicates;
    std::vector<double> ms(static_cast<std::size_t>(n)), mi(static_cast<std::size_t>(n));
    std::vector<char> ok(static_cast<std::size_t>(n), 0);
    for_each_replicate(n, m.threads, [&](int i) {
        const auto rep_seed = derive_seed(base, {1, static_cast<std::uint64_t>(i)});
        try {
            const auto real = make_realization(k, cfg, m.priors, m.min_separation, rep_seed);
            SmcConfig c = smc;
            c.seed = model_seed(derive_seed(rep_seed, {stream::kInit}), k);
            const auto s = run_smc(k, real.z, cfg, m.priors, c);
            const auto is = run_is(k, real.z, cfg, m.priors, pt.n_is,
                                   model_seed(derive_seed(rep_seed, {stream::kImportance}), k),
                                   threads);
            ms[static_cast<std::size_t>(i)] = mse(relabeled_mmse(s.system, m.priors), real.truth);
            mi[static_cast<std::size_t>(i)] = mse(relabeled_mmse(is.system, m.priors), real.truth);
            ok[static_cast<std::size_t>(i)] = 1;
        } catch (const std::exception&) {
            ok[static_cast<std::size_t>(i)] = 0;
        }
    });
    for (int i = 0; i < n; ++i) {
        if (!ok[static_cast<std::size_t>(i)]) continue;
        pt.mse_smc.push_back(ms[static_cast<std::size_t>(i)]);
        pt.mse_is.push_back(mi[static_cast<std::size_t>(i)]);
    }
    pt.n_ok = static_cast<int>(pt.mse_smc.size());
    pt.mean_mse_smc = mean_of(pt.mse_smc);
    pt.se_mse_smc = std_error(pt.mse_smc);
    pt.mean_mse_is = mean_of(pt.mse_is);
    pt.se_mse_is = std_error(pt.mse_is);

    PcrbConfig pc = m.pcrb;
    pc.k = k;
    pc.seed = derive_seed(base, {stream::kPcrb});
    try {
        pt.pcrb_bound = pcrb_bound(cfg, m.priors, pc).location_mse_bound;
    } catch (const NumericalError&) {
        pt.pcrb_bound = std::numeric_limits<double>::quiet_NaN();
    }
    return pt;
}

RunReport run_experiment(const ExperimentManifest& m) {
    m.validate();
    const auto t0 = Clock::now();
    RunReport r;
    r.manifest = m;
    if (m.run_selection || m.variance_repeats >= 2) {
        std::vector<int> models(static_cast<std::size_t>(m.k_max()));
        std::iota(models.begin(), models.end(), 1);
        r.calibration = calibrate(m.scenario, m.priors, inner_smc(m), m.k_true, models,
                                  m.calibration_runs, m.min_separation, m.seed);
    }
    if (m.run_selection) r.selection = run_selection(m, r.calibration);
    if (m.variance_repeats >= 2) r.variance = variance_study(m, r.calibration, m.variance_repeats);
    for (int l : m.sweeps.levels)
        r.sweep_levels.push_back(run_sweep_point(m, scenario_with_levels(m, l), l, kSweepLevels));
    for (int n : m.sweeps.n_sensors)
        r.sweep_sensors.push_back(
            run_sweep_point(m, scenario_with_sensors(m, n), n, kSweepSensors));
    for (double s : m.sweeps.sigma2)
        r.sweep_sigma2.push_back(run_sweep_point(m, scenario_with_sigma2(m, s), s, kSweepSigma2));
    r.wall_seconds = seconds_since(t0);
    return r;
}

std::string selection_counts_csv(const RunReport& r) {
    const int k_max = r.manifest.k_max();
    std::string out = "algorithm" + model_header(k_max) + "\n";
    if (!r.selection) return out;
    auto row = [&](const char* name, const std::vector<int>& counts) {
        out += name;
        for (int c : counts) out += "," + std::to_string(c);
        out += "\n";
    };
    row("SMC", r.selection->smc_counts);
    row("IS", r.selection->is_counts);
    return out;
}

std::string ess_table_csv(const RunReport& r) {
    const int k_max = r.manifest.k_max();
    std::string out = "algorithm" + model_header(k_max) + "\n";
    if (!r.variance) return out;
    std::string smc = "SMC", is = "IS";
    for (const auto& mv : r.variance->models) {
        smc += "," + num(mv.ess_smc);
        is += "," + num(mv.ess_is);
    }
    return out + smc + "\n" + is + "\n";
}

std::string replicates_csv(const RunReport& r) {
    const int k_max = r.manifest.k_max();
    std::string out = "replicate,seed,ok,k_star_smc,k_star_is,mse_smc,mse_is";
    for (int k = 1; k <= k_max; ++k) out += ",logz_smc_M" + std::to_string(k);
    for (int k = 1; k <= k_max; ++k) out += ",logz_is_M" + std::to_string(k);
    for (int k = 1; k <= k_max; ++k) out += ",ess_smc_M" + std::to_string(k);
    for (int k = 1; k <= k_max; ++k) out += ",ess_is_M" + std::to_string(k);
    for (int k = 1; k <= k_max; ++k) out += ",T_M" + std::to_string(k);
    out += "\n";
    if (!r.selection) return out;
    for (const auto& rec : r.selection->replicates) {
        out += std::to_string(rec.index) + "," + std::to_string(rec.seed) + "," +
               (rec.ok ? "1" : "0");
        if (!rec.ok) {
            out += ",,,,";
            out += std::string(static_cast<std::size_t>(5 * k_max), ',');
            out += "\n";
            continue;
        }
        out += "," + std::to_string(rec.smc.k_star) + "," + std::to_string(rec.is.k_star) + "," +
               num(rec.mse_smc) + "," + num(rec.mse_is);
        for (double v : rec.smc.log_evidence) out += "," + num(v);
        for (double v : rec.is.log_evidence) out += "," + num(v);
        for (double v : rec.smc.ess) out += "," + num(v);
        for (double v : rec.is.ess) out += "," + num(v);
        for (int v : rec.smc.n_iters) out += "," + std::to_string(v);
        out += "\n";
    }
    return out;
}

std::string variance_csv(const RunReport& r) {
    std::string out =
        "model,t_tilde,n_is,mean_logz_smc,mean_logz_is,var_logz_smc,var_logz_is,var_mmse_smc,"
        "var_mmse_is\n";
    if (!r.variance) return out;
    for (const auto& mv : r.variance->models)
        out += "M" + std::to_string(mv.k) + "," + num(mv.t_tilde) + "," + std::to_string(mv.n_is) +
               "," + num(mv.mean_logz_smc) + "," + num(mv.mean_logz_is) + "," +
               num(mv.var_logz_smc) + "," + num(mv.var_logz_is) + "," + num(mv.var_mmse_smc) +
               "," + num(mv.var_mmse_is) + "\n";
    return out;
}

std::string calibration_csv(const RunReport& r) {
    std::string out = "model,t_tilde,n_is\n";
    for (std::size_t i = 0; i < r.calibration.t_tilde.size(); ++i)
        out += "M" + std::to_string(i + 1) + "," + num(r.calibration.t_tilde[i]) + "," +
               std::to_string(r.calibration.n_is[i]) + "\n";
    return out;
}

std::string sweep_csv(const std::string& axis, std::span<const SweepPoint> points) {
    std::string out = axis + ",mse_smc,mse_is,pcrb_bound\n";
    for (const auto& p : points)
        out += num(p.value) + "," + num(p.mean_mse_smc) + "," + num(p.mean_mse_is) + "," +
               num(p.pcrb_bound) + "\n";
    return out;
}

void emit_report(const RunReport& r, const std::filesystem::path& dir) {
    try {
        std::filesystem::create_directories(dir);
    } catch (const std::filesystem::filesystem_error& e) {
        throw IoError(std::string("cannot create output directory: ") + e.what());
    }
    io::write_json(dir / "manifest.json", manifest_to_json(r.manifest));

    json rep{{"wall_seconds", r.wall_seconds},
             {"calibration", {{"t_tilde", r.calibration.t_tilde}, {"n_is", r.calibration.n_is}}}};
    if (r.selection) {
        json reps = json::array();
        for (const auto& rec : r.selection->replicates) {
            json e{{"index", rec.index},
                   {"seed", rec.seed},
                   {"ok", rec.ok},
                   {"wall_seconds", rec.wall_seconds}};
            if (!rec.ok) {
                e["error"] = rec.error;
            } else {
                e["truth"] = io::source_params_to_json(rec.truth)["sources"];
                e["k_star_smc"] = rec.smc.k_star;
                e["k_star_is"] = rec.is.k_star;
                e["log_evidence_smc"] = rec.smc.log_evidence;
                e["log_evidence_is"] = rec.is.log_evidence;
                e["ess_smc"] = rec.smc.ess;
                e["ess_is"] = rec.is.ess;
                e["n_iters_smc"] = rec.smc.n_iters;
                e["mmse_smc"] = io::source_params_to_json(rec.mmse_smc)["sources"];
                e["mmse_is"] = io::source_params_to_json(rec.mmse_is)["sources"];
                e["mse_smc"] = rec.mse_smc;
                e["mse_is"] = rec.mse_is;
            }
            reps.push_back(e);
        }
        rep["selection"] = {{"smc_counts", r.selection->smc_counts},
                            {"is_counts", r.selection->is_counts},
                            {"n_failed", r.selection->n_failed},
                            {"mean_mse_smc", r.selection->mean_mse_smc},
                            {"mean_mse_is", r.selection->mean_mse_is},
                            {"replicates", reps}};
    }
    if (r.variance) {
        json models = json::array();
        for (const auto& mv : r.variance->models)
            models.push_back({{"k", mv.k},
                              {"t_tilde", mv.t_tilde},
                              {"n_is", mv.n_is},
                              {"var_logz_smc", mv.var_logz_smc},
                              {"var_logz_is", mv.var_logz_is},
                              {"var_mmse_smc", mv.var_mmse_smc},
                              {"var_mmse_is", mv.var_mmse_is},
                              {"ess_smc", mv.ess_smc},
                              {"ess_is", mv.ess_is}});
        rep["variance"] = {{"truth", io::source_params_to_json(r.variance->truth)["sources"]},
                           {"z", r.variance->z.z},
                           {"models", models}};
    }
    rep["sweeps"] = {{"levels", sweep_to_json(r.sweep_levels)},
                     {"n_sensors", sweep_to_json(r.sweep_sensors)},
                     {"sigma2", sweep_to_json(r.sweep_sigma2)}};
    io::write_json(dir / "report.json", rep);

    io::write_text(dir / "calibration.csv", calibration_csv(r));
    io::write_text(dir / "selection_counts.csv", selection_counts_csv(r));
    io::write_text(dir / "ess_table.csv", ess_table_csv(r));
    io::write_text(dir / "replicates.csv", replicates_csv(r));
    io::write_text(dir / "variance.csv", variance_csv(r));
    io::write_text(dir / "mse_vs_L.csv", sweep_csv("L", r.sweep_levels));
    io::write_text(dir / "mse_vs_sensors.csv", sweep_csv("n_sensors", r.sweep_sensors));
    io::write_text(dir / "mse_vs_sigma2.csv", sweep_csv("sigma2", r.sweep_sigma2));
}

json infer_report(const ObservationVector& z, const ScenarioConfig& cfg, const Priors& priors,
                  const ModelPrior& model_prior, const SmcConfig& smc) {
    const auto runs = run_smc_models(z, cfg, priors, model_prior, smc);
    json per_model = json::array();
    for (std::size_t i = 0; i < runs.runs.size(); ++i) {
        const auto& run = runs.runs[i];
        const int k = static_cast<int>(i) + 1;
        json e{{"k", k},
               {"log_evidence", run.log_evidence},
               {"ess", run.info.final_ess},
               {"n_iters", run.info.n_iters},
               {"n_resamples", run.info.n_resamples},
               {"acceptance_rate", run.info.acceptance_rate},
               {"posterior", runs.table.posterior[i]},
               {"mmse_raw", io::source_params_to_json(mmse_estimate(run.system))["sources"]}};
        if (k <= kMaxRelabelSources)
            e["mmse_relabeled"] =
                io::source_params_to_json(relabeled_mmse(run.system, priors))["sources"];
        per_model.push_back(e);
    }
    return json{{"per_model", per_model},
                {"posterior", runs.table.posterior},
                {"k_star", runs.table.k_star}};
}

json pcrb_report(const PcrbResult& r) {
    return json{{"k", r.j.rows() / 3},
                {"J", io::matrix_to_json(r.j)},
                {"J_d", io::matrix_to_json(r.j_d)},
                {"J_p", io::matrix_to_json(r.j_p)},
                {"bound", io::matrix_to_json(r.bound)},
                {"location_mse_bound", r.location_mse_bound},
                {"power_mse_bound", r.power_mse_bound},
                {"n_rejected_draws", r.n_rejected}};
}

}  // namespace wsnloc::harness
