#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsnloc/pcrb.hpp"
#include "wsnloc/priors.hpp"
#include "wsnloc/selection.hpp"
#include "wsnloc/sensor_model.hpp"
#include "wsnloc/smc.hpp"

namespace wsnloc::harness {

using nlohmann::json;

/// Squared location error after matching estimate blocks to truth blocks by
/// minimum total squared distance. Throws DimensionMismatch on size mismatch.
double mse(std::span<const Point> estimate, std::span<const Point> truth);
double mse(const SourceParams& estimate, const SourceParams& truth);
std::vector<Point> locations(const SourceParams& theta);

/// Prior draw conditioned on every source lying in the [0, roi_side]^2 square
/// and every pair being at least min_separation apart.
SourceParams draw_truth(int k, const Priors& priors, double min_separation, double roi_side, Rng& rng);

struct SweepAxes {
    std::vector<int> levels;       // quantizer levels L, powers of two
    std::vector<int> n_sensors;    // perfect squares, laid out as a grid
    std::vector<double> sigma2;
    int k = 4;                     // sources per sweep replicate
    int replicates = 20;
    bool empty() const { return levels.empty() && n_sensors.empty() && sigma2.empty(); }
};

struct ExperimentManifest {
    ScenarioConfig scenario;
    Priors priors;
    ModelPrior model_prior = ModelPrior::uniform(5);
    SmcConfig smc;
    PcrbConfig pcrb;
    double lambda_min = 0.0;       // used to rebuild the quantizer for sweeps over L
    double lambda_max = 22.0;
    double channel_epsilon = 0.0;  // 0 keeps the identity channel in sweeps

    int k_true = 4;
    int replicates = 20;
    std::uint64_t seed = 1;
    double min_separation = 5.0;
    int calibration_runs = 3;
    bool run_selection = true;
    int variance_repeats = 30;     // 0 disables the variance study
    SweepAxes sweeps;
    int threads = 0;

    int k_max() const { return model_prior.k_max(); }
    void validate() const;

    /// 100 x 100 m, 10 x 10 grid, L = 4, uniform model prior on 1..5.
    static ExperimentManifest defaults();
};

ExperimentManifest manifest_from_json(const json& j);
json manifest_to_json(const ExperimentManifest& m);

struct Calibration {
    std::vector<double> t_tilde;  // mean SMC iteration count, index k-1
    std::vector<int> n_is;        // budget-matched IS size
};

/// Averages the SMC iteration count over `runs` realizations of the k_true
/// scenario for every model listed in `models`.
Calibration calibrate(const ScenarioConfig& cfg, const Priors& priors, const SmcConfig& smc,
                      int k_true, std::span<const int> models, int runs, double min_separation,
                      std::uint64_t seed);

struct ReplicateRecord {
    int index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    SourceParams truth;
    ModelEvidenceTable smc;
    ModelEvidenceTable is;
    SourceParams mmse_smc;  // relabeled, at k_true
    SourceParams mmse_is;
    double mse_smc = 0.0;
    double mse_is = 0.0;
    double wall_seconds = 0.0;
};

struct SelectionSummary {
    std::vector<ReplicateRecord> replicates;
    std::vector<int> smc_counts;  // index k-1
    std::vector<int> is_counts;
    int n_failed = 0;
    double mean_mse_smc = 0.0;
    double mean_mse_is = 0.0;
};

struct ModelVariance {
    int k = 1;
    double t_tilde = 0.0;
    int n_is = 0;
    double mean_logz_smc = 0.0;
    double mean_logz_is = 0.0;
    double var_logz_smc = 0.0;
    double var_logz_is = 0.0;
    double var_mmse_smc = 0.0;  // trace of the location covariance across repeats
    double var_mmse_is = 0.0;
    double ess_smc = 0.0;       // mean ESS / N
    double ess_is = 0.0;        // mean ESS / N_IS
};

struct VarianceStudy {
    SourceParams truth;
    ObservationVector z;
    std::vector<ModelVariance> models;
};

struct SweepPoint {
    double value = 0.0;
    int n_ok = 0;
    double t_tilde = 0.0;
    int n_is = 0;
    std::vector<double> mse_smc;
    std::vector<double> mse_is;
    double mean_mse_smc = 0.0;
    double se_mse_smc = 0.0;
    double mean_mse_is = 0.0;
    double se_mse_is = 0.0;
    double pcrb_bound = 0.0;
};

struct RunReport {
    ExperimentManifest manifest;
    Calibration calibration;
    std::optional<SelectionSummary> selection;
    std::optional<VarianceStudy> variance;
    std::vector<SweepPoint> sweep_levels;
    std::vector<SweepPoint> sweep_sensors;
    std::vector<SweepPoint> sweep_sigma2;
    double wall_seconds = 0.0;
};

/// Calibration, then selection replicates, variance study and sweeps as
/// enabled in the manifest. Replicate failures are recorded, not thrown.
RunReport run_experiment(const ExperimentManifest& m);

/// Model-selection study only: truth, observations, SMC and IS for every
/// model, selection, relabeling and scoring per replicate.
SelectionSummary run_selection(const ExperimentManifest& m, const Calibration& cal);

/// Repeated SMC and IS runs on one fixed k_true realization. With
/// identical_seeds every repeat reuses the first repeat's seeds.
VarianceStudy variance_study(const ExperimentManifest& m, const Calibration& cal, int n_repeats,
                             bool identical_seeds = false);

/// MSE of SMC and IS at k = sweeps.k for one scenario, plus its PCRB.
SweepPoint run_sweep_point(const ExperimentManifest& m, const ScenarioConfig& cfg, double value,
                           std::uint64_t tag);

ScenarioConfig scenario_with_levels(const ExperimentManifest& m, int levels);
ScenarioConfig scenario_with_sensors(const ExperimentManifest& m, int n_sensors);
ScenarioConfig scenario_with_sigma2(const ExperimentManifest& m, double sigma2);

/// CSV tables. Wall-clock values are kept out of the CSVs so reruns with
/// the same manifest are byte-identical.
std::string selection_counts_csv(const RunReport& r);
std::string ess_table_csv(const RunReport& r);
std::string replicates_csv(const RunReport& r);
std::string variance_csv(const RunReport& r);
std::string calibration_csv(const RunReport& r);
std::string sweep_csv(const std::string& axis, std::span<const SweepPoint> points);

/// manifest.json, report.json and the CSV tables under dir.
void emit_report(const RunReport& r, const std::filesystem::path& dir);

/// Inference on one observation vector with every model 1..k_max:
/// evidences, posterior, k*, raw and relabeled MMSE per model.
json infer_report(const ObservationVector& z, const ScenarioConfig& cfg, const Priors& priors,
                  const ModelPrior& model_prior, const SmcConfig& smc);

json pcrb_report(const PcrbResult& r);

}  // namespace wsnloc::harness
