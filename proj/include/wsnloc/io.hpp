#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "wsnloc/pcrb.hpp"
#include "wsnloc/priors.hpp"
#include "wsnloc/selection.hpp"
#include "wsnloc/sensor_model.hpp"
#include "wsnloc/smc.hpp"

namespace wsnloc::io {

using nlohmann::json;

/// Scenario document:
///   sensors: [[x, y], ...] or grid: {rows, cols, roi_side}
///   roi_side, decay_n, d0, sigma2
///   quantizer: {bits, lambda_min, lambda_max} or {thresholds: [interior...]}
///   channel: {preset: "identity" | "symmetric", epsilon} or {matrix: [[...]]}
///   prior: {a, b, sigma_p}   (all optional)
ScenarioConfig scenario_from_json(const json& j);
json scenario_to_json(const ScenarioConfig& cfg);

/// Defaults from the ROI side, overridden by the optional "prior" block.
Priors priors_from_json(const json& scenario, double roi_side);
json priors_to_json(const Priors& p);

/// {n_particles, cess_frac, ess_frac, n_mcmc, proposal_std_xy,
///  proposal_std_p_frac, seed, threads}; missing keys keep defaults.
SmcConfig smc_config_from_json(const json& j, const Priors& priors);
json smc_config_to_json(const SmcConfig& c);

/// {"sources": [{"power", "x", "y"}, ...]}
SourceParams truth_from_json(const json& j);
json source_params_to_json(const SourceParams& theta);

/// {"z": [...]}
ObservationVector observations_from_json(const json& j);
json observations_to_json(const ObservationVector& z);

json matrix_to_json(const Eigen::MatrixXd& m);

/// Throws IoError on failure to open or parse.
json read_json(const std::filesystem::path& path);
/// UTF-8, LF line endings, 2-space indent.
void write_json(const std::filesystem::path& path, const json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace wsnloc::io
