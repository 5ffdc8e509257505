#include "wsnloc/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "wsnloc/errors.hpp"

namespace wsnloc {

void Priors::validate() const {
    if (!(location.var_x > 0.0 && location.var_y > 0.0))
        throw ConfigError("location prior variances must be positive");
    if (!(power.shape > 3.0)) throw ConfigError("power prior shape must exceed 3");
    if (!(power.scale > 0.0)) throw ConfigError("power prior scale must be positive");
}

ModelPrior ModelPrior::uniform(int k_max) {
    if (k_max < 1) throw ConfigError("k_max must be >= 1");
    return ModelPrior{std::vector<double>(static_cast<std::size_t>(k_max), 1.0 / k_max)};
}

double ModelPrior::log_prob(int k) const {
    if (k < 1 || k > k_max()) throw ConfigError("model index out of range");
    return std::log(probs[static_cast<std::size_t>(k - 1)]);
}

void ModelPrior::validate() const {
    if (probs.empty()) throw ConfigError("model prior is empty");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw ConfigError("model prior probabilities must be non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-10) throw ConfigError("model prior must sum to 1");
}

double coverage_radius_99() { return std::sqrt(-2.0 * std::log(0.01)); }

Priors default_hyperparams(double roi_side) {
    if (!(roi_side > 0.0)) throw ConfigError("roi_side must be positive");
    const double sigma_p = roi_side * std::numbers::sqrt2 / (2.0 * coverage_radius_99());
    Priors p;
    p.location.mean = {roi_side / 2.0, roi_side / 2.0};
    p.location.var_x = sigma_p * sigma_p;
    p.location.var_y = sigma_p * sigma_p;
    p.power.shape = 50.0;
    p.power.scale = 2.5e5;
    return p;
}

Source sample_block(const Priors& priors, Rng& rng) {
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::gamma_distribution<double> gamma(priors.power.shape, 1.0 / priors.power.scale);
    Source s;
    s.x = priors.location.mean.x + std::sqrt(priors.location.var_x) * std_normal(rng);
    s.y = priors.location.mean.y + std::sqrt(priors.location.var_y) * std_normal(rng);
    s.power = 1.0 / gamma(rng);
    return s;
}

SourceParams sample_prior(int k, const Priors& priors, Rng& rng) {
    if (k < 1) throw ConfigError("k must be >= 1");
    SourceParams theta;
    theta.blocks.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) theta.blocks.push_back(sample_block(priors, rng));
    return theta;
}

double log_prior_block(const Source& block, const Priors& priors) {
    if (!(block.power > 0.0)) return -std::numeric_limits<double>::infinity();
    const auto& loc = priors.location;
    const double dx = block.x - loc.mean.x;
    const double dy = block.y - loc.mean.y;
    const double log_loc = -std::log(2.0 * std::numbers::pi) -
                           0.5 * std::log(loc.var_x * loc.var_y) -
                           0.5 * (dx * dx / loc.var_x + dy * dy / loc.var_y);
    const double a = priors.power.shape;
    const double b = priors.power.scale;
    const double log_pow =
        a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(block.power) - b / block.power;
    return log_loc + log_pow;
}

double log_prior(const SourceParams& theta, const Priors& priors) {
    double acc = 0.0;
    for (const auto& b : theta.blocks) acc += log_prior_block(b, priors);
    return acc;
}

}  // namespace wsnloc
