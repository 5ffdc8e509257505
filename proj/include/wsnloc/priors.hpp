#pragma once

#include <vector>

#include "wsnloc/rng.hpp"
#include "wsnloc/sensor_model.hpp"

namespace wsnloc {

/// Gaussian prior on a source position with diagonal covariance.
struct LocationPrior {
    Point mean{50.0, 50.0};
    double var_x = 1.0;
    double var_y = 1.0;
};

/// Inverse-gamma prior on source power, shape a and scale b.
struct PowerPrior {
    double shape = 50.0;
    double scale = 2.5e5;

    double mean() const { return scale / (shape - 1.0); }
    double mode() const { return scale / (shape + 1.0); }
    double variance() const {
        return scale * scale / ((shape - 1.0) * (shape - 1.0) * (shape - 2.0));
    }
};

struct Priors {
    LocationPrior location;
    PowerPrior power;

    /// Throws ConfigError unless variances > 0, shape > 3 and scale > 0.
    void validate() const;
};

struct ModelPrior {
    std::vector<double> probs;  // probs[k-1] = p(M_k)

    static ModelPrior uniform(int k_max);
    int k_max() const noexcept { return static_cast<int>(probs.size()); }
    double log_prob(int k) const;
    void validate() const;
};

/// Radius of the 99% disc of a standard bivariate normal, sqrt(-2 ln 0.01).
double coverage_radius_99();

/// ROI-centred location prior whose 99% disc reaches the ROI corners, and the
/// inverse-gamma power prior with a = 50, b = 2.5e5.
Priors default_hyperparams(double roi_side);

Source sample_block(const Priors& priors, Rng& rng);
SourceParams sample_prior(int k, const Priors& priors, Rng& rng);

double log_prior_block(const Source& block, const Priors& priors);
/// -infinity when some power is not positive.
double log_prior(const SourceParams& theta, const Priors& priors);

}  // namespace wsnloc
