#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wsnloc/rng.hpp"

namespace wsnloc {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// One emitter: power at the reference distance plus its planar position.
struct Source {
    double power = 0.0;
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Source&) const = default;
};

/// The parameter vector of a k-source model, stored block by block in the
/// order (P_1, x_1, y_1, ..., P_k, x_k, y_k).
struct SourceParams {
    std::vector<Source> blocks;

    std::size_t size() const noexcept { return blocks.size(); }
    std::size_t dim() const noexcept { return 3 * blocks.size(); }

    std::vector<double> flatten() const;
    static SourceParams from_flat(std::span<const double> flat);

    /// Throws ConfigError unless k >= 1, every power > 0, coordinates finite.
    void validate() const;

    bool operator==(const SourceParams&) const = default;
};

/// M-bit quantizer with L = 2^M levels and thresholds lambda_0..lambda_L,
/// lambda_0 = -inf and lambda_L = +inf. Bins are lower-inclusive.
class Quantizer {
public:
    /// Interior thresholds equally spaced from lambda_min to lambda_max. For
    /// L = 2 the single interior threshold is their midpoint.
    static Quantizer uniform(int bits, double lambda_min, double lambda_max);
    /// From the L-1 interior thresholds; L must be a power of two.
    static Quantizer from_interior(std::vector<double> interior);

    int bits() const noexcept { return bits_; }
    int levels() const noexcept { return static_cast<int>(thresholds_.size()) - 1; }
    double threshold(int l) const { return thresholds_.at(static_cast<std::size_t>(l)); }
    std::span<const double> thresholds() const noexcept { return thresholds_; }
    std::vector<double> interior() const;

    int quantize(double s) const;

private:
    Quantizer(int bits, std::vector<double> thresholds);
    int bits_ = 1;
    std::vector<double> thresholds_;
};

/// Channel transition probabilities c(j, m) = p(z = j | b = m).
class ChannelMatrix {
public:
    static ChannelMatrix identity(int levels);
    /// L-ary symmetric channel: 1 - eps on the diagonal, eps / (L - 1) elsewhere.
    static ChannelMatrix symmetric(int levels, double eps);
    /// rows[j][m] = p(z = j | b = m). Every column must sum to one.
    explicit ChannelMatrix(std::vector<std::vector<double>> rows);

    int levels() const noexcept { return levels_; }
    double operator()(int j, int m) const {
        return entries_[static_cast<std::size_t>(j * levels_ + m)];
    }
    double log_entry(int j, int m) const {
        return log_entries_[static_cast<std::size_t>(j * levels_ + m)];
    }
    bool is_identity() const noexcept { return identity_; }
    std::vector<std::vector<double>> rows() const;

private:
    ChannelMatrix() = default;
    void finish();
    int levels_ = 0;
    bool identity_ = false;
    std::vector<double> entries_;
    std::vector<double> log_entries_;
};

struct ScenarioConfig {
    std::vector<Point> sensors;
    double roi_side = 100.0;
    double decay_n = 2.0;
    double d0 = 1.0;
    double sigma2 = 1.0;
    Quantizer quantizer = Quantizer::uniform(2, 0.0, 22.0);
    ChannelMatrix channel = ChannelMatrix::identity(4);

    double sigma() const;
    std::size_t n_sensors() const noexcept { return sensors.size(); }
    int levels() const noexcept { return quantizer.levels(); }

    /// Throws ConfigError when any invariant is violated.
    void validate() const;

    /// rows x cols sensors at the cell centres of a roi_side square.
    static std::vector<Point> grid(int rows, int cols, double roi_side);
};

struct ObservationVector {
    std::vector<int> z;

    std::size_t size() const noexcept { return z.size(); }
    void validate(const ScenarioConfig& cfg) const;
    bool operator==(const ObservationVector&) const = default;
};

/// Distances below this are clamped in the attenuation model; an exact
/// coincidence raises SingularDistance.
inline constexpr double kMinDistance = 1e-3;

double distance(Point a, Point b);

/// Signal amplitude at one sensor from all sources.
double amplitude(std::size_t sensor, const SourceParams& theta, const ScenarioConfig& cfg);
/// Contribution of a single source to the amplitude at one sensor.
double source_amplitude(Point sensor, const Source& src, const ScenarioConfig& cfg);
std::vector<double> amplitudes(const SourceParams& theta, const ScenarioConfig& cfg);

int quantize(double s, const Quantizer& q);

/// Complementary standard normal CDF.
double q_function(double x);
/// log Q(x), accurate far into the upper tail where Q underflows.
double log_q_function(double x);
/// log(Q(lo) - Q(hi)) for lo <= hi, evaluated from the smaller tail.
double log_q_difference(double lo, double hi);

std::vector<double> level_probs(std::size_t sensor, const SourceParams& theta,
                                const ScenarioConfig& cfg);
std::vector<double> level_probs_at(double amp, const ScenarioConfig& cfg);
double log_level_prob_at(double amp, int level, const ScenarioConfig& cfg);

double obs_prob(std::size_t sensor, const SourceParams& theta, const ScenarioConfig& cfg,
                int j);
std::vector<double> obs_probs(std::size_t sensor, const SourceParams& theta,
                              const ScenarioConfig& cfg);
std::vector<double> obs_probs_at(double amp, const ScenarioConfig& cfg);
double log_obs_prob_at(double amp, int j, const ScenarioConfig& cfg);

/// Sum over sensors of log p(z_i | theta). Returns -infinity when some
/// observation has zero probability under the channel; throws
/// SingularDistance when a source coincides with a sensor.
double log_likelihood(const ObservationVector& z, const SourceParams& theta,
                      const ScenarioConfig& cfg);
double log_likelihood_from_amplitudes(const ObservationVector& z,
                                      std::span<const double> amps,
                                      const ScenarioConfig& cfg);

ObservationVector simulate(const SourceParams& theta, const ScenarioConfig& cfg, Rng& rng);

}  // namespace wsnloc
