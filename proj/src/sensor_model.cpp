#include "wsnloc/sensor_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "wsnloc/errors.hpp"
#include "wsnloc/math_util.hpp"

namespace wsnloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int bits_for_levels(std::size_t levels) {
    if (levels < 2 || !std::has_single_bit(levels))
        throw ConfigError("quantizer levels must be a power of two >= 2, got " +
                          std::to_string(levels));
    return std::countr_zero(levels);
}

}  // namespace

std::vector<double> SourceParams::flatten() const {
    std::vector<double> out;
    out.reserve(dim());
    for (const auto& b : blocks) {
        out.push_back(b.power);
        out.push_back(b.x);
        out.push_back(b.y);
    }
    return out;
}

SourceParams SourceParams::from_flat(std::span<const double> flat) {
    if (flat.size() % 3 != 0)
        throw DimensionMismatch("flat parameter vector length must be a multiple of 3");
    SourceParams out;
    out.blocks.reserve(flat.size() / 3);
    for (std::size_t i = 0; i < flat.size(); i += 3)
        out.blocks.push_back({flat[i], flat[i + 1], flat[i + 2]});
    return out;
}

void SourceParams::validate() const {
    if (blocks.empty()) throw ConfigError("a source configuration needs k >= 1 blocks");
    for (const auto& b : blocks) {
        if (!(b.power > 0.0) || !std::isfinite(b.power))
            throw ConfigError("source power must be positive and finite");
        if (!std::isfinite(b.x) || !std::isfinite(b.y))
            throw ConfigError("source coordinates must be finite");
    }
}

// ---------------------------------------------------------------- Quantizer

Quantizer::Quantizer(int bits, std::vector<double> thresholds)
    : bits_(bits), thresholds_(std::move(thresholds)) {}

Quantizer Quantizer::uniform(int bits, double lambda_min, double lambda_max) {
    if (bits < 1 || bits > 16) throw ConfigError("quantizer bits must be in [1, 16]");
    const int levels = 1 << bits;
    std::vector<double> interior(static_cast<std::size_t>(levels - 1));
    if (levels == 2) {
        interior[0] = 0.5 * (lambda_min + lambda_max);
    } else {
        const double step = (lambda_max - lambda_min) / (levels - 2);
        for (int l = 0; l < levels - 1; ++l) interior[static_cast<std::size_t>(l)] = lambda_min + step * l;
        interior.back() = lambda_max;
    }
    return from_interior(std::move(interior));
}

Quantizer Quantizer::from_interior(std::vector<double> interior) {
    const int bits = bits_for_levels(interior.size() + 1);
    std::vector<double> t;
    t.reserve(interior.size() + 2);
    t.push_back(-kInf);
    for (double v : interior) {
        if (!std::isfinite(v)) throw ConfigError("interior thresholds must be finite");
        if (!(v > t.back())) throw ConfigError("quantizer thresholds must be strictly increasing");
        t.push_back(v);
    }
    t.push_back(kInf);
    return Quantizer(bits, std::move(t));
}

std::vector<double> Quantizer::interior() const {
    return {thresholds_.begin() + 1, thresholds_.end() - 1};
}

int Quantizer::quantize(double s) const {
    // first threshold strictly greater than s; bins are [lambda_l, lambda_{l+1})
    auto it = std::upper_bound(thresholds_.begin() + 1, thresholds_.end() - 1, s);
    return static_cast<int>(it - thresholds_.begin()) - 1;
}

int quantize(double s, const Quantizer& q) { return q.quantize(s); }

// ------------------------------------------------------------ ChannelMatrix

ChannelMatrix ChannelMatrix::identity(int levels) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(levels),
                                          std::vector<double>(static_cast<std::size_t>(levels), 0.0));
    for (int j = 0; j < levels; ++j) rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(j)] = 1.0;
    return ChannelMatrix(std::move(rows));
}

ChannelMatrix ChannelMatrix::symmetric(int levels, double eps) {
    if (levels < 2) throw ConfigError("channel needs at least two levels");
    if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("channel epsilon must be in [0, 1]");
    const double off = eps / (levels - 1);
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(levels),
                                          std::vector<double>(static_cast<std::size_t>(levels), off));
    for (int j = 0; j < levels; ++j) rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(j)] = 1.0 - eps;
    return ChannelMatrix(std::move(rows));
}

ChannelMatrix::ChannelMatrix(std::vector<std::vector<double>> rows) {
    levels_ = static_cast<int>(rows.size());
    if (levels_ < 2) throw ConfigError("channel matrix must be at least 2x2");
    entries_.reserve(rows.size() * rows.size());
    for (const auto& row : rows) {
        if (row.size() != rows.size()) throw ConfigError("channel matrix must be square");
        for (double v : row) {
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("channel entries must be in [0, 1]");
            entries_.push_back(v);
        }
    }
    for (int m = 0; m < levels_; ++m) {
        double col = 0.0;
        for (int j = 0; j < levels_; ++j) col += (*this)(j, m);
        if (std::abs(col - 1.0) > 1e-12)
            throw ConfigError("channel column " + std::to_string(m) + " does not sum to 1");
    }
    finish();
}

void ChannelMatrix::finish() {
    log_entries_.resize(entries_.size());
    identity_ = true;
    for (int j = 0; j < levels_; ++j) {
        for (int m = 0; m < levels_; ++m) {
            const double v = (*this)(j, m);
            log_entries_[static_cast<std::size_t>(j * levels_ + m)] = std::log(v);
            if (v != (j == m ? 1.0 : 0.0)) identity_ = false;
        }
    }
}

std::vector<std::vector<double>> ChannelMatrix::rows() const {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(levels_));
    for (int j = 0; j < levels_; ++j)
        for (int m = 0; m < levels_; ++m) out[static_cast<std::size_t>(j)].push_back((*this)(j, m));
    return out;
}

// ----------------------------------------------------------- ScenarioConfig

double ScenarioConfig::sigma() const { return std::sqrt(sigma2); }

void ScenarioConfig::validate() const {
    if (sensors.empty()) throw ConfigError("scenario needs at least one sensor");
    if (!(roi_side > 0.0)) throw ConfigError("roi_side must be positive");
    for (const auto& s : sensors) {
        if (!(s.x >= 0.0 && s.x <= roi_side && s.y >= 0.0 && s.y <= roi_side))
            throw ConfigError("sensor coordinates must lie inside the ROI");
    }
    if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
    if (!(d0 > 0.0)) throw ConfigError("d0 must be positive");
    if (!(decay_n > 0.0)) throw ConfigError("decay_n must be positive");
    if (channel.levels() != quantizer.levels())
        throw ConfigError("channel size does not match the number of quantizer levels");
}

std::vector<Point> ScenarioConfig::grid(int rows, int cols, double roi_side) {
    if (rows < 1 || cols < 1) throw ConfigError("grid needs rows, cols >= 1");
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(rows * cols));
    const double dx = roi_side / cols;
    const double dy = roi_side / rows;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.push_back({(c + 0.5) * dx, (r + 0.5) * dy});
    return out;
}

void ObservationVector::validate(const ScenarioConfig& cfg) const {
    if (z.size() != cfg.n_sensors())
        throw DimensionMismatch("observation length " + std::to_string(z.size()) +
                                " differs from sensor count " + std::to_string(cfg.n_sensors()));
    for (int v : z)
        if (v < 0 || v >= cfg.levels()) throw ConfigError("observation level out of range");
}

// ------------------------------------------------------------ forward model

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double source_amplitude(Point sensor, const Source& src, const ScenarioConfig& cfg) {
    double d = distance(sensor, {src.x, src.y});
    if (d == 0.0) throw SingularDistance("source coincides with a sensor");
    d = std::max(d, kMinDistance);
    const double ratio = cfg.d0 / d;
    const double atten = cfg.decay_n == 2.0 ? ratio : std::pow(ratio, 0.5 * cfg.decay_n);
    return std::sqrt(src.power) * atten;
}

double amplitude(std::size_t sensor, const SourceParams& theta, const ScenarioConfig& cfg) {
    const Point c = cfg.sensors.at(sensor);
    double a = 0.0;
    for (const auto& b : theta.blocks) a += source_amplitude(c, b, cfg);
    return a;
}

std::vector<double> amplitudes(const SourceParams& theta, const ScenarioConfig& cfg) {
    std::vector<double> out(cfg.n_sensors());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = amplitude(i, theta, cfg);
    return out;
}

double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double log_q_function(double x) {
    if (x < 0.0) return std::log1p(-q_function(-x));
    if (x < 30.0) return std::log(q_function(x));
    // Asymptotic expansion of the Mills ratio; relative error < 1e-12 here.
    const double inv2 = 1.0 / (x * x);
    const double series = 1.0 + inv2 * (-1.0 + inv2 * (3.0 + inv2 * (-15.0 + inv2 * 105.0)));
    return -0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double log_q_difference(double lo, double hi) {
    if (!(lo < hi)) return -kInf;
    if (lo >= 0.0) {
        const double la = log_q_function(lo);
        if (la == -kInf) return -kInf;
        return la + log1mexp(log_q_function(hi) - la);
    }
    if (hi <= 0.0) {
        // Q(lo) - Q(hi) = Q(-hi) - Q(-lo), both in the upper tail
        const double la = log_q_function(-hi);
        if (la == -kInf) return -kInf;
        return la + log1mexp(log_q_function(-lo) - la);
    }
    return std::log1p(-(q_function(hi) + q_function(-lo)));
}

double log_level_prob_at(double amp, int level, const ScenarioConfig& cfg) {
    const double inv_sigma = 1.0 / cfg.sigma();
    const auto t = cfg.quantizer.thresholds();
    const double lo = (t[static_cast<std::size_t>(level)] - amp) * inv_sigma;
    const double hi = (t[static_cast<std::size_t>(level) + 1] - amp) * inv_sigma;
    return log_q_difference(lo, hi);
}

std::vector<double> level_probs_at(double amp, const ScenarioConfig& cfg) {
    std::vector<double> out(static_cast<std::size_t>(cfg.levels()));
    for (int l = 0; l < cfg.levels(); ++l)
        out[static_cast<std::size_t>(l)] = std::exp(log_level_prob_at(amp, l, cfg));
    return out;
}

std::vector<double> level_probs(std::size_t sensor, const SourceParams& theta,
                                const ScenarioConfig& cfg) {
    return level_probs_at(amplitude(sensor, theta, cfg), cfg);
}

double log_obs_prob_at(double amp, int j, const ScenarioConfig& cfg) {
    if (cfg.channel.is_identity()) return log_level_prob_at(amp, j, cfg);
    const int levels = cfg.levels();
    double terms[64];
    double* buf = terms;
    std::vector<double> heap;
    if (levels > 64) {
        heap.resize(static_cast<std::size_t>(levels));
        buf = heap.data();
    }
    for (int m = 0; m < levels; ++m) {
        const double lc = cfg.channel.log_entry(j, m);
        buf[m] = lc == -kInf ? -kInf : lc + log_level_prob_at(amp, m, cfg);
    }
    return log_sum_exp(std::span<const double>(buf, static_cast<std::size_t>(levels)));
}

std::vector<double> obs_probs_at(double amp, const ScenarioConfig& cfg) {
    std::vector<double> out(static_cast<std::size_t>(cfg.levels()));
    for (int j = 0; j < cfg.levels(); ++j)
        out[static_cast<std::size_t>(j)] = std::exp(log_obs_prob_at(amp, j, cfg));
    return out;
}

double obs_prob(std::size_t sensor, const SourceParams& theta, const ScenarioConfig& cfg,
                int j) {
    if (j < 0 || j >= cfg.levels()) throw ConfigError("observation level out of range");
    return std::exp(log_obs_prob_at(amplitude(sensor, theta, cfg), j, cfg));
}

std::vector<double> obs_probs(std::size_t sensor, const SourceParams& theta,
                              const ScenarioConfig& cfg) {
    return obs_probs_at(amplitude(sensor, theta, cfg), cfg);
}

double log_likelihood_from_amplitudes(const ObservationVector& z,
                                      std::span<const double> amps,
                                      const ScenarioConfig& cfg) {
    double acc = 0.0;
    for (std::size_t i = 0; i < amps.size(); ++i) acc += log_obs_prob_at(amps[i], z.z[i], cfg);
    return acc;
}

double log_likelihood(const ObservationVector& z, const SourceParams& theta,
                      const ScenarioConfig& cfg) {
    double acc = 0.0;
    for (std::size_t i = 0; i < cfg.n_sensors(); ++i)
        acc += log_obs_prob_at(amplitude(i, theta, cfg), z.z[i], cfg);
    return acc;
}

ObservationVector simulate(const SourceParams& theta, const ScenarioConfig& cfg, Rng& rng) {
    std::normal_distribution<double> noise(0.0, cfg.sigma());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    ObservationVector out;
    out.z.resize(cfg.n_sensors());
    for (std::size_t i = 0; i < cfg.n_sensors(); ++i) {
        const double s = amplitude(i, theta, cfg) + noise(rng);
        const int b = cfg.quantizer.quantize(s);
        if (cfg.channel.is_identity()) {
            out.z[i] = b;
            continue;
        }
        const double u = unif(rng);
        double cum = 0.0;
        int j = cfg.levels() - 1;
        for (int cand = 0; cand < cfg.levels(); ++cand) {
            cum += cfg.channel(cand, b);
            if (u < cum) {
                j = cand;
                break;
            }
        }
        out.z[i] = j;
    }
    return out;
}

}  // namespace wsnloc
