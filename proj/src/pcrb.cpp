#include "wsnloc/pcrb.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "wsnloc/errors.hpp"
#include "wsnloc/kernels.hpp"

namespace wsnloc {

namespace {

double gaussian_kernel(double threshold, double amp, double sigma2) {
    if (!std::isfinite(threshold)) return 0.0;
    const double d = threshold - amp;
    return std::exp(-d * d / (2.0 * sigma2));
}

}  // namespace

void PcrbConfig::validate() const {
    if (k < 1) throw ConfigError("pcrb: k must be >= 1");
    if (n_mc < 1) throw ConfigError("pcrb: n_mc must be >= 1");
}

double rho_at(double amp, int level, const ScenarioConfig& cfg) {
    const auto t = cfg.quantizer.thresholds();
    const auto l = static_cast<std::size_t>(level);
    return gaussian_kernel(t[l], amp, cfg.sigma2) - gaussian_kernel(t[l + 1], amp, cfg.sigma2);
}

double rho(std::size_t sensor, int level, const SourceParams& theta, const ScenarioConfig& cfg) {
    return rho_at(amplitude(sensor, theta, cfg), level, cfg);
}

Eigen::VectorXd grad_amplitude(std::size_t sensor, const SourceParams& theta,
                               const ScenarioConfig& cfg) {
    const Point c = cfg.sensors.at(sensor);
    const double n = cfg.decay_n;
    Eigen::VectorXd g(static_cast<Eigen::Index>(theta.dim()));
    for (std::size_t b = 0; b < theta.size(); ++b) {
        const Source& s = theta.blocks[b];
        double d = distance(c, {s.x, s.y});
        if (d == 0.0) throw SingularDistance("source coincides with a sensor");
        d = std::max(d, kMinDistance);
        const double atten = std::pow(cfg.d0 / d, 0.5 * n);
        const double sqrt_p = std::sqrt(s.power);
        const auto i = static_cast<Eigen::Index>(3 * b);
        g(i) = atten / (2.0 * sqrt_p);
        g(i + 1) = atten * 0.5 * n * sqrt_p * (c.x - s.x) / (d * d);
        g(i + 2) = atten * 0.5 * n * sqrt_p * (c.y - s.y) / (d * d);
    }
    return g;
}

Eigen::VectorXd grad_level_prob(std::size_t sensor, int level, const SourceParams& theta,
                                const ScenarioConfig& cfg) {
    if (level < 0 || level >= cfg.levels()) throw ConfigError("level out of range");
    const double a = amplitude(sensor, theta, cfg);
    const double scale = rho_at(a, level, cfg) / std::sqrt(2.0 * std::numbers::pi * cfg.sigma2);
    return scale * grad_amplitude(sensor, theta, cfg);
}

Eigen::VectorXd grad_obs_prob(std::size_t sensor, int j, const SourceParams& theta,
                              const ScenarioConfig& cfg) {
    if (j < 0 || j >= cfg.levels()) throw ConfigError("level out of range");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(theta.dim()));
    for (int l = 0; l < cfg.levels(); ++l) {
        const double c = cfg.channel(j, l);
        if (c != 0.0) g += c * grad_level_prob(sensor, l, theta, cfg);
    }
    return g;
}

FisherMatrix fim_data_at(const SourceParams& theta, const ScenarioConfig& cfg) {
    const auto dim = static_cast<Eigen::Index>(theta.dim());
    FisherMatrix j = FisherMatrix::Zero(dim, dim);
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * cfg.sigma2);
    const int levels = cfg.levels();
    std::vector<double> rhos(static_cast<std::size_t>(levels));
    for (std::size_t i = 0; i < cfg.n_sensors(); ++i) {
        const double a = amplitude(i, theta, cfg);
        for (int l = 0; l < levels; ++l) rhos[static_cast<std::size_t>(l)] = rho_at(a, l, cfg);
        const auto p = obs_probs_at(a, cfg);
        // Every gradient at sensor i is a multiple of grad a_i, so the sensor
        // contributes a single rank-one term.
        double weight = 0.0;
        for (int jj = 0; jj < levels; ++jj) {
            const double pj = p[static_cast<std::size_t>(jj)];
            if (pj < 1e-300) continue;
            double s = 0.0;
            for (int l = 0; l < levels; ++l) s += cfg.channel(jj, l) * rhos[static_cast<std::size_t>(l)];
            s *= norm;
            weight += s * s / pj;
        }
        if (weight == 0.0) continue;
        const Eigen::VectorXd g = grad_amplitude(i, theta, cfg);
        j.noalias() += weight * g * g.transpose();
    }
    return j;
}

FimAverage fim_data_avg(const ScenarioConfig& cfg, const Priors& priors,
                        const PcrbConfig& pcrb_cfg) {
    pcrb_cfg.validate();
    const auto dim = static_cast<Eigen::Index>(3 * pcrb_cfg.k);
    const long n = pcrb_cfg.n_mc;
    std::vector<FisherMatrix> per_draw(static_cast<std::size_t>(n));
    std::vector<int> rejected(static_cast<std::size_t>(n), 0);

    auto one = [&](long i) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            Rng rng = make_rng(pcrb_cfg.seed, {stream::kPcrb, static_cast<std::uint64_t>(i), attempt});
            const SourceParams theta = sample_prior(pcrb_cfg.k, priors, rng);
            try {
                per_draw[static_cast<std::size_t>(i)] = fim_data_at(theta, cfg);
                return;
            } catch (const SingularDistance&) {
                ++rejected[static_cast<std::size_t>(i)];
            }
        }
    };
    if (kernels::execution_for(pcrb_cfg.threads) == kernels::Execution::Serial) {
        for (long i = 0; i < n; ++i) one(i);
    } else {
        [[maybe_unused]] const int nt = kernels::resolve_threads(pcrb_cfg.threads);
#pragma omp parallel for schedule(dynamic, 8) num_threads(nt)
        for (long i = 0; i < n; ++i) one(i);
    }

    // fixed-order reduction
    FimAverage out;
    out.j_d = FisherMatrix::Zero(dim, dim);
    for (long i = 0; i < n; ++i) {
        out.j_d += per_draw[static_cast<std::size_t>(i)];
        out.n_rejected += rejected[static_cast<std::size_t>(i)];
    }
    out.j_d /= static_cast<double>(n);
    return out;
}

double power_prior_information(const PowerPrior& prior) {
    const double a = prior.shape;
    const double b = prior.scale;
    return a * (a + 1.0) * (a + 3.0) / (b * b);
}

FisherMatrix fim_prior(int k, const Priors& priors) {
    if (k < 1) throw ConfigError("k must be >= 1");
    const auto dim = static_cast<Eigen::Index>(3 * k);
    FisherMatrix j = FisherMatrix::Zero(dim, dim);
    const double xi = power_prior_information(priors.power);
    for (Eigen::Index b = 0; b < k; ++b) {
        j(3 * b, 3 * b) = xi;
        j(3 * b + 1, 3 * b + 1) = 1.0 / priors.location.var_x;
        j(3 * b + 2, 3 * b + 2) = 1.0 / priors.location.var_y;
    }
    return j;
}

PcrbResult assemble_pcrb(FisherMatrix j_d, FisherMatrix j_p) {
    if (j_d.rows() != j_p.rows() || j_d.cols() != j_p.cols())
        throw DimensionMismatch("J_d and J_p differ in size");
    PcrbResult r;
    r.j = 0.5 * ((j_d + j_p) + (j_d + j_p).transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r.j);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) throw SingularFim("Fisher information is ill-conditioned");
    r.bound = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
              eig.eigenvectors().transpose();
    for (Eigen::Index b = 0; b < r.j.rows() / 3; ++b) {
        r.power_mse_bound += r.bound(3 * b, 3 * b);
        r.location_mse_bound += r.bound(3 * b + 1, 3 * b + 1) + r.bound(3 * b + 2, 3 * b + 2);
    }
    r.j_d = std::move(j_d);
    r.j_p = std::move(j_p);
    return r;
}

PcrbResult pcrb_bound(const ScenarioConfig& cfg, const Priors& priors,
                      const PcrbConfig& pcrb_cfg) {
    cfg.validate();
    priors.validate();
    auto avg = fim_data_avg(cfg, priors, pcrb_cfg);
    auto r = assemble_pcrb(std::move(avg.j_d), fim_prior(pcrb_cfg.k, priors));
    r.n_rejected = avg.n_rejected;
    return r;
}

}  // namespace wsnloc
