#include "wsnloc/relabel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "wsnloc/errors.hpp"

namespace wsnloc {

namespace {

Eigen::VectorXd to_vector(const SourceParams& theta) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(theta.dim()));
    for (std::size_t b = 0; b < theta.size(); ++b) {
        const auto i = static_cast<Eigen::Index>(3 * b);
        v(i) = theta.blocks[b].power;
        v(i + 1) = theta.blocks[b].x;
        v(i + 2) = theta.blocks[b].y;
    }
    return v;
}

double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                       const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::VectorXd diff = x - mu;
    const Eigen::VectorXd white = llt.matrixL().solve(diff);
    const Eigen::MatrixXd l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const double dim = static_cast<double>(x.size());
    return -0.5 * dim * std::log(2.0 * std::numbers::pi) - 0.5 * log_det -
           0.5 * white.squaredNorm();
}

}  // namespace

std::array<double, 3> pooled_block_variance(const ParticleSystem& sys, const Priors& priors) {
    std::array<double, 3> mean{}, var{};
    const std::array<double, 3> fallback{priors.power.variance(), priors.location.var_x,
                                         priors.location.var_y};
    if (sys.size() == 0) return fallback;
    auto coord = [](const Source& s, std::size_t c) { return c == 0 ? s.power : c == 1 ? s.x : s.y; };
    for (int pass = 0; pass < 2; ++pass)
        for (std::size_t m = 0; m < sys.size(); ++m) {
            const double w = std::exp(sys.log_weights[m]) / static_cast<double>(sys.particles[m].size());
            for (const auto& b : sys.particles[m].blocks)
                for (std::size_t c = 0; c < 3; ++c) {
                    if (pass == 0) {
                        mean[c] += w * coord(b, c);
                    } else {
                        const double d = coord(b, c) - mean[c];
                        var[c] += w * d * d;
                    }
                }
        }
    for (std::size_t c = 0; c < 3; ++c)
        if (!(var[c] > 0.0) || !std::isfinite(var[c])) var[c] = fallback[c];
    return var;
}

SourceParams permute_blocks(const SourceParams& theta, std::span<const int> perm) {
    if (perm.size() != theta.size())
        throw DimensionMismatch("permutation size differs from the number of blocks");
    SourceParams out;
    out.blocks.resize(theta.size());
    std::vector<bool> seen(theta.size(), false);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const int dest = perm[i];
        if (dest < 0 || static_cast<std::size_t>(dest) >= perm.size() ||
            seen[static_cast<std::size_t>(dest)])
            throw ConfigError("block permutation is not a bijection");
        seen[static_cast<std::size_t>(dest)] = true;
        out.blocks[static_cast<std::size_t>(dest)] = theta.blocks[i];
    }
    return out;
}

std::vector<BlockPermutation> all_permutations(int k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (k > kMaxRelabelSources)
        throw FactorialOverflow("refusing to enumerate " + std::to_string(k) + "! permutations");
    BlockPermutation p(static_cast<std::size_t>(k));
    std::iota(p.begin(), p.end(), 0);
    std::vector<BlockPermutation> out;
    do {
        out.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
}

double gaussian_log_cost(const SourceParams& theta, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& sigma) {
    const Eigen::VectorXd x = to_vector(theta);
    if (mu.size() != x.size() || sigma.rows() != x.size() || sigma.cols() != x.size())
        throw DimensionMismatch("gaussian_log_cost: dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw SingularCovariance("covariance is not positive definite");
    return mvn_log_density(x, mu, llt);
}

Eigen::MatrixXd regularize_covariance(const Eigen::MatrixXd& sigma) {
    const double ridge = 1e-6 * sigma.trace() / static_cast<double>(sigma.rows());
    Eigen::MatrixXd out = 0.5 * (sigma + sigma.transpose());
    out.diagonal().array() += ridge;
    return out;
}

void RelabelState::add(const Eigen::VectorXd& x, double w) {
    if (w <= 0.0) return;
    cum_weight_sq += w * w;
    if (cum_weight == 0.0) {
        mean = x;
        cov = Eigen::MatrixXd::Zero(x.size(), x.size());
        cum_weight = w;
        return;
    }
    // Weighted Welford update; cov stays the alpha-weighted covariance.
    const double total = cum_weight + w;
    const Eigen::VectorXd delta = x - mean;
    const Eigen::VectorXd new_mean = mean + (w / total) * delta;
    Eigen::MatrixXd m2 = cov * cum_weight + w * delta * (x - new_mean).transpose();
    cov = 0.5 * (m2 + m2.transpose()) / total;
    mean = new_mean;
    cum_weight = total;
}

double RelabelState::effective_count() const {
    return cum_weight_sq > 0.0 ? cum_weight * cum_weight / cum_weight_sq : 0.0;
}

Eigen::MatrixXd RelabelState::shrunk(const Eigen::MatrixXd& sigma0) const {
    const double nu = static_cast<double>(sigma0.rows()) + 2.0;
    const double n = effective_count();
    if (n == 0.0 || cov.size() == 0) return sigma0;
    return (nu * sigma0 + n * cov) / (nu + n);
}

RelabelResult online_relabel(const ParticleSystem& sys, const Priors& priors) {
    RelabelResult res;
    const std::size_t n = sys.size();
    if (n == 0) return res;
    const int k = static_cast<int>(sys.particles[0].size());
    for (const auto& p : sys.particles)
        if (static_cast<int>(p.size()) != k)
            throw DimensionMismatch("all particles must share the number of sources");
    const auto perms = all_permutations(k);

    // Descending weight, ties by original index.
    res.order.resize(n);
    std::iota(res.order.begin(), res.order.end(), std::size_t{0});
    std::stable_sort(res.order.begin(), res.order.end(), [&](std::size_t a, std::size_t b) {
        return sys.log_weights[a] > sys.log_weights[b];
    });

    ParticleSystem& out = res.system;
    out.phi = sys.phi;
    out.log_evidence = sys.log_evidence;
    out.particles.reserve(n);
    out.log_weights.reserve(n);
    out.loglik.reserve(n);
    res.perms.reserve(n);

    const auto dim = static_cast<Eigen::Index>(3 * k);
    RelabelState state;
    const auto pooled = pooled_block_variance(sys, priors);
    Eigen::MatrixXd sigma0 = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index b = 0; b < k; ++b)
        for (Eigen::Index c = 0; c < 3; ++c) sigma0(3 * b + c, 3 * b + c) = pooled[static_cast<std::size_t>(c)];
    Eigen::VectorXd mu;

    for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t src = res.order[pos];
        const SourceParams& theta = sys.particles[src];
        BlockPermutation chosen = perms.front();
        if (pos > 0 && k > 1) {
            // A handful of particles gives a rank-deficient covariance, so
            // shrink toward the pooled per-coordinate spread.
            Eigen::LLT<Eigen::MatrixXd> llt(regularize_covariance(state.shrunk(sigma0)));
            if (llt.info() != Eigen::Success)
                throw SingularCovariance("running covariance could not be regularized");
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& p : perms) {
                const double score = mvn_log_density(to_vector(permute_blocks(theta, p)), mu, llt);
                if (score > best) {
                    best = score;
                    chosen = p;
                }
            }
        }
        SourceParams relabeled = permute_blocks(theta, chosen);
        const double w = std::exp(sys.log_weights[src]);
        state.add(to_vector(relabeled), w);
        mu = state.mean;
        out.particles.push_back(std::move(relabeled));
        out.log_weights.push_back(sys.log_weights[src]);
        out.loglik.push_back(sys.loglik.empty() ? 0.0 : sys.loglik[src]);
        res.perms.push_back(std::move(chosen));
    }
    return res;
}

SourceParams mmse_estimate(const ParticleSystem& sys) {
    if (sys.size() == 0) throw ConfigError("mmse_estimate: empty particle system");
    const std::size_t dim = sys.particles[0].dim();
    std::vector<double> acc(dim, 0.0);
    for (std::size_t m = 0; m < sys.size(); ++m) {
        const double w = std::exp(sys.log_weights[m]);
        const auto v = sys.particles[m].flatten();
        if (v.size() != dim) throw DimensionMismatch("particles differ in dimension");
        for (std::size_t j = 0; j < dim; ++j) acc[j] += w * v[j];
    }
    return SourceParams::from_flat(acc);
}

}  // namespace wsnloc
