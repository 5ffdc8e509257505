#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wsnloc/priors.hpp"
#include "wsnloc/smc.hpp"

namespace wsnloc {

/// perm[i] is the position block i moves to.
using BlockPermutation = std::vector<int>;

/// Largest k for which every block permutation is enumerated.
inline constexpr int kMaxRelabelSources = 8;

SourceParams permute_blocks(const SourceParams& theta, std::span<const int> perm);

/// All k! permutations of {0, ..., k-1} in lexicographic order.
std::vector<BlockPermutation> all_permutations(int k);

/// Multivariate normal log-density of the flattened theta. No regularization
/// is applied; throws SingularCovariance if sigma is not positive definite.
double gaussian_log_cost(const SourceParams& theta, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& sigma);

/// sigma + 1e-6 * trace(sigma) / dim * I.
Eigen::MatrixXd regularize_covariance(const Eigen::MatrixXd& sigma);

/// Running weighted moments of the relabeled particles.
struct RelabelState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double cum_weight = 0.0;
    double cum_weight_sq = 0.0;

    /// Weighted incremental update with weight w (w may be zero).
    void add(const Eigen::VectorXd& x, double w);

    /// Kish effective number of particles folded in so far.
    double effective_count() const;

    /// Covariance used for scoring: the running covariance shrunk toward
    /// sigma0 with pseudo-count dim + 2, i.e.
    /// (nu * sigma0 + n_eff * cov) / (nu + n_eff).
    Eigen::MatrixXd shrunk(const Eigen::MatrixXd& sigma0) const;
};

struct RelabelResult {
    ParticleSystem system;                   // sorted by descending weight, relabeled
    std::vector<std::size_t> order;          // original index of each output particle
    std::vector<BlockPermutation> perms;     // permutation applied to each output particle
};

/// Weighted variance of (P, x, y) pooled over every block of every particle.
/// Block order does not affect it, so it gives a scale for the relabeling
/// cost before any labels are fixed. Degenerate entries fall back to the prior.
std::array<double, 3> pooled_block_variance(const ParticleSystem& sys, const Priors& priors);

/// Online relabeling of a weighted particle set: particles are visited by
/// descending weight and each is permuted to the block order that is most
/// likely under the running Gaussian of the particles already placed.
/// The covariance starts at the pooled block variance on the diagonal and
/// moves toward the running covariance as particles accumulate.
RelabelResult online_relabel(const ParticleSystem& sys, const Priors& priors);

/// Weighted mean of the particle vectors.
SourceParams mmse_estimate(const ParticleSystem& sys);

}  // namespace wsnloc
