#include <doctest.h>

#include <cmath>
#include <numbers>

#include "wsnloc/errors.hpp"
#include "wsnloc/relabel.hpp"

using namespace wsnloc;

namespace {

// Two well-separated sources; half the particles carry them in swapped order.
ParticleSystem mirrored_pair(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> loc(0.0, 1.0), pw(0.0, 200.0);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    ParticleSystem s;
    std::vector<double> w;
    for (int m = 0; m < n; ++m) {
        Source a{5000 + pw(rng), 30 + loc(rng), 50 + loc(rng)};
        Source b{5000 + pw(rng), 70 + loc(rng), 50 + loc(rng)};
        s.particles.push_back(m % 2 ? SourceParams{{b, a}} : SourceParams{{a, b}});
        w.push_back(u(rng));
        s.loglik.push_back(0.0);
    }
    double tot = 0.0;
    for (double x : w) tot += x;
    for (double x : w) s.log_weights.push_back(std::log(x / tot));
    return s;
}

}  // namespace

TEST_CASE("permute_blocks") {
    const SourceParams t{{{1, 1, 1}, {2, 2, 2}, {3, 3, 3}}};
    const std::vector<int> id{0, 1, 2}, swap01{1, 0, 2}, cycle{1, 2, 0};
    CHECK(permute_blocks(t, id) == t);
    CHECK(permute_blocks(t, swap01) == SourceParams{{{2, 2, 2}, {1, 1, 1}, {3, 3, 3}}});
    // block 0 goes to slot 1, block 1 to slot 2, block 2 to slot 0
    CHECK(permute_blocks(t, cycle) == SourceParams{{{3, 3, 3}, {1, 1, 1}, {2, 2, 2}}});
    const std::vector<int> bad{0, 0, 2}, short_perm{0, 1};
    CHECK_THROWS_AS(permute_blocks(t, bad), ConfigError);
    CHECK_THROWS_AS(permute_blocks(t, short_perm), DimensionMismatch);
}

TEST_CASE("all_permutations") {
    const auto p3 = all_permutations(3);
    CHECK(p3.size() == 6);
    CHECK(p3.front() == BlockPermutation{0, 1, 2});
    CHECK(p3.back() == BlockPermutation{2, 1, 0});
    CHECK(std::is_sorted(p3.begin(), p3.end()));
    CHECK(all_permutations(1).size() == 1);
    CHECK(all_permutations(8).size() == 40320);
    CHECK_THROWS_AS(all_permutations(9), FactorialOverflow);
    CHECK_THROWS_AS(all_permutations(0), ConfigError);
}

TEST_CASE("gaussian_log_cost") {
    const SourceParams t{{{4, 1, -2}}};
    Eigen::VectorXd mu(3);
    mu << 3, 0, 0;
    Eigen::MatrixXd sigma = Eigen::Vector3d(4.0, 1.0, 9.0).asDiagonal();
    // independent coordinates: sum of univariate normal log-densities
    double expected = 0.0;
    const double x[3] = {4, 1, -2}, m[3] = {3, 0, 0}, v[3] = {4, 1, 9};
    for (int i = 0; i < 3; ++i)
        expected += -0.5 * std::log(2 * std::numbers::pi * v[i]) - 0.5 * (x[i] - m[i]) * (x[i] - m[i]) / v[i];
    CHECK(gaussian_log_cost(t, mu, sigma) == doctest::Approx(expected).epsilon(1e-13));

    SUBCASE("correlated 3x3 against the explicit inverse") {
        Eigen::Matrix3d s;
        s << 2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0;
        const Eigen::Vector3d d(1.0, 1.0, -2.0);
        const double q = d.dot(s.inverse() * d);
        const double e = -1.5 * std::log(2 * std::numbers::pi) - 0.5 * std::log(s.determinant()) - 0.5 * q;
        CHECK(gaussian_log_cost(t, mu, Eigen::MatrixXd(s)) == doctest::Approx(e).epsilon(1e-12));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(gaussian_log_cost(t, mu, Eigen::MatrixXd::Zero(3, 3)), SingularCovariance);
        CHECK_THROWS_AS(gaussian_log_cost(t, Eigen::VectorXd::Zero(6), sigma), DimensionMismatch);
    }
    SUBCASE("unit covariance, unit distance") {
        const SourceParams one{{{1, 0, 0}}};
        const double c = gaussian_log_cost(one, Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
        CHECK(c == doctest::Approx(-1.5 * std::log(2 * std::numbers::pi) - 0.5).epsilon(1e-14));
    }
    const Eigen::MatrixXd r = regularize_covariance(Eigen::MatrixXd::Identity(3, 3) * 2.0);
    CHECK(r(0, 0) == doctest::Approx(2.0 + 2e-6).epsilon(1e-14));
    CHECK(r(0, 1) == 0.0);
}

TEST_CASE("running moments") {
    Rng rng(6);
    std::normal_distribution<double> nd(0.0, 3.0);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ws;
    RelabelState st;
    for (int i = 0; i < 40; ++i) {
        Eigen::VectorXd x(3);
        x << nd(rng), nd(rng), nd(rng);
        xs.push_back(x);
        ws.push_back(i == 7 ? 0.0 : u(rng));
        st.add(x, ws.back());
    }
    double wsum = 0.0, wsq = 0.0;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        wsum += ws[i];
        wsq += ws[i] * ws[i];
        mean += ws[i] * xs[i];
    }
    mean /= wsum;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
    for (std::size_t i = 0; i < xs.size(); ++i)
        cov += ws[i] * (xs[i] - mean) * (xs[i] - mean).transpose();
    cov /= wsum;
    CHECK((st.mean - mean).norm() < 1e-12);
    CHECK((st.cov - cov).norm() < 1e-11);
    CHECK(st.effective_count() == doctest::Approx(wsum * wsum / wsq));

    const Eigen::MatrixXd s0 = Eigen::MatrixXd::Identity(3, 3) * 100.0;
    const double n = st.effective_count();
    CHECK((st.shrunk(s0) - (5.0 * s0 + n * cov) / (5.0 + n)).norm() < 1e-10);
    CHECK(RelabelState{}.shrunk(s0) == s0);
}

TEST_CASE("online relabeling") {
    const auto pr = default_hyperparams(100.0);

    SUBCASE("mirrored pair is untangled") {
        const auto sys = mirrored_pair(200, 3);
        const auto r = online_relabel(sys, pr);
        REQUIRE(r.system.size() == 200);
        const double first_x = r.system.particles[0].blocks[0].x;
        for (const auto& p : r.system.particles) {
            CHECK(std::abs(p.blocks[0].x - first_x) < 10.0);
            CHECK(std::abs(p.blocks[1].x - first_x) > 30.0);
        }
        const auto est = mmse_estimate(r.system);
        CHECK(std::abs(std::abs(est.blocks[0].x - est.blocks[1].x) - 40.0) < 1.0);
        // raw estimate collapses to the midpoint
        const auto raw = mmse_estimate(sys);
        CHECK(std::abs(raw.blocks[0].x - 50.0) < 5.0);
        CHECK(std::abs(raw.blocks[1].x - 50.0) < 5.0);
    }
    SUBCASE("two equal-weight swapped particles") {
        ParticleSystem s;
        s.particles = {SourceParams{{{5000, 10, 10}, {5000, 90, 90}}},
                       SourceParams{{{5000, 90, 90}, {5000, 10, 10}}}};
        s.log_weights = {std::log(0.5), std::log(0.5)};
        s.loglik = {0.0, 0.0};
        const auto est = mmse_estimate(online_relabel(s, pr).system);
        CHECK(std::hypot(est.blocks[0].x - 10.0, est.blocks[0].y - 10.0) < 1e-9);
        CHECK(std::hypot(est.blocks[1].x - 90.0, est.blocks[1].y - 90.0) < 1e-9);
    }
    SUBCASE("visiting order and bookkeeping") {
        const auto sys = mirrored_pair(50, 4);
        const auto r = online_relabel(sys, pr);
        for (std::size_t i = 1; i < r.order.size(); ++i)
            CHECK(sys.log_weights[r.order[i - 1]] >= sys.log_weights[r.order[i]]);
        for (std::size_t i = 0; i < r.order.size(); ++i) {
            CHECK(r.system.log_weights[i] == sys.log_weights[r.order[i]]);
            CHECK(r.system.particles[i] == permute_blocks(sys.particles[r.order[i]], r.perms[i]));
        }
        CHECK(r.perms[0] == BlockPermutation{0, 1});
    }
    SUBCASE("idempotent") {
        const auto once = online_relabel(mirrored_pair(120, 5), pr);
        const auto twice = online_relabel(once.system, pr);
        CHECK(twice.system.particles == once.system.particles);
        for (const auto& p : twice.perms) CHECK(p == BlockPermutation{0, 1});
    }
    SUBCASE("input block order does not matter beyond a global relabel") {
        auto sys = mirrored_pair(80, 6);
        const auto a = online_relabel(sys, pr);
        Rng rng(1);
        for (auto& p : sys.particles)
            if (rng() % 2) std::swap(p.blocks[0], p.blocks[1]);
        const auto b = online_relabel(sys, pr);
        const auto ea = mmse_estimate(a.system);
        const auto eb = mmse_estimate(b.system);
        const bool same = std::abs(ea.blocks[0].x - eb.blocks[0].x) < 1e-9;
        const bool swapped = std::abs(ea.blocks[0].x - eb.blocks[1].x) < 1e-9;
        CHECK((same || swapped));
    }
    SUBCASE("k = 1 is the identity up to ordering") {
        ParticleSystem s;
        s.particles = {SourceParams{{{1, 2, 3}}}, SourceParams{{{4, 5, 6}}}};
        s.log_weights = {std::log(0.3), std::log(0.7)};
        s.loglik = {0.0, 0.0};
        const auto r = online_relabel(s, pr);
        CHECK(r.order == std::vector<std::size_t>{1, 0});
        CHECK(r.system.particles[0] == s.particles[1]);
        CHECK(r.system.particles[1] == s.particles[0]);
        CHECK(mmse_estimate(r.system) == mmse_estimate(s));
    }
    SUBCASE("mixed dimensions are rejected") {
        ParticleSystem s;
        s.particles = {SourceParams{{{1, 2, 3}}}, SourceParams{{{1, 2, 3}, {4, 5, 6}}}};
        s.log_weights = {std::log(0.5), std::log(0.5)};
        s.loglik = {0.0, 0.0};
        CHECK_THROWS_AS(online_relabel(s, pr), DimensionMismatch);
    }
}

TEST_CASE("mmse_estimate") {
    ParticleSystem s;
    s.particles = {SourceParams{{{1000, 10, 20}}}, SourceParams{{{3000, 30, 40}}}};
    s.log_weights = {std::log(0.25), std::log(0.75)};
    const auto e = mmse_estimate(s);
    CHECK(e.blocks[0].power == doctest::Approx(2500.0));
    CHECK(e.blocks[0].x == doctest::Approx(25.0));
    CHECK(e.blocks[0].y == doctest::Approx(35.0));
    CHECK_THROWS_AS(mmse_estimate(ParticleSystem{}), ConfigError);
}
