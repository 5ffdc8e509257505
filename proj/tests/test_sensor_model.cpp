#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "wsnloc/errors.hpp"
#include "wsnloc/sensor_model.hpp"

using namespace wsnloc;

namespace {

ScenarioConfig single_sensor(Point c, std::vector<double> interior) {
    ScenarioConfig cfg;
    cfg.sensors = {c};
    cfg.quantizer = Quantizer::from_interior(std::move(interior));
    cfg.channel = ChannelMatrix::identity(cfg.quantizer.levels());
    return cfg;
}

ScenarioConfig grid_cfg(int side, int bits = 2) {
    ScenarioConfig cfg;
    cfg.sensors = ScenarioConfig::grid(side, side, 100.0);
    cfg.quantizer = Quantizer::uniform(bits, 0.0, 22.0);
    cfg.channel = ChannelMatrix::identity(cfg.quantizer.levels());
    return cfg;
}

SourceParams random_theta(int k, Rng& rng) {
    std::uniform_real_distribution<double> pos(2.0, 98.0), pw(1000.0, 9000.0);
    SourceParams t;
    for (int i = 0; i < k; ++i) t.blocks.push_back({pw(rng), pos(rng), pos(rng)});
    return t;
}

}  // namespace

TEST_CASE("distance") {
    CHECK(distance({5, 5}, {5, 5}) == 0.0);
    CHECK(distance({0, 0}, {3, 4}) == doctest::Approx(5.0));
    CHECK(distance({50, 40}, {50, 50}) == doctest::Approx(10.0));
    CHECK(distance({1, 2}, {7, -3}) == distance({7, -3}, {1, 2}));
}

TEST_CASE("amplitude") {
    auto cfg = single_sensor({50, 40}, {0.0});
    SourceParams t{{{100.0, 50.0, 50.0}}};
    CHECK(amplitude(0, t, cfg) == doctest::Approx(1.0).epsilon(1e-14));

    SUBCASE("unit attenuation at d0") {
        SourceParams u{{{400.0, 51.0, 40.0}}};
        CHECK(amplitude(0, u, cfg) == doctest::Approx(20.0).epsilon(1e-14));
    }
    SUBCASE("superposition") {
        SourceParams two{{{100.0, 50.0, 50.0}, {100.0, 50.0, 50.0}}};
        CHECK(amplitude(0, two, cfg) == doctest::Approx(2.0 * amplitude(0, t, cfg)));
    }
    SUBCASE("exact coincidence throws") {
        SourceParams on{{{100.0, 50.0, 40.0}}};
        CHECK_THROWS_AS(amplitude(0, on, cfg), SingularDistance);
    }
    SUBCASE("distances below d_min are clamped") {
        SourceParams near{{{100.0, 50.0, 40.0 + 1e-5}}};
        CHECK(amplitude(0, near, cfg) == doctest::Approx(10.0 * std::pow(1.0 / kMinDistance, 1.0)));
    }
    SUBCASE("matches the direct formula for other decay exponents") {
        cfg.decay_n = 3.3;
        cfg.d0 = 2.0;
        SourceParams s{{{700.0, 31.0, 12.0}, {300.0, 80.0, 77.0}}};
        CHECK(amplitude(0, s, cfg) ==
              doctest::Approx(oracle::amplitude(cfg.sensors[0], s.blocks, 2.0, 3.3)).epsilon(1e-13));
    }
}

TEST_CASE("quantize") {
    const auto q = Quantizer::from_interior({0.0, 11.0, 22.0});
    CHECK(q.levels() == 4);
    CHECK(q.bits() == 2);
    CHECK(quantize(-3.0, q) == 0);
    CHECK(quantize(25.0, q) == 3);
    CHECK(quantize(11.0, q) == 2);
    CHECK(quantize(0.0, q) == 1);

    SUBCASE("round trip on interior thresholds") {
        const auto q8 = Quantizer::uniform(3, 0.0, 22.0);
        for (int l = 1; l < q8.levels(); ++l) {
            CHECK(quantize(q8.threshold(l), q8) == l);
            CHECK(quantize(q8.threshold(l) + 1e-9, q8) == l);
            CHECK(quantize(q8.threshold(l) - 1e-9, q8) == l - 1);
        }
    }
    SUBCASE("uniform layout") {
        const auto t = Quantizer::uniform(2, 0.0, 22.0).interior();
        REQUIRE(t.size() == 3);
        CHECK(t[0] == 0.0);
        CHECK(t[1] == doctest::Approx(11.0));
        CHECK(t[2] == 22.0);
        CHECK(Quantizer::uniform(1, 0.0, 22.0).interior() == std::vector<double>{11.0});
        CHECK(Quantizer::uniform(3, 0.0, 22.0).interior().size() == 7);
    }
    SUBCASE("invalid quantizers") {
        CHECK_THROWS_AS(Quantizer::from_interior({1.0, 1.0, 2.0}), ConfigError);
        CHECK_THROWS_AS(Quantizer::from_interior({1.0, 2.0}), ConfigError);
        CHECK_THROWS_AS(Quantizer::from_interior({}), ConfigError);
        CHECK_THROWS_AS(Quantizer::uniform(0, 0.0, 1.0), ConfigError);
    }
}

TEST_CASE("q_function") {
    CHECK(q_function(0.0) == 0.5);
    CHECK(q_function(INFINITY) == 0.0);
    CHECK(q_function(-INFINITY) == 1.0);
    CHECK(std::abs(q_function(1.959964) - 0.025) < 1e-6);
    CHECK(std::abs(q_function(1.959964) - oracle::normal_tail(1.959964)) < 1e-10);
    for (double x : {-5.0, -1.3, -0.2, 0.7, 2.5, 6.0, 9.0})
        CHECK(std::abs(q_function(x) - oracle::normal_tail(x)) < 1e-12);
    double prev = 1.0;
    for (double x = -8.0; x <= 8.0; x += 0.25) {
        CHECK(q_function(x) <= prev);
        prev = q_function(x);
    }

    SUBCASE("log domain stays finite in the far tail") {
        CHECK(log_q_function(0.0) == doctest::Approx(std::log(0.5)));
        CHECK(log_q_function(5.0) == doctest::Approx(std::log(q_function(5.0))).epsilon(1e-12));
        for (double x : {29.0, 31.0, 50.0, 200.0}) {
            // Mills ratio bounds: phi(x) x/(1+x^2) < Q(x) < phi(x)/x
            const double lphi = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
            const double lq = log_q_function(x);
            CHECK(std::isfinite(lq));
            CHECK(lq < lphi - std::log(x));
            CHECK(lq > lphi + std::log(x / (1.0 + x * x)));
        }
        CHECK(log_q_function(-40.0) == doctest::Approx(0.0));
    }
    SUBCASE("log difference") {
        CHECK(std::exp(log_q_difference(0.0, 1.0)) ==
              doctest::Approx(q_function(0.0) - q_function(1.0)).epsilon(1e-13));
        CHECK(std::exp(log_q_difference(-1.0, 2.0)) ==
              doctest::Approx(q_function(-1.0) - q_function(2.0)).epsilon(1e-13));
        CHECK(std::isfinite(log_q_difference(40.0, 41.0)));
        CHECK(std::isfinite(log_q_difference(-41.0, -40.0)));
    }
}

TEST_CASE("level_probs") {
    auto cfg = single_sensor({50, 40}, {0.0});
    auto p = level_probs_at(0.0, cfg);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
    p = level_probs_at(1e6, cfg);
    CHECK(p[0] == doctest::Approx(0.0));
    CHECK(p[1] == doctest::Approx(1.0));

    auto cfg4 = single_sensor({50, 40}, {0.0, 11.0, 22.0});
    const auto p4 = level_probs_at(11.0, cfg4);
    CHECK(p4[1] == doctest::Approx(q_function(-11.0) - q_function(0.0)).epsilon(1e-14));
    CHECK(p4[1] == doctest::Approx(0.5));
    CHECK(p4[2] == doctest::Approx(0.5));
    CHECK(p4[0] == doctest::Approx(q_function(11.0)));

    SUBCASE("normalization on random configurations") {
        Rng rng(11);
        auto g = grid_cfg(5, 3);
        for (int r = 0; r < 50; ++r) {
            const auto t = random_theta(1 + r % 4, rng);
            for (std::size_t i = 0; i < g.n_sensors(); ++i) {
                const auto lp = level_probs(i, t, g);
                CHECK(std::abs(std::accumulate(lp.begin(), lp.end(), 0.0) - 1.0) < 1e-10);
                for (double v : lp) CHECK(v >= 0.0);
            }
        }
    }
    SUBCASE("matches the erfc oracle") {
        auto g = grid_cfg(3, 3);
        g.sigma2 = 2.5;
        SourceParams t{{{4000.0, 30.0, 70.0}, {6000.0, 60.0, 20.0}}};
        const auto t_full = g.quantizer.thresholds();
        const std::vector<double> thr(t_full.begin(), t_full.end());
        for (std::size_t i = 0; i < g.n_sensors(); ++i) {
            const double a = oracle::amplitude(g.sensors[i], t.blocks, 1.0, 2.0);
            const auto lp = level_probs(i, t, g);
            for (int l = 0; l < g.levels(); ++l)
                CHECK(lp[static_cast<std::size_t>(l)] ==
                      doctest::Approx(oracle::level_prob(a, l, thr, std::sqrt(2.5))).epsilon(1e-10));
        }
    }
}

TEST_CASE("channel and obs_prob") {
    SUBCASE("identity channel equals level_probs") {
        auto g = grid_cfg(4);
        SourceParams t{{{5000.0, 40.0, 45.0}}};
        for (std::size_t i = 0; i < g.n_sensors(); ++i) {
            const auto lp = level_probs(i, t, g);
            for (int j = 0; j < g.levels(); ++j)
                CHECK(obs_prob(i, t, g, j) == lp[static_cast<std::size_t>(j)]);
        }
    }
    SUBCASE("binary symmetric channel on a certain bit") {
        auto cfg = single_sensor({0, 0}, {1000.0});
        cfg.channel = ChannelMatrix::symmetric(2, 0.1);
        SourceParams t{{{1.0, 1.0, 0.0}}};
        CHECK(obs_prob(0, t, cfg, 0) == doctest::Approx(0.9));
        CHECK(obs_prob(0, t, cfg, 1) == doctest::Approx(0.1));
    }
    SUBCASE("binary symmetric channel on a fair bit") {
        auto cfg = single_sensor({0, 0}, {0.0});
        for (double eps : {0.0, 0.05, 0.3, 0.5}) {
            cfg.channel = ChannelMatrix::symmetric(2, eps);
            const auto p = obs_probs_at(0.0, cfg);
            CHECK(p[0] == doctest::Approx(0.5));
            CHECK(p[1] == doctest::Approx(0.5));
        }
    }
    SUBCASE("obs probabilities sum to one") {
        auto g = grid_cfg(4, 3);
        g.channel = ChannelMatrix::symmetric(8, 0.2);
        Rng rng(5);
        for (int r = 0; r < 20; ++r) {
            const auto t = random_theta(2, rng);
            for (std::size_t i = 0; i < g.n_sensors(); ++i) {
                const auto p = obs_probs(i, t, g);
                CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-10);
            }
        }
    }
    SUBCASE("symmetric preset layout and validation") {
        const auto c = ChannelMatrix::symmetric(4, 0.3);
        CHECK(c(2, 2) == doctest::Approx(0.7));
        CHECK(c(0, 3) == doctest::Approx(0.1));
        CHECK(ChannelMatrix::identity(4).is_identity());
        CHECK_THROWS_AS(ChannelMatrix({{0.5, 0.5}, {0.6, 0.5}}), ConfigError);
        CHECK_THROWS_AS(ChannelMatrix({{1.2, 0.0}, {-0.2, 1.0}}), ConfigError);
        CHECK_THROWS_AS(ChannelMatrix::symmetric(2, 1.5), ConfigError);
    }
}

TEST_CASE("log_likelihood") {
    SUBCASE("single sensor at the threshold") {
        auto cfg = single_sensor({0, 0}, {0.0});
        const double amps[] = {0.0};
        CHECK(log_likelihood_from_amplitudes(ObservationVector{{0}}, amps, cfg) ==
              doctest::Approx(std::log(0.5)));
    }
    SUBCASE("independent product") {
        ScenarioConfig cfg;
        cfg.sensors = {{40, 50}, {60, 50}, {50, 40}, {50, 60}};
        cfg.quantizer = Quantizer::from_interior({0.0, 11.0, 22.0});
        cfg.channel = ChannelMatrix::identity(4);
        SourceParams t{{{6400.0, 50.0, 50.0}}};
        const ObservationVector z{{1, 1, 1, 1}};
        const double p = obs_prob(0, t, cfg, 1);
        CHECK(log_likelihood(z, t, cfg) == doctest::Approx(4.0 * std::log(p)).epsilon(1e-13));
    }
    SUBCASE("matches the direct product on a grid") {
        auto g = grid_cfg(5);
        SourceParams t{{{5000.0, 33.0, 61.0}}};
        Rng rng(3);
        const auto z = simulate(t, g, rng);
        CHECK(log_likelihood(z, t, g) ==
              doctest::Approx(std::log(oracle::likelihood_1src(z.z, t.blocks[0], g))).epsilon(1e-10));
    }
    SUBCASE("permutation invariance") {
        auto g = grid_cfg(10);
        Rng rng(17);
        for (int r = 0; r < 30; ++r) {
            auto t = random_theta(4, rng);
            const auto z = simulate(t, g, rng);
            const double base = log_likelihood(z, t, g);
            std::vector<std::size_t> idx{0, 1, 2, 3};
            while (std::next_permutation(idx.begin(), idx.end())) {
                SourceParams p;
                for (auto i : idx) p.blocks.push_back(t.blocks[i]);
                CHECK(std::abs(log_likelihood(z, p, g) - base) <= 1e-12 * std::abs(base));
            }
        }
    }
    SUBCASE("non-positive and impossible observations") {
        auto cfg = single_sensor({0, 0}, {0.0});
        cfg.channel = ChannelMatrix({{1.0, 1.0}, {0.0, 0.0}});
        SourceParams t{{{100.0, 5.0, 5.0}}};
        CHECK(log_likelihood(ObservationVector{{1}}, t, cfg) == -INFINITY);
        CHECK(log_likelihood(ObservationVector{{0}}, t, cfg) == doctest::Approx(0.0));
    }
    SUBCASE("far tail stays finite") {
        auto cfg = single_sensor({0, 0}, {0.0, 11.0, 22.0});
        SourceParams t{{{1e6, 1.0, 0.0}}};  // amplitude 1000, far above every threshold
        const double ll = log_likelihood(ObservationVector{{0}}, t, cfg);
        CHECK(std::isfinite(ll));
        CHECK(ll < -1e5);
    }
    SUBCASE("observation validation") {
        auto g = grid_cfg(2);
        const ObservationVector short_z{{0, 1, 2}}, bad_level{{0, 1, 2, 4}}, ok{{0, 1, 2, 3}};
        CHECK_THROWS_AS(short_z.validate(g), ConfigError);
        CHECK_THROWS_AS(bad_level.validate(g), ConfigError);
        CHECK_NOTHROW(ok.validate(g));
    }
}

TEST_CASE("simulate") {
    SUBCASE("noise-free limit") {
        auto g = grid_cfg(10);
        g.sigma2 = 1e-16;
        SourceParams t{{{5000.0, 37.3, 58.1}, {4000.0, 71.2, 22.9}}};
        Rng rng(1);
        const auto z = simulate(t, g, rng);
        const auto a = amplitudes(t, g);
        for (std::size_t i = 0; i < g.n_sensors(); ++i) {
            // skip amplitudes within noise reach of a threshold
            bool near = false;
            for (double th : g.quantizer.interior()) near |= std::abs(a[i] - th) < 1e-6;
            if (!near) CHECK(z.z[i] == quantize(a[i], g.quantizer));
        }
    }
    SUBCASE("reproducible") {
        auto g = grid_cfg(10);
        SourceParams t{{{5000.0, 37.3, 58.1}}};
        Rng r1(99), r2(99);
        CHECK(simulate(t, g, r1) == simulate(t, g, r2));
    }
    SUBCASE("frequencies match obs_prob") {
        ScenarioConfig cfg;
        cfg.sensors = {{50, 40}};
        cfg.quantizer = Quantizer::uniform(2, 0.0, 2.0);
        cfg.channel = ChannelMatrix::symmetric(4, 0.15);
        SourceParams t{{{100.0, 50.0, 50.0}}};  // amplitude 1, straddles thresholds
        const int n = 100000;
        std::vector<int> counts(4, 0);
        Rng rng(2024);
        for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(simulate(t, cfg, rng).z[0])];
        for (int j = 0; j < 4; ++j) {
            const double p = obs_prob(0, t, cfg, j);
            const double se = std::sqrt(p * (1 - p) / n);
            CHECK(std::abs(counts[static_cast<std::size_t>(j)] / double(n) - p) < 3 * se);
        }
    }
    SUBCASE("fine quantizer frequencies follow the Gaussian CDF") {
        ScenarioConfig cfg;
        cfg.sensors = {{50, 40}};
        cfg.sigma2 = 4.0;
        cfg.quantizer = Quantizer::uniform(4, -4.0, 6.0);
        cfg.channel = ChannelMatrix::identity(16);
        SourceParams t{{{100.0, 50.0, 50.0}}};
        const int n = 100000;
        std::vector<int> counts(16, 0);
        Rng rng(7);
        for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(simulate(t, cfg, rng).z[0])];
        const auto tf = cfg.quantizer.thresholds();
        const std::vector<double> thr(tf.begin(), tf.end());
        for (int l = 0; l < 16; ++l) {
            const double p = oracle::level_prob(1.0, l, thr, 2.0);
            const double se = std::sqrt(p * (1 - p) / n);
            CHECK(std::abs(counts[static_cast<std::size_t>(l)] / double(n) - p) < 3 * se + 1e-12);
        }
    }
}

TEST_CASE("scenario validation and grid") {
    const auto g = ScenarioConfig::grid(10, 10, 100.0);
    REQUIRE(g.size() == 100);
    CHECK(g.front().x == doctest::Approx(5.0));
    CHECK(g.back().y == doctest::Approx(95.0));

    ScenarioConfig cfg;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);  // no sensors
    cfg.sensors = {{120, 5}};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.sensors = {{20, 5}};
    CHECK_NOTHROW(cfg.validate());
    cfg.sigma2 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.sigma2 = 1.0;
    cfg.channel = ChannelMatrix::identity(2);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);  // channel and quantizer disagree
}
