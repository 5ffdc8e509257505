#include "wsnloc/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "wsnloc/errors.hpp"

namespace wsnloc::io {

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

}  // namespace

ScenarioConfig scenario_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
    ScenarioConfig cfg;
    try {
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            cfg.roi_side = get_or(g, "roi_side", get_or(j, "roi_side", 100.0));
            cfg.sensors = ScenarioConfig::grid(g.at("rows").get<int>(), g.at("cols").get<int>(),
                                               cfg.roi_side);
        } else if (j.contains("sensors")) {
            cfg.roi_side = get_or(j, "roi_side", 100.0);
            for (const auto& s : j.at("sensors")) {
                if (s.is_array())
                    cfg.sensors.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
                else
                    cfg.sensors.push_back({s.at("x").get<double>(), s.at("y").get<double>()});
            }
        } else {
            throw ConfigError("scenario needs either 'sensors' or 'grid'");
        }
        cfg.decay_n = get_or(j, "decay_n", 2.0);
        cfg.d0 = get_or(j, "d0", 1.0);
        cfg.sigma2 = get_or(j, "sigma2", 1.0);

        const json q = j.value("quantizer", json::object());
        if (q.contains("thresholds")) {
            cfg.quantizer = Quantizer::from_interior(q.at("thresholds").get<std::vector<double>>());
        } else {
            cfg.quantizer = Quantizer::uniform(get_or(q, "bits", 2), get_or(q, "lambda_min", 0.0),
                                               get_or(q, "lambda_max", 22.0));
        }

        const json c = j.value("channel", json::object());
        const int levels = cfg.quantizer.levels();
        if (c.contains("matrix")) {
            cfg.channel = ChannelMatrix(c.at("matrix").get<std::vector<std::vector<double>>>());
        } else {
            const std::string preset = get_or<std::string>(c, "preset", "identity");
            if (preset == "identity")
                cfg.channel = ChannelMatrix::identity(levels);
            else if (preset == "symmetric")
                cfg.channel = ChannelMatrix::symmetric(levels, get_or(c, "epsilon", 0.0));
            else
                throw ConfigError("unknown channel preset '" + preset + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

json scenario_to_json(const ScenarioConfig& cfg) {
    json sensors = json::array();
    for (const auto& s : cfg.sensors) sensors.push_back({s.x, s.y});
    return json{{"sensors", sensors},
                {"roi_side", cfg.roi_side},
                {"decay_n", cfg.decay_n},
                {"d0", cfg.d0},
                {"sigma2", cfg.sigma2},
                {"quantizer", {{"thresholds", cfg.quantizer.interior()}}},
                {"channel", {{"matrix", cfg.channel.rows()}}}};
}

Priors priors_from_json(const json& scenario, double roi_side) {
    Priors p = default_hyperparams(roi_side);
    if (scenario.contains("prior")) {
        const auto& pj = scenario.at("prior");
        p.power.shape = get_or(pj, "a", p.power.shape);
        p.power.scale = get_or(pj, "b", p.power.scale);
        if (pj.contains("sigma_p")) {
            const double s = pj.at("sigma_p").get<double>();
            p.location.var_x = s * s;
            p.location.var_y = s * s;
        }
    }
    p.validate();
    return p;
}

json priors_to_json(const Priors& p) {
    return json{{"a", p.power.shape},
                {"b", p.power.scale},
                {"mu_p", {p.location.mean.x, p.location.mean.y}},
                {"sigma_p", std::sqrt(p.location.var_x)}};
}

SmcConfig smc_config_from_json(const json& j, const Priors& priors) {
    SmcConfig c;
    c.n_particles = get_or(j, "n_particles", c.n_particles);
    c.cess_frac = get_or(j, "cess_frac", c.cess_frac);
    c.ess_frac = get_or(j, "ess_frac", c.ess_frac);
    c.n_mcmc = get_or(j, "n_mcmc", c.n_mcmc);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.threads = get_or(j, "threads", c.threads);
    c.proposal_cov = SmcConfig::default_proposal_cov(priors, get_or(j, "proposal_std_xy", 2.0),
                                                     get_or(j, "proposal_std_p_frac", 0.1));
    c.validate();
    return c;
}

json smc_config_to_json(const SmcConfig& c) {
    return json{{"n_particles", c.n_particles},
                {"cess_frac", c.cess_frac},
                {"ess_frac", c.ess_frac},
                {"n_mcmc", c.n_mcmc},
                {"proposal_std_xy", std::sqrt(c.proposal_cov(1, 1))},
                {"proposal_std_p", std::sqrt(c.proposal_cov(0, 0))},
                {"seed", c.seed}};
}

SourceParams truth_from_json(const json& j) {
    SourceParams theta;
    try {
        for (const auto& s : j.at("sources"))
            theta.blocks.push_back(
                {s.at("power").get<double>(), s.at("x").get<double>(), s.at("y").get<double>()});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed truth document: ") + e.what());
    }
    theta.validate();
    return theta;
}

json source_params_to_json(const SourceParams& theta) {
    json arr = json::array();
    for (const auto& b : theta.blocks) arr.push_back({{"power", b.power}, {"x", b.x}, {"y", b.y}});
    return json{{"sources", arr}};
}

ObservationVector observations_from_json(const json& j) {
    try {
        return ObservationVector{j.at("z").get<std::vector<int>>()};
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed observation document: ") + e.what());
    }
}

json observations_to_json(const ObservationVector& z) { return json{{"z", z.z}}; }

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

}  // namespace wsnloc::io
