#pragma once

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "softhjb/nets.hpp"
#include "softhjb/problem.hpp"
#include "softhjb/rollout.hpp"
#include "softhjb/soft_pi.hpp"

namespace softhjb {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_keys(const json& j, const std::string& where,
                         const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline Mat parse_matrix(const json& j, const std::string& where, int rows, int cols) {
    auto flat = j.get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != rows * cols)
        throw ConfigError(where + ": expected " + std::to_string(rows * cols) + " entries");
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int k = 0; k < cols; ++k) m(i, k) = flat[i * cols + k];  // row-major
    return m;
}

inline json matrix_json(const Mat& m) {
    std::vector<double> flat;
    flat.reserve(m.size());
    for (int i = 0; i < m.rows(); ++i)
        for (int k = 0; k < m.cols(); ++k) flat.push_back(m(i, k));
    return json(flat);
}

}  // namespace detail

// Fully resolved run configuration; defaults filled in at parse time so the
// serialized snapshot pins every hyperparameter.
struct RunConfig {
    std::string kind = "lqr";  // lqr | pendulum | cartpole
    double rho = 1.0;
    double lambda = 0.1;

    SpatialDomain domain;
    double control_bound = 10.0;

    // LQR specifics (explicit matrices or a random stable system from a seed)
    LqrSpec lqr;
    bool lqr_explicit = false;
    int lqr_d = 1, lqr_m = 1;
    std::uint64_t lqr_seed = 0;
    double sigma_scale = 0.1;

    PendulumParams pendulum;
    CartpoleParams cartpole;

    PinnSpiConfig pi;
    SdeConfig eval;
    bool eval_enabled = false;

    ControlProblem build_problem() const {
        ControlProblem pb;
        if (kind == "lqr") {
            LqrSpec spec = lqr_explicit ? lqr : make_random_stable_lqr(lqr_d, lqr_m, lqr_seed);
            spec.sigma_scale = sigma_scale;
            spec.u_bound = control_bound;
            pb = make_lqr_problem(spec, rho, lambda, domain);
        } else if (kind == "pendulum") {
            pb = make_pendulum_problem(pendulum, rho, lambda, domain);
        } else if (kind == "cartpole") {
            pb = make_cartpole_problem(cartpole, rho, lambda, domain);
        } else {
            throw ConfigError("problem.kind must be lqr, pendulum, or cartpole");
        }
        return domain.cutoff_width > 0.0 ? apply_cutoff(pb) : pb;
    }

    LqrSpec resolved_lqr_spec() const {
        LqrSpec spec = lqr_explicit ? lqr : make_random_stable_lqr(lqr_d, lqr_m, lqr_seed);
        spec.sigma_scale = sigma_scale;
        spec.u_bound = control_bound;
        return spec;
    }

    json to_json() const;
};

inline RunConfig parse_config(const json& j) {
    detail::require_keys(j, "config", {"problem", "quad", "colloc", "opt", "pi", "eval"});
    RunConfig cfg;

    const json& p = j.at("problem");
    detail::require_keys(p, "problem", {"kind", "rho", "lambda", "domain", "control", "lqr",
                                        "pendulum", "cartpole"});
    cfg.kind = p.at("kind").get<std::string>();
    if (cfg.kind != "lqr" && cfg.kind != "pendulum" && cfg.kind != "cartpole")
        throw ConfigError("problem.kind must be lqr, pendulum, or cartpole");
    cfg.rho = detail::get_or(p, "rho", 1.0);
    cfg.lambda = detail::get_or(p, "lambda", 0.1);

    if (p.contains("domain")) {
        const json& d = p.at("domain");
        detail::require_keys(d, "problem.domain", {"R", "shape", "cutoff_width"});
        cfg.domain.radius = detail::get_or(d, "R", 1.0);
        std::string shape = detail::get_or<std::string>(d, "shape", "ball");
        if (shape == "ball")
            cfg.domain.kind = SpatialDomain::Kind::Ball;
        else if (shape == "box")
            cfg.domain.kind = SpatialDomain::Kind::Box;
        else
            throw ConfigError("problem.domain.shape must be ball or box");
        cfg.domain.cutoff_width = detail::get_or(d, "cutoff_width", 0.0);
        cfg.domain.validate();
    }
    if (p.contains("control")) {
        detail::require_keys(p.at("control"), "problem.control", {"bound"});
        cfg.control_bound = p.at("control").at("bound").get<double>();
    }

    if (cfg.kind == "lqr" && p.contains("lqr")) {
        const json& l = p.at("lqr");
        detail::require_keys(l, "problem.lqr", {"d", "m", "seed", "A", "B", "Q", "R", "sigma"});
        cfg.lqr_d = detail::get_or(l, "d", 1);
        cfg.lqr_m = detail::get_or(l, "m", 1);
        cfg.lqr_seed = detail::get_or<std::uint64_t>(l, "seed", 0);
        cfg.sigma_scale = detail::get_or(l, "sigma", 0.1);
        if (l.contains("A")) {
            if (!l.contains("B") || !l.contains("Q") || !l.contains("R"))
                throw ConfigError("problem.lqr: explicit systems need A, B, Q, and R");
            cfg.lqr_explicit = true;
            cfg.lqr.A = detail::parse_matrix(l.at("A"), "problem.lqr.A", cfg.lqr_d, cfg.lqr_d);
            cfg.lqr.B = detail::parse_matrix(l.at("B"), "problem.lqr.B", cfg.lqr_d, cfg.lqr_m);
            cfg.lqr.Q = detail::parse_matrix(l.at("Q"), "problem.lqr.Q", cfg.lqr_d, cfg.lqr_d);
            cfg.lqr.R_cost =
                detail::parse_matrix(l.at("R"), "problem.lqr.R", cfg.lqr_m, cfg.lqr_m);
        }
    }
    if (cfg.kind == "pendulum" && p.contains("pendulum")) {
        const json& q = p.at("pendulum");
        detail::require_keys(q, "problem.pendulum",
                             {"mass", "length", "gravity", "q_angle", "q_velocity", "c_torque",
                              "sigma"});
        cfg.pendulum.mass = detail::get_or(q, "mass", cfg.pendulum.mass);
        cfg.pendulum.length = detail::get_or(q, "length", cfg.pendulum.length);
        cfg.pendulum.gravity = detail::get_or(q, "gravity", cfg.pendulum.gravity);
        cfg.pendulum.q_angle = detail::get_or(q, "q_angle", cfg.pendulum.q_angle);
        cfg.pendulum.q_velocity = detail::get_or(q, "q_velocity", cfg.pendulum.q_velocity);
        cfg.pendulum.c_torque = detail::get_or(q, "c_torque", cfg.pendulum.c_torque);
        cfg.pendulum.sigma_scale = detail::get_or(q, "sigma", cfg.pendulum.sigma_scale);
        cfg.pendulum.torque_bound = cfg.control_bound;
    }
    if (cfg.kind == "cartpole" && p.contains("cartpole")) {
        const json& q = p.at("cartpole");
        detail::require_keys(q, "problem.cartpole",
                             {"cart_mass", "pole_mass", "pole_half_length", "gravity",
                              "q_position", "q_angle", "q_velocity", "c_force", "sigma"});
        cfg.cartpole.cart_mass = detail::get_or(q, "cart_mass", cfg.cartpole.cart_mass);
        cfg.cartpole.pole_mass = detail::get_or(q, "pole_mass", cfg.cartpole.pole_mass);
        cfg.cartpole.pole_half_length =
            detail::get_or(q, "pole_half_length", cfg.cartpole.pole_half_length);
        cfg.cartpole.gravity = detail::get_or(q, "gravity", cfg.cartpole.gravity);
        cfg.cartpole.q_position = detail::get_or(q, "q_position", cfg.cartpole.q_position);
        cfg.cartpole.q_angle = detail::get_or(q, "q_angle", cfg.cartpole.q_angle);
        cfg.cartpole.q_velocity = detail::get_or(q, "q_velocity", cfg.cartpole.q_velocity);
        cfg.cartpole.c_force = detail::get_or(q, "c_force", cfg.cartpole.c_force);
        cfg.cartpole.sigma_scale = detail::get_or(q, "sigma", cfg.cartpole.sigma_scale);
        cfg.cartpole.force_bound = cfg.control_bound;
    }
    if (cfg.kind == "pendulum") cfg.pendulum.torque_bound = cfg.control_bound;
    if (cfg.kind == "cartpole") cfg.cartpole.force_bound = cfg.control_bound;

    if (j.contains("quad")) {
        detail::require_keys(j.at("quad"), "quad", {"per_dim"});
        cfg.pi.quad_per_dim = detail::get_or(j.at("quad"), "per_dim", cfg.pi.quad_per_dim);
    }
    if (j.contains("colloc")) {
        const json& c = j.at("colloc");
        detail::require_keys(c, "colloc", {"N", "seed", "resample"});
        cfg.pi.colloc_n = detail::get_or(c, "N", cfg.pi.colloc_n);
        cfg.pi.seed = detail::get_or<std::uint64_t>(c, "seed", cfg.pi.seed);
        cfg.pi.resample_colloc = detail::get_or(c, "resample", cfg.pi.resample_colloc);
    }
    if (j.contains("opt")) {
        const json& o = j.at("opt");
        detail::require_keys(o, "opt",
                             {"lr_value", "lr_policy", "epochs_value", "epochs_policy", "batch"});
        cfg.pi.lr_value = detail::get_or(o, "lr_value", cfg.pi.lr_value);
        cfg.pi.lr_policy = detail::get_or(o, "lr_policy", cfg.pi.lr_policy);
        cfg.pi.epochs_value = detail::get_or(o, "epochs_value", cfg.pi.epochs_value);
        cfg.pi.epochs_policy = detail::get_or(o, "epochs_policy", cfg.pi.epochs_policy);
    }
    if (j.contains("pi")) {
        const json& pj = j.at("pi");
        detail::require_keys(pj, "pi",
                             {"max_iters", "epsilon", "value_hidden", "policy_hidden",
                              "quadratic_init", "quadratic_baseline", "warmup_epochs"});
        cfg.pi.max_iters = detail::get_or(pj, "max_iters", cfg.pi.max_iters);
        cfg.pi.epsilon = detail::get_or(pj, "epsilon", cfg.pi.epsilon);
        cfg.pi.value_hidden = detail::get_or(pj, "value_hidden", cfg.pi.value_hidden);
        cfg.pi.policy_hidden = detail::get_or(pj, "policy_hidden", cfg.pi.policy_hidden);
        cfg.pi.quadratic_init = detail::get_or(pj, "quadratic_init", cfg.pi.quadratic_init);
        cfg.pi.quadratic_baseline =
            detail::get_or(pj, "quadratic_baseline", cfg.pi.quadratic_baseline);
        if (cfg.pi.quadratic_baseline && !cfg.pi.quadratic_init)
            throw ConfigError("pi.quadratic_baseline requires pi.quadratic_init");
        cfg.pi.warmup_epochs = detail::get_or(pj, "warmup_epochs", cfg.pi.warmup_epochs);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        detail::require_keys(e, "eval", {"enabled", "dt", "T", "paths", "sample_control"});
        cfg.eval_enabled = detail::get_or(e, "enabled", true);
        cfg.eval.dt = detail::get_or(e, "dt", cfg.eval.dt);
        cfg.eval.horizon = detail::get_or(e, "T", cfg.eval.horizon);
        cfg.eval.paths = detail::get_or(e, "paths", cfg.eval.paths);
        cfg.eval.sample_control = detail::get_or(e, "sample_control", cfg.eval.sample_control);
    }
    return cfg;
}

inline json RunConfig::to_json() const {
    json p;
    p["kind"] = kind;
    p["rho"] = rho;
    p["lambda"] = lambda;
    p["domain"] = {{"R", domain.radius},
                   {"shape", domain.kind == SpatialDomain::Kind::Ball ? "ball" : "box"},
                   {"cutoff_width", domain.cutoff_width}};
    p["control"] = {{"bound", control_bound}};
    if (kind == "lqr") {
        json l;
        l["d"] = lqr_d;
        l["m"] = lqr_m;
        l["seed"] = lqr_seed;
        l["sigma"] = sigma_scale;
        if (lqr_explicit) {
            l["A"] = detail::matrix_json(lqr.A);
            l["B"] = detail::matrix_json(lqr.B);
            l["Q"] = detail::matrix_json(lqr.Q);
            l["R"] = detail::matrix_json(lqr.R_cost);
        }
        p["lqr"] = l;
    } else if (kind == "pendulum") {
        p["pendulum"] = {{"mass", pendulum.mass},          {"length", pendulum.length},
                         {"gravity", pendulum.gravity},    {"q_angle", pendulum.q_angle},
                         {"q_velocity", pendulum.q_velocity}, {"c_torque", pendulum.c_torque},
                         {"sigma", pendulum.sigma_scale}};
    } else {
        p["cartpole"] = {{"cart_mass", cartpole.cart_mass},
                         {"pole_mass", cartpole.pole_mass},
                         {"pole_half_length", cartpole.pole_half_length},
                         {"gravity", cartpole.gravity},
                         {"q_position", cartpole.q_position},
                         {"q_angle", cartpole.q_angle},
                         {"q_velocity", cartpole.q_velocity},
                         {"c_force", cartpole.c_force},
                         {"sigma", cartpole.sigma_scale}};
    }
    json out;
    out["problem"] = p;
    out["quad"] = {{"per_dim", pi.quad_per_dim}};
    out["colloc"] = {{"N", pi.colloc_n}, {"seed", pi.seed}, {"resample", pi.resample_colloc}};
    out["opt"] = {{"lr_value", pi.lr_value},
                  {"lr_policy", pi.lr_policy},
                  {"epochs_value", pi.epochs_value},
                  {"epochs_policy", pi.epochs_policy}};
    out["pi"] = {{"max_iters", pi.max_iters},
                 {"epsilon", pi.epsilon},
                 {"value_hidden", pi.value_hidden},
                 {"policy_hidden", pi.policy_hidden},
                 {"quadratic_init", pi.quadratic_init},
                 {"quadratic_baseline", pi.quadratic_baseline},
                 {"warmup_epochs", pi.warmup_epochs}};
    out["eval"] = {{"enabled", eval_enabled},
                   {"dt", eval.dt},
                   {"T", eval.horizon},
                   {"paths", eval.paths},
                   {"sample_control", eval.sample_control}};
    return out;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return j;
}

// ---- checkpoints ----------------------------------------------------------
// JSON snapshot of a network; nlohmann serializes doubles with max_digits10,
// so reload is bitwise.

inline json value_checkpoint(const Mlp& net, std::uint64_t seed) {
    json j;
    j["kind"] = "value";
    j["widths"] = net.widths;
    j["seed"] = seed;
    j["params"] = std::vector<double>(net.params.data(), net.params.data() + net.n_params());
    return j;
}

inline json policy_checkpoint(const PolicyNet& pnet, std::uint64_t seed) {
    json j;
    j["kind"] = "policy";
    j["widths"] = pnet.net.widths;
    j["grid_hash"] = pnet.grid_id;
    j["seed"] = seed;
    j["params"] = std::vector<double>(pnet.net.params.data(),
                                      pnet.net.params.data() + pnet.net.n_params());
    return j;
}

inline Mlp load_value_checkpoint(const json& j) {
    if (j.at("kind").get<std::string>() != "value")
        throw ConfigError("checkpoint: expected kind 'value'");
    Mlp net;
    net.widths = j.at("widths").get<std::vector<int>>();
    auto flat = j.at("params").get<std::vector<double>>();
    net.params = Eigen::Map<const Vec>(flat.data(), flat.size());
    if (static_cast<int>(flat.size()) != net.n_params())
        throw ConfigError("checkpoint: parameter count does not match architecture");
    return net;
}

inline PolicyNet load_policy_checkpoint(const json& j, const ControlGrid& grid) {
    if (j.at("kind").get<std::string>() != "policy")
        throw ConfigError("checkpoint: expected kind 'policy'");
    PolicyNet pnet;
    pnet.net.widths = j.at("widths").get<std::vector<int>>();
    auto flat = j.at("params").get<std::vector<double>>();
    pnet.net.params = Eigen::Map<const Vec>(flat.data(), flat.size());
    if (static_cast<int>(flat.size()) != pnet.net.n_params())
        throw ConfigError("checkpoint: parameter count does not match architecture");
    pnet.grid_id = j.at("grid_hash").get<std::uint64_t>();
    if (pnet.grid_id != grid_hash(grid))
        throw ConfigError("checkpoint: control grid does not match the stored hash");
    return pnet;
}

}  // namespace softhjb
