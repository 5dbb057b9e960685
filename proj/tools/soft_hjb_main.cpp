#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "softhjb/config.hpp"
#include "softhjb/csv.hpp"
#include "softhjb/diagnostics.hpp"
#include "softhjb/oracle.hpp"
#include "softhjb/rollout.hpp"
#include "softhjb/svg.hpp"

namespace fs = std::filesystem;
using namespace softhjb;

namespace {

int log_level() {
    const char* env = std::getenv("SOFT_HJB_LOG");
    return env ? std::atoi(env) : 0;
}

void log_line(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[soft_hjb] " << msg << "\n";
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed = -1;  // -1: keep config seed
    int threads = 1;
    bool deterministic = true;  // reductions are ordered either way; kept for the interface
};

json make_manifest(const std::string& command, const RunConfig& cfg, const GlobalOpts& g) {
    json m;
    m["command"] = command;
    m["resolved_config"] = cfg.to_json();
    m["seed"] = cfg.pi.seed;
    m["threads"] = g.threads;
    m["deterministic"] = g.deterministic;
    m["versions"] = {{"soft_hjb", "0.1.0"},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)}};
    m["out_dir"] = g.out_dir;
    return m;
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

// Config file or a previous run's manifest (keyed by resolved_config).
RunConfig load_run_config(const std::string& path, std::int64_t seed_override) {
    json j = load_json_file(path);
    if (j.contains("resolved_config")) {
        RunConfig cfg = parse_config(j.at("resolved_config"));
        cfg.pi.seed = j.at("seed").get<std::uint64_t>();
        if (seed_override >= 0) cfg.pi.seed = static_cast<std::uint64_t>(seed_override);
        return cfg;
    }
    RunConfig cfg = parse_config(j);
    if (seed_override >= 0) cfg.pi.seed = static_cast<std::uint64_t>(seed_override);
    return cfg;
}

int cmd_solve(const GlobalOpts& g) {
    RunConfig cfg;
    ControlProblem pb;
    try {
        cfg = load_run_config(g.config_path, g.seed);
        pb = cfg.build_problem();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    if (cfg.pi.quadratic_init && cfg.kind == "lqr") {
        // warm-start prior from the discounted Riccati baseline (sign flipped:
        // the baseline stores V = -x^T P x + c)
        auto ric = solve_riccati(cfg.resolved_lqr_spec(), cfg.rho);
        cfg.pi.P0 = -ric.P;
        cfg.pi.c0 = ric.offset;
    }
    fs::create_directories(g.out_dir);
    json manifest = make_manifest("solve", cfg, g);
    write_json(manifest, fs::path(g.out_dir) / "manifest.json");

    CsvWriter ledger_csv(
        (fs::path(g.out_dir) / "ledger.csv").string(),
        {"n", "L_value", "L_policy", "step8_metric", "q_norm", "r_norm", "reward_estimate"});

    double t0 = now_seconds();
    IterationCallback on_iter = [&](LedgerRow& row, const Mlp& vnet, const PolicyNet& pnet,
                                    const ControlGrid& grid) {
        if (cfg.eval_enabled) {
            SdeConfig ev = cfg.eval;
            ev.seed = substream_seed(cfg.pi.seed, 0xe7a1 + row.n);
            auto rep = evaluate_policy(pb, grid, pnet,
                                       uniform_x0_sampler(pb.domain, pb.state_dim), ev);
            row.reward_estimate = rep.mean;
        }
        ledger_csv.row({double(row.n), row.value_loss, row.policy_loss, row.step8_metric,
                        row.q_norm, row.r_norm, row.reward_estimate});
        ledger_csv.flush();
        write_json(value_checkpoint(vnet, cfg.pi.seed),
                   fs::path(g.out_dir) / ("value_" + std::to_string(row.n) + ".json"));
        write_json(policy_checkpoint(pnet, cfg.pi.seed),
                   fs::path(g.out_dir) / ("policy_" + std::to_string(row.n) + ".json"));
        log_line("iteration " + std::to_string(row.n) +
                 " L_value=" + CsvWriter::format(row.value_loss));
    };

    auto res = pinn_spi_run(pb, cfg.pi, on_iter);

    write_json(value_checkpoint(res.vnet, cfg.pi.seed), fs::path(g.out_dir) / "value_final.json");
    write_json(policy_checkpoint(res.pnet, cfg.pi.seed),
               fs::path(g.out_dir) / "policy_final.json");

    SvgChart chart;
    chart.title = "PINN soft policy iteration";
    chart.y_label = "loss";
    std::vector<double> lv, lp, rw;
    bool any_reward = false;
    for (const auto& r : res.ledger.rows) {
        lv.push_back(r.value_loss);
        lp.push_back(r.policy_loss);
        rw.push_back(r.reward_estimate);
        any_reward = any_reward || std::isfinite(r.reward_estimate);
    }
    chart.add_series("L_value", lv);
    chart.add_series("L_policy", lp);
    chart.write((fs::path(g.out_dir) / "losses.svg").string());
    if (any_reward) {
        SvgChart rchart;
        rchart.title = "discounted reward per iteration";
        rchart.y_label = "reward";
        rchart.add_series("reward", rw);
        rchart.write((fs::path(g.out_dir) / "reward.svg").string());
    }

    manifest["timings_sec"] = {{"solve", now_seconds() - t0}};
    manifest["converged"] = res.converged;
    manifest["iterations"] = res.ledger.rows.size();
    write_json(manifest, fs::path(g.out_dir) / "manifest.json");

    if (res.diverged) {
        std::cerr << "training diverged: " << res.divergence_message << "\n";
        return 3;
    }
    return 0;
}

// Desk problem shared by the verify checks: 1D constrained LQR with cutoff.
ControlProblem verify_problem(double rho = 1.0, double lambda = 1.0) {
    LqrSpec spec;
    spec.A = Mat::Constant(1, 1, -1.0);
    spec.B = Mat::Constant(1, 1, 1.0);
    spec.Q = Mat::Constant(1, 1, 1.0);
    spec.R_cost = Mat::Constant(1, 1, 1.0);
    spec.sigma_scale = 0.5;
    spec.u_bound = 5.0;
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 2.0;
    return make_lqr_problem(spec, rho, lambda, dom);
}

void write_lemma_csv(const LemmaReport& rep, const fs::path& out_dir) {
    CsvWriter csv((out_dir / ("lemma_" + rep.lemma + ".csv")).string(),
                  {"trial", "lhs", "rhs", "slack"});
    for (size_t t = 0; t < rep.rows.size(); ++t)
        csv.row({double(t), rep.rows[t][0], rep.rows[t][1], rep.rows[t][0] - rep.rows[t][1]});
}

int cmd_verify(const std::string& lemma, int trials, std::uint64_t seed, const GlobalOpts& g) {
    static const std::set<std::string> known{"1", "2", "3", "prop1", "pinsker", "all"};
    if (!known.count(lemma)) {
        std::cerr << "invalid lemma selector: " << lemma << "\n";
        return 2;
    }
    fs::create_directories(g.out_dir);
    auto pb = verify_problem();
    auto grid = build_control_grid(pb.control_set, 9);
    json summary;
    int violations = 0;

    auto run_one = [&](const std::string& id) {
        LemmaReport rep;
        if (id == "1") {
            SpatialGrid sgrid{1, 129, pb.domain.radius};
            auto bump = [](const Vec& x) {
                double s = x[0] / 1.2;
                return std::abs(s) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0;
            };
            rep = lemma1_energy_check(pb, grid, sgrid, bump, {0.75, 1.0, 2.0, 5.0});
        } else if (id == "2") {
            rep = lemma2_lipschitz_check(pb, grid, Vec::Constant(1, 0.5), trials, 3.0, seed);
        } else if (id == "3") {
            SpatialGrid sgrid{1, 49, pb.domain.radius};
            rep = lemma3_stability_check(pb, grid, sgrid, std::max(1, trials / 100), seed);
        } else if (id == "prop1") {
            auto colloc = sample_collocation(pb.domain, 1, trials, seed);
            Mlp vnet = Mlp::make({1, 12, 1}, substream_seed(seed, 0xa7));
            rep = proposition1_check(pb, grid, MlpValue{&vnet}, colloc);
        } else {  // pinsker
            rep.lemma = "pinsker";
            auto rng = make_rng(seed, 0xb1);
            std::uniform_real_distribution<double> unif(0.05, 1.0);
            for (int t = 0; t < trials; ++t) {
                Vec a(grid.size()), b(grid.size());
                for (int j = 0; j < grid.size(); ++j) {
                    a[j] = unif(rng);
                    b[j] = unif(rng);
                }
                a = weighted_softmax(a.array().log(), grid.weights);
                b = weighted_softmax(b.array().log(), grid.weights);
                auto res = pinsker_check(grid, a, b);
                rep.record(res.lhs, res.rhs + 1e-12);
            }
        }
        write_lemma_csv(rep, g.out_dir);
        violations += rep.violations;
        summary[rep.lemma] = {{"trials", rep.trials},
                              {"violations", rep.violations},
                              {"worst_slack", rep.worst_slack}};
        log_line("lemma " + rep.lemma + ": " + std::to_string(rep.violations) + " violations");
    };

    if (lemma == "all")
        for (const std::string& id : {"1", "2", "3", "prop1", "pinsker"}) run_one(id);
    else
        run_one(lemma);

    summary["total_violations"] = violations;
    write_json(summary, fs::path(g.out_dir) / "verify_summary.json");
    return violations == 0 ? 0 : 4;
}

int cmd_oracle(const GlobalOpts& g, int grid_n) {
    RunConfig cfg;
    ControlProblem pb;
    try {
        cfg = load_run_config(g.config_path, g.seed);
        pb = cfg.build_problem();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    if (pb.state_dim > 2) {
        std::cerr << "no grid oracle above 2D (state_dim=" << pb.state_dim << ")\n";
        return 5;
    }
    fs::create_directories(g.out_dir);
    write_json(make_manifest("oracle", cfg, g), fs::path(g.out_dir) / "manifest.json");
    SpatialGrid sgrid{pb.state_dim, grid_n, pb.domain.radius};
    auto grid = build_control_grid(pb.control_set, cfg.pi.quad_per_dim);
    auto res = exact_policy_iteration(pb, grid, sgrid, Vec::Zero(sgrid.n_nodes()), 60, 1e-9);

    std::vector<std::string> cols;
    for (int k = 0; k < pb.state_dim; ++k) cols.push_back("x" + std::to_string(k));
    cols.push_back("v");
    CsvWriter nodal((fs::path(g.out_dir) / "oracle_v.csv").string(), cols);
    const Vec& v = res.value_iterates.back();
    for (int idx = 0; idx < sgrid.n_nodes(); ++idx) {
        Vec x = sgrid.coord(idx);
        std::vector<double> row(x.data(), x.data() + x.size());
        row.push_back(v[idx]);
        nodal.row(row);
    }
    CsvWriter conv((fs::path(g.out_dir) / "oracle_convergence.csv").string(), {"n", "diff_l2"});
    for (size_t n = 0; n < res.diff_norms.size(); ++n)
        conv.row({double(n + 1), res.diff_norms[n]});
    log_line("oracle converged=" + std::to_string(res.converged));
    return 0;
}

int cmd_rollout(const GlobalOpts& g, const std::string& checkpoint, int paths, double dt,
                double horizon) {
    RunConfig cfg;
    ControlProblem pb;
    PolicyNet pnet;
    ControlGrid grid;
    try {
        cfg = load_run_config(g.config_path, g.seed);
        pb = cfg.build_problem();
        grid = build_control_grid(pb.control_set, cfg.pi.quad_per_dim);
        pnet = load_policy_checkpoint(load_json_file(checkpoint), grid);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    fs::create_directories(g.out_dir);
    write_json(make_manifest("rollout", cfg, g), fs::path(g.out_dir) / "manifest.json");
    SdeConfig sde = cfg.eval;
    if (paths > 0) sde.paths = paths;
    if (dt > 0) sde.dt = dt;
    if (horizon > 0) sde.horizon = horizon;
    sde.seed = cfg.pi.seed;
    auto rep = evaluate_policy(pb, grid, pnet, uniform_x0_sampler(pb.domain, pb.state_dim), sde);
    CsvWriter csv((fs::path(g.out_dir) / "eval.csv").string(), {"path", "reward"});
    for (size_t p = 0; p < rep.path_rewards.size(); ++p)
        csv.row({double(p), rep.path_rewards[p]});
    json summary = {{"mean", rep.mean},
                    {"std_error", rep.std_error},
                    {"tail_bound", rep.tail_bound},
                    {"truncated_paths", rep.truncated_paths},
                    {"all_truncated", rep.all_truncated}};
    write_json(summary, fs::path(g.out_dir) / "rollout_summary.json");
    if (rep.all_truncated) std::cerr << "warning: every path left the domain\n";
    return 0;
}

int cmd_compare(const GlobalOpts& g, const std::string& checkpoint) {
    RunConfig cfg;
    ControlProblem pb;
    Mlp vnet;
    try {
        cfg = load_run_config(g.config_path, g.seed);
        pb = cfg.build_problem();
        vnet = load_value_checkpoint(load_json_file(checkpoint));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    fs::create_directories(g.out_dir);
    write_json(make_manifest("compare", cfg, g), fs::path(g.out_dir) / "manifest.json");
    json summary;
    MlpValue vf{&vnet};

    if (pb.state_dim <= 2) {
        SpatialGrid sgrid{pb.state_dim, pb.state_dim == 1 ? 257 : 65, pb.domain.radius};
        auto grid = build_control_grid(pb.control_set, cfg.pi.quad_per_dim);
        auto res = exact_policy_iteration(pb, grid, sgrid, Vec::Zero(sgrid.n_nodes()), 60, 1e-9);
        const Vec& vref = res.value_iterates.back();
        double num = 0.0, den = 0.0;
        std::vector<double> slice_net, slice_ref;
        for (int idx = 0; idx < sgrid.n_nodes(); ++idx) {
            Vec x = sgrid.coord(idx);
            // skip the boundary ring: the FD Dirichlet condition pins it to 0
            if (sgrid.is_boundary(idx)) continue;
            double d = vf.value(x) - vref[idx];
            num += d * d;
            den += vref[idx] * vref[idx];
            // axis slice for the overlay: all nodes in 1D, the x2 ~ 0 row in 2D
            if (pb.state_dim == 1 || std::abs(x[1]) <= sgrid.h() / 2) {
                slice_net.push_back(vf.value(x));
                slice_ref.push_back(vref[idx]);
            }
        }
        double rel = std::sqrt(num / den);
        summary["oracle"] = "fd";
        summary["relative_l2"] = rel;
        SvgChart chart;
        chart.title = "value vs grid oracle (axis slice)";
        chart.x_label = "node";
        chart.y_label = "v";
        chart.add_series("network", slice_net);
        chart.add_series("oracle", slice_ref);
        chart.write((fs::path(g.out_dir) / "compare.svg").string());
    } else if (cfg.kind == "lqr") {
        auto ric = solve_riccati(cfg.resolved_lqr_spec(), pb.rho);
        auto colloc = sample_collocation(pb.domain, pb.state_dim, 4096,
                                         substream_seed(cfg.pi.seed, 0xc0de));
        double num = 0.0, den = 0.0;
        for (const auto& x : colloc.points) {
            if (x.norm() > 0.5 * pb.domain.radius) continue;  // inner half-domain
            double d = vf.value(x) - ric.value(x);
            num += d * d;
            den += ric.value(x) * ric.value(x);
        }
        summary["oracle"] = "riccati";
        summary["relative_l2"] = std::sqrt(num / den);
    } else {
        std::cerr << "no oracle applies: dimension " << pb.state_dim << ", kind " << cfg.kind
                  << "\n";
        return 5;
    }
    write_json(summary, fs::path(g.out_dir) / "compare_summary.json");
    std::cout << "relative_l2 " << summary["relative_l2"].get<double>() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mesh-free solver for entropy-regularized stochastic optimal control"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.fallthrough();
    app.add_option("--config", g.config_path, "JSON config or a previous run manifest");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--seed", g.seed, "master seed override");
    app.add_option("--threads", g.threads, "worker thread cap");
    app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
                 "ordered reductions (always on; flag kept for interface stability)");

    auto* solve = app.add_subcommand("solve", "run PINN soft policy iteration");
    auto* verify = app.add_subcommand("verify", "numerical checks of the analytical estimates");
    std::string lemma = "all";
    int trials = 1000;
    std::uint64_t vseed = 1;
    verify->add_option("--lemma", lemma, "1|2|3|prop1|pinsker|all");
    verify->add_option("--trials", trials, "trial count");
    verify->add_option("--vseed", vseed, "verification seed");
    auto* oracle = app.add_subcommand("oracle", "grid-based exact policy iteration");
    int grid_n = 129;
    oracle->add_option("--grid-n", grid_n, "nodes per axis");
    auto* rollout = app.add_subcommand("rollout", "Monte Carlo policy evaluation");
    std::string checkpoint;
    int paths = 0;
    double dt = 0.0, horizon = 0.0;
    rollout->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
    rollout->add_option("--paths", paths, "path count");
    rollout->add_option("--dt", dt, "time step");
    rollout->add_option("--T", horizon, "horizon");
    auto* compare = app.add_subcommand("compare", "value network vs available oracle");
    std::string vcheckpoint;
    compare->add_option("--checkpoint", vcheckpoint, "value checkpoint")->required();

    CLI11_PARSE(app, argc, argv);
    set_worker_threads(g.threads);

    try {
        if (solve->parsed()) return cmd_solve(g);
        if (verify->parsed()) return cmd_verify(lemma, trials, vseed, g);
        if (oracle->parsed()) return cmd_oracle(g, grid_n);
        if (rollout->parsed()) return cmd_rollout(g, checkpoint, paths, dt, horizon);
        if (compare->parsed()) return cmd_compare(g, vcheckpoint);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
