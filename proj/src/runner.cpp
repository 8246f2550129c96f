#include "ezdual/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <vector>

#include "ezdual/config.hpp"
#include "ezdual/duality.hpp"
#include "ezdual/simd/kernels.hpp"

namespace ezdual::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// 17 significant digits round-trip doubles exactly
std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start)
            .count();
    }
};

struct RunContext {
    RunConfig cfg;
    fs::path out;
    bool want_csv = false, want_jsonl = false;
    std::ofstream meta;     // deterministic stage metadata
    std::ofstream run_log;  // wall-clock log, excluded from determinism

    explicit RunContext(const CmdOptions& opts) {
        cfg = parse_config_file(opts.config_path);
        if (opts.seed) cfg.seed = *opts.seed;
        if (opts.out_dir) cfg.out_dir = *opts.out_dir;
        for (const auto& f : cfg.formats) {
            want_csv |= f == "csv";
            want_jsonl |= f == "jsonl";
        }
        out = cfg.out_dir;
        fs::create_directories(out);
        if (want_jsonl) {
            meta.open(out / "meta.jsonl");
            run_log.open(out / "run_log.jsonl");
        }
    }

    void stage(const std::string& name, const Timer& t, json extra = json::object()) {
        if (!want_jsonl) return;
        json j{{"stage", name}};
        for (auto& [k, v] : extra.items()) j[k] = v;
        meta << j.dump() << "\n";
        run_log << json{{"stage", name}, {"wall_ms", t.ms()}}.dump() << "\n";
    }
};

void write_surface_csv(const fs::path& path, const ValueSurface& vs) {
    std::ofstream f(path);
    f << "t,x,Y,Yx\n";
    for (int i = 0; i <= vs.time_steps(); ++i)
        for (int j = 0; j < vs.nodes(); ++j)
            f << fmt17(vs.t[i]) << ',' << fmt17(vs.x[j]) << ',' << fmt17(vs.at(i, j))
              << ',' << fmt17(vs.grad_at(i, j)) << "\n";
}

void write_coefficients_csv(const fs::path& path, const DerivedCoefficients& dc) {
    std::ofstream f(path);
    f << "x,r,h,M,Theta\n";
    for (std::size_t j = 0; j < dc.x.size(); ++j)
        f << fmt17(dc.x[j]) << ',' << fmt17(dc.node[j].r) << ',' << fmt17(dc.node[j].h)
          << ',' << fmt17(dc.node[j].M) << ',' << fmt17(dc.node[j].Theta(0, 0)) << "\n";
}

void write_values_csv(const fs::path& path, const PathGrid& grid,
                      const RecursiveValue& rv) {
    std::ofstream f(path);
    f << "t,mean,se\n";
    const int N = rv.num_paths;
    for (int i = 0; i <= rv.steps; ++i) {
        const double* row = rv.values.data() + static_cast<std::size_t>(i) * N;
        const double m = simd::mean(row, N);
        const double se = N > 1 ? std::sqrt(simd::variance(row, N) / N) : 0.0;
        f << fmt17(grid.t[i]) << ',' << fmt17(m) << ',' << fmt17(se) << "\n";
    }
}

std::vector<std::pair<std::string, std::string>> report_rows(const DualityReport& r,
                                                             const IdentityReport& ir) {
    auto b = [](bool v) { return std::string(v ? "1" : "0"); };
    return {
        {"primal_estimate", fmt17(r.primal)},
        {"primal_se", fmt17(r.primal_se)},
        {"dual_v0", fmt17(r.dual_v0)},
        {"dual_se", fmt17(r.dual_se)},
        {"y_star", fmt17(r.y_star)},
        {"dual_total", fmt17(r.dual_total)},
        {"analytic_value", fmt17(r.analytic)},
        {"gap", fmt17(r.gap)},
        {"gap_se", fmt17(r.gap_se)},
        {"y0", fmt17(r.y0)},
        {"martingale_mean", fmt17(r.mart_mean)},
        {"martingale_se", fmt17(r.mart_se)},
        {"martingale_residual", fmt17(r.martingale_residual)},
        {"gradient_residual", fmt17(r.gradient_residual)},
        {"q_mean", fmt17(r.q_mean)},
        {"q_se", fmt17(r.q_se)},
        {"identity_wealth_sup", fmt17(ir.sup_rel_wealth)},
        {"identity_deflator_sup", fmt17(ir.sup_rel_deflator)},
        {"identity_ratio_sup", fmt17(ir.sup_rel_ratio)},
        {"lagrange_argmin", std::to_string(r.lagrange_argmin)},
        {"flag_gap", b(r.flag_gap)},
        {"flag_primal_analytic", b(r.flag_primal)},
        {"flag_dual_analytic", b(r.flag_dual)},
        {"flag_martingale", b(r.flag_martingale)},
        {"flag_gradient", b(r.flag_gradient)},
        {"flag_q_martingale", b(r.flag_q)},
        {"flag_lagrange_min", b(r.flag_lagrange)},
        {"all_pass", b(r.all_pass())},
    };
}

int exit_for_exception(const std::exception& e, std::ostream& out) {
    if (dynamic_cast<const ConfigError*>(&e)) {
        out << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    if (dynamic_cast<const DomainError*>(&e)) {
        out << "inapplicable parameters: " << e.what() << "\n";
        return kExitInapplicable;
    }
    out << "error: " << e.what() << "\n";
    return kExitFailure;
}

}  // namespace

int cmd_check(const CmdOptions& opts, std::ostream& out) {
    try {
        RunContext ctx(opts);
        const auto pref = ctx.cfg.make_preference();
        const auto regime = check_regime_duality(pref);

        out << "regime: " << regime.label << "\n";
        bool all = regime.duality_applicable;

        CheckReport chk;
        bool has_model_check = false;
        if (ctx.cfg.kind == MarketKind::Heston) {
            chk = check_heston(ctx.cfg.heston, pref);
            has_model_check = true;
        } else if (ctx.cfg.kind == MarketKind::KimOmberg) {
            chk = check_kim_omberg(ctx.cfg.kim_omberg, pref);
            has_model_check = true;
        }
        if (has_model_check) {
            for (const auto& item : chk.items)
                out << "  " << (item.pass ? "[pass] " : "[FAIL] ") << item.name << ": "
                    << item.detail << "\n";
            out << "model: " << (chk.accepted ? "accepted" : "rejected") << "\n";
            all = all && chk.applicable && chk.accepted;
        }
        out << (all ? "check: PASS" : "check: FAIL") << "\n";
        return all ? kExitPass : kExitInapplicable;
    } catch (const std::exception& e) {
        return exit_for_exception(e, out);
    }
}

int cmd_solve(const CmdOptions& opts, std::ostream& out) {
    try {
        RunContext ctx(opts);
        const auto pref = ctx.cfg.make_preference();
        const auto model = ctx.cfg.make_model();

        Timer t;
        ValueSurface vs;
        if (ctx.cfg.kind == MarketKind::Constant)
            vs = solve_constant(pref, dynamic_cast<const ConstantMarket&>(*model),
                                ctx.cfg.horizon, ctx.cfg.scheme);
        else
            vs = solve_pde(pref, *model, ctx.cfg.horizon, ctx.cfg.scheme);

        // regime bound slack on the solved surface
        const double dth = pref.delta() * pref.theta();
        double max_excess = -1e300;
        for (int i = 0; i <= vs.time_steps(); ++i) {
            const double tau = vs.t.back() - vs.t[i];
            const double bound = pref.theta() < 0 ? (vs.meta.h_max - dth) * tau
                                                  : 1e300;
            for (int j = 0; j < vs.nodes(); ++j)
                max_excess = std::max(max_excess, vs.at(i, j) - bound);
        }
        const bool bound_ok = pref.theta() >= 0 || max_excess <= 1e-8;

        if (ctx.want_csv) {
            write_surface_csv(ctx.out / "surface.csv", vs);
            write_coefficients_csv(
                ctx.out / "coefficients.csv",
                derive_coefficients(*model, pref,
                                    model->default_grid(ctx.cfg.scheme.space_nodes)));
        }
        ctx.stage("solve", t,
                  {{"scheme", vs.meta.scheme},
                   {"time_steps", vs.time_steps()},
                   {"space_nodes", vs.nodes()},
                   {"h_max", vs.meta.h_max},
                   {"clamp_activated", vs.meta.clamp_activated},
                   {"upper_bound_ok", bound_ok}});
        out << "solve: Y0 = " << fmt17(vs.value(0.0, model->x0()))
            << " (scheme " << vs.meta.scheme << ", bound "
            << (bound_ok ? "ok" : "VIOLATED") << ")\n";
        return bound_ok ? kExitPass : kExitFailure;
    } catch (const std::exception& e) {
        return exit_for_exception(e, out);
    }
}

int cmd_verify(const CmdOptions& opts, std::ostream& out) {
    try {
        RunContext ctx(opts);
        const auto pref = ctx.cfg.make_preference();
        const auto model = ctx.cfg.make_model();

        LsmcOptions lsmc;
        lsmc.batches = ctx.cfg.batches;
        lsmc.threads = opts.threads;

        Timer t_all;
        VerifyArtifacts art;
        const DualityReport rep =
            verify_duality(*model, pref, ctx.cfg.w0, ctx.cfg.paths,
                           ctx.cfg.scheme.time_steps, ctx.cfg.horizon, ctx.cfg.seed,
                           ctx.cfg.scheme, lsmc, &art);

        // identity diagnostics on the same run (common random numbers)
        const OptimalPolicy pol = extract_policy(art.vs, *model, pref, ctx.cfg.w0);
        const IdentityReport ir =
            pathwise_identities(*model, pref, pol, art.vs, art.bundle, opts.threads);

        const auto rows = report_rows(rep, ir);
        if (ctx.want_csv) {
            std::ofstream txt(ctx.out / "duality_report.txt");
            for (const auto& [k, v] : rows) txt << k << " = " << v << "\n";
            std::ofstream csv(ctx.out / "duality_report.csv");
            for (std::size_t i = 0; i < rows.size(); ++i)
                csv << rows[i].first << (i + 1 < rows.size() ? "," : "\n");
            for (std::size_t i = 0; i < rows.size(); ++i)
                csv << rows[i].second << (i + 1 < rows.size() ? "," : "\n");
            write_values_csv(ctx.out / "primal_values.csv", art.bundle.grid, art.primal);
            write_values_csv(ctx.out / "dual_values.csv", art.bundle.grid, art.dual);
            if (ctx.cfg.dump_paths > 0) {
                std::ofstream pf(ctx.out / "paths.csv");
                pf << "path_id,t,X,dW\n";
                const int np = std::min(ctx.cfg.dump_paths, art.bundle.num_paths);
                for (int p = 0; p < np; ++p)
                    for (int i = 0; i <= art.bundle.grid.steps; ++i)
                        pf << p << ',' << fmt17(art.bundle.grid.t[i]) << ','
                           << fmt17(art.bundle.x(i, p)) << ','
                           << fmt17(i < art.bundle.grid.steps ? art.bundle.dw(i, p)
                                                              : 0.0)
                           << "\n";
            }
        }
        ctx.stage("verify", t_all,
                  {{"all_pass", rep.all_pass()},
                   {"flags",
                    {{"gap", rep.flag_gap},
                     {"primal_analytic", rep.flag_primal},
                     {"dual_analytic", rep.flag_dual},
                     {"martingale", rep.flag_martingale},
                     {"gradient", rep.flag_gradient},
                     {"q", rep.flag_q},
                     {"lagrange", rep.flag_lagrange}}}});
        ctx.stage("regression", t_all,
                  {{"primal_basis", art.primal.basis},
                   {"primal_max_residual", art.primal.max_residual},
                   {"dual_basis", art.dual.basis},
                   {"dual_max_residual", art.dual.max_residual}});

        for (const auto& [k, v] : rows) out << k << " = " << v << "\n";
        out << (rep.all_pass() ? "verify: PASS" : "verify: FAIL") << "\n";
        return rep.all_pass() ? kExitPass : kExitFailure;
    } catch (const std::exception& e) {
        return exit_for_exception(e, out);
    }
}

int cmd_transforms(const CmdOptions& opts, std::ostream& out) {
    try {
        RunContext ctx(opts);
        const auto pref = ctx.cfg.make_preference();
        if (pref.regime() == Regime::Crra ||
            pref.regime() == Regime::Unsupported) {
            out << "transforms: conjugate chain needs gamma*psi > 1 (got "
                << regime_name(pref.regime()) << ")\n";
            return kExitInapplicable;
        }
        Timer t;
        const auto res = conjugacy_residuals(pref, 1000, ctx.cfg.seed);
        out << "aggregator from felicity : " << fmt17(res.f_from_F) << "\n";
        out << "terminal conjugate        : " << fmt17(res.V_from_U) << "\n";
        out << "dual felicity from primal : " << fmt17(res.G_from_F) << "\n";
        out << "dual generator from dual  : " << fmt17(res.g_from_G) << "\n";
        ctx.stage("transforms", t, {{"max_residual", res.max()}, {"pass", res.pass()}});
        out << (res.pass() ? "transforms: PASS" : "transforms: FAIL") << "\n";
        return res.pass() ? kExitPass : kExitFailure;
    } catch (const std::exception& e) {
        return exit_for_exception(e, out);
    }
}

}  // namespace ezdual::cli
