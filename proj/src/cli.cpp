#include "msfcev/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>

#include "msfcev/calibrate.hpp"
#include "msfcev/errors.hpp"
#include "msfcev/pricing.hpp"
#include "msfcev/process.hpp"
#include "msfcev/verify.hpp"

namespace msfcev::cli {

namespace {

using pricing::Driver;
using pricing::Family;
using pricing::MarketEnv;
using pricing::ModelSpec;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest representation that reads back to the same double.
std::string number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct ModelFlags {
    std::string model = "msfcev";
    double sigma = 0.3;
    double alpha = 1.0;
    double hurst = 0.7;
    double beta = 1.0;
    double gamma = 1.0;
    double rate = 0.05;
    double spot = 100.0;
    CLI::Option* gamma_opt = nullptr;

    void add(CLI::App& app) {
        app.add_option("--model", model, "bs, mfbs, msfbs, cev, mfcev or msfcev")->capture_default_str();
        app.add_option("--sigma", sigma, "volatility scale")->capture_default_str();
        app.add_option("--alpha", alpha, "CEV elasticity in [0, 2)")->capture_default_str();
        app.add_option("--hurst", hurst, "Hurst index of the sub-fractional / fractional part")->capture_default_str();
        app.add_option("--beta", beta, "Brownian weight")->capture_default_str();
        gamma_opt = app.add_option("--gamma", gamma, "fractional weight (default 1 for mixed drivers, 0 for classical)");
        app.add_option("--rate", rate, "risk-free rate")->capture_default_str();
        app.add_option("--spot", spot, "initial price S0")->capture_default_str();
    }

    ModelSpec spec() const {
        auto m = pricing::parse_model_name(model);
        if (!m) throw UsageError("unknown model '" + model + "'");
        m->sigma = sigma;
        m->alpha = alpha;
        const double g = gamma_opt->count() ? gamma : (m->driver == Driver::Classical ? 0.0 : 1.0);
        m->driver_params = {hurst, beta, g};
        m->validate();
        return *m;
    }

    MarketEnv env() const {
        MarketEnv e{rate, spot};
        e.validate();
        return e;
    }
};

// Writes to --out when given, otherwise to the command's stdout.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw std::ios_base::failure("cannot open '" + path + "' for writing");
            stream_ = file_.get();
        }
    }
    std::ostream& get() { return *stream_; }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_;
};

std::vector<double> default_alpha_grid() {
    std::vector<double> a;
    for (int i = 0; i <= 7; ++i) a.push_back(0.25 * i);
    a.push_back(1.99);
    return a;
}

int cmd_price(const ModelFlags& mf, double maturity, double strike, bool json, std::ostream& out) {
    const auto model = mf.spec();
    const auto env = mf.env();
    const double c = pricing::call_price(model, env, maturity, strike);
    if (json) {
        nlohmann::json j{{"model", pricing::model_name(model)},
                         {"sigma", model.sigma},
                         {"hurst", model.driver_params.hurst},
                         {"beta", model.driver_params.beta},
                         {"gamma", model.driver_params.gamma},
                         {"rate", env.rate},
                         {"spot", env.spot},
                         {"strike", strike},
                         {"maturity", maturity},
                         {"price", c}};
        if (model.family == Family::CEV) j["alpha"] = model.alpha;
        out << j.dump(2) << '\n';
    } else {
        out << number(c) << '\n';
    }
    return 0;
}

int cmd_density(const ModelFlags& mf, double maturity, int points, std::optional<double> s_min,
                std::optional<double> s_max, const std::string& method, int n_space, int n_time, std::ostream& out) {
    const auto model = mf.spec();
    const auto env = mf.env();
    if (model.family != Family::CEV) throw DomainError("density needs a CEV-family model");
    if (method == "fpe") {
        const auto grid = verify::FpeGrid::around(model, env, maturity, n_space, n_time);
        const auto sol = verify::solve_fpe(model, env, maturity, grid, env.spot);
        verify::write_density_csv(out, sol.spot, sol.density_s);
        return 0;
    }
    if (method != "closed") throw UsageError("--method must be 'closed' or 'fpe'");
    if (points < 2) throw DomainError("--points must be >= 2");
    const auto grid = verify::FpeGrid::around(model, env, maturity);
    const double b = 2.0 - model.alpha;
    const double lo = s_min.value_or(std::pow(grid.x_min, 1.0 / b));
    const double hi = s_max.value_or(std::pow(grid.x_max, 1.0 / b));
    if (!(lo >= 0.0 && hi > lo)) throw DomainError("need 0 <= s-min < s-max");
    std::vector<double> s, p;
    // With lo = 0 the grid is (0, hi]: S_T = 0 carries the absorbed mass, not a density.
    const double h = lo > 0.0 ? (hi - lo) / (points - 1) : hi / points;
    const double first = lo > 0.0 ? lo : h;
    for (int i = 0; i < points; ++i) {
        const double v = first + h * i;
        s.push_back(v);
        p.push_back(pricing::transition_density(model, env, maturity, v));
    }
    verify::write_density_csv(out, s, p);
    return 0;
}

int cmd_curve(const ModelFlags& mf, double maturity, std::optional<double> strike, std::vector<double> alphas,
              std::vector<double> hursts, const std::string& family, unsigned threads, std::ostream& out) {
    ModelSpec tmpl = mf.spec();
    if (family == "cev") tmpl.family = Family::CEV;
    else if (family == "bs") tmpl.family = Family::BS;
    else throw UsageError("--family must be 'cev' or 'bs'");
    const auto env = mf.env();
    if (alphas.empty()) alphas = default_alpha_grid();
    const auto rows = pricing::price_curve(tmpl, env, maturity, strike.value_or(env.spot), alphas, hursts, threads);
    pricing::write_curve_csv(out, rows, tmpl.family);
    return 0;
}

int cmd_simulate(const ModelFlags& mf, double horizon, std::size_t steps, std::size_t paths, std::uint64_t seed,
                 unsigned threads, std::ostream& out) {
    process::MixedDriverParams p{mf.hurst, mf.beta, mf.gamma_opt->count() ? mf.gamma : 1.0};
    p.validate();
    if (!(horizon > 0.0)) throw DomainError("--horizon must be > 0");
    if (steps < 1 || paths < 1) throw DomainError("--steps and --paths must be >= 1");
    const auto batch = process::sample_msfbm(process::TimeGrid::uniform(horizon, steps), p, paths, seed, threads);
    process::write_csv(out, batch);
    return 0;
}

struct CheckRow {
    std::string name;
    double value;
    double reference;
    double error;
    double tolerance;
    bool pass;
};

int cmd_verify(const ModelFlags& mf, double maturity, double strike, std::size_t paths, int steps,
               std::uint64_t seed, unsigned threads, std::ostream& out) {
    const auto model = mf.spec();
    const auto env = mf.env();
    std::vector<CheckRow> rows;
    const double price = pricing::call_price(model, env, maturity, strike);

    if (model.family == Family::CEV) {
        const double phi = pricing::effective_variance(model, env, maturity);
        const double phi_q = verify::effective_variance_quadrature(model, env, maturity);
        const double phi_err = std::abs(phi / phi_q - 1.0);
        rows.push_back({"phi_quadrature", phi, phi_q, phi_err, 1e-9, phi_err <= 1e-9});

        const double q = verify::quadrature_price(model, env, maturity, strike);
        const bool tiny = price <= 1e-4;
        const double q_err = tiny ? std::abs(q - price) : std::abs(q / price - 1.0);
        const double q_tol = tiny ? 1e-10 : 1e-6;
        rows.push_back({"density_quadrature", price, q, q_err, q_tol, q_err <= q_tol});

        const auto grid = verify::FpeGrid::around(model, env, maturity);
        const auto sol = verify::solve_fpe(model, env, maturity, grid, env.spot);
        const double l1 = sol.l1_distance(model, env, maturity);
        rows.push_back({"fpe_l1", l1, 0.0, l1, 1e-2, l1 <= 1e-2});
    }

    verify::McConfig cfg;
    cfg.n_paths = paths;
    cfg.n_steps = steps;
    cfg.seed = seed;
    cfg.threads = threads;
    std::optional<verify::McResult> mc;
    if (model.family == Family::BS) mc = verify::mc_price_msfbs(model, env, maturity, strike, cfg);
    else if (model.driver == Driver::Classical) mc = verify::mc_price_cev_classical(model, env, maturity, strike, cfg);
    if (mc) {
        const double z = mc->standard_error > 0.0 ? std::abs(mc->price - price) / mc->standard_error
                                                  : (mc->price == price ? 0.0 : INFINITY);
        rows.push_back({"monte_carlo_z", mc->price, price, z, 3.0, z <= 3.0});
    }

    bool all = true;
    out << std::left << std::setw(20) << "check" << std::setw(24) << "value" << std::setw(24) << "reference"
        << std::setw(14) << "error" << std::setw(10) << "tolerance" << "status\n";
    for (const auto& r : rows) {
        all = all && r.pass;
        out << std::left << std::setw(20) << r.name << std::setw(24) << number(r.value) << std::setw(24)
            << number(r.reference) << std::setw(14) << std::setprecision(3) << std::scientific << r.error
            << std::setw(10) << r.tolerance << std::defaultfloat << (r.pass ? "PASS" : "FAIL") << '\n';
    }
    if (mc && !mc->warning.empty()) out << "note: " << mc->warning << '\n';
    return all ? 0 : 2;
}

calibrate::OptionChain read_chain(const std::string& path, bool filter, std::ostream& err) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
    std::vector<std::string> diagnostics;
    auto chain = calibrate::load_chain(in, {filter}, &diagnostics);
    for (const auto& d : diagnostics) err << path << ": " << d << '\n';
    return chain;
}

std::string kind_of(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e)) return "parse";
    if (dynamic_cast<const DomainError*>(&e)) return "domain";
    if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence";
    if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
    if (dynamic_cast<const CalibrationError*>(&e)) return "calibration";
    if (dynamic_cast<const UsageError*>(&e)) return "usage";
    if (dynamic_cast<const std::ios_base::failure*>(&e)) return "io";
    return "internal";
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pricing, verification and calibration for the mixed sub-fractional CEV model family", "msfcev"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "msfcev 1.0");

    ModelFlags mf;
    double maturity = 0.25;
    double strike = 100.0;
    std::optional<double> curve_strike, s_min, s_max;
    bool json = false;
    std::string out_path;
    unsigned threads = 1;
    std::uint64_t seed = 0;

    auto* price = app.add_subcommand("price", "closed-form call price");
    mf.add(*price);
    price->add_option("--strike", strike)->required();
    price->add_option("--maturity", maturity)->required();
    price->add_flag("--json", json, "emit JSON instead of a bare number");

    ModelFlags mf_density;
    int points = 400, n_space = 2000, n_time = 1000;
    std::string method = "closed";
    auto* density = app.add_subcommand("density", "transition density of S_T as CSV");
    mf_density.add(*density);
    density->add_option("--maturity", maturity)->required();
    density->add_option("--points", points, "grid points (closed form)")->capture_default_str();
    density->add_option("--s-min", s_min);
    density->add_option("--s-max", s_max);
    density->add_option("--method", method, "closed or fpe")->capture_default_str();
    density->add_option("--n-space", n_space, "FPE cells")->capture_default_str();
    density->add_option("--n-time", n_time, "FPE time steps")->capture_default_str();
    density->add_option("--out", out_path);

    ModelFlags mf_curve;
    std::vector<double> alphas, hursts{0.5, 0.7, 0.9};
    std::string family = "cev";
    auto* curve = app.add_subcommand("curve", "price against alpha for the mixed drivers, as CSV");
    mf_curve.add(*curve);
    curve->add_option("--maturity", maturity)->required();
    curve->add_option("--strike", curve_strike, "defaults to the spot");
    curve->add_option("--alphas", alphas, "alpha grid (default 0, 0.25, ..., 1.75, 1.99)")->delimiter(',');
    curve->add_option("--hursts", hursts, "Hurst set")->delimiter(',')->capture_default_str();
    curve->add_option("--family", family, "cev or bs")->capture_default_str();
    curve->add_option("--threads", threads)->capture_default_str();
    curve->add_option("--out", out_path);

    ModelFlags mf_sim;
    double horizon = 1.0;
    std::size_t steps = 100, paths = 1000;
    auto* simulate = app.add_subcommand("simulate", "exact mixed sub-fractional Brownian paths as CSV");
    mf_sim.add(*simulate);
    simulate->add_option("--horizon", horizon)->capture_default_str();
    simulate->add_option("--steps", steps)->capture_default_str();
    simulate->add_option("--paths", paths)->capture_default_str();
    simulate->add_option("--seed", seed)->required();
    simulate->add_option("--threads", threads)->capture_default_str();
    simulate->add_option("--out", out_path);

    ModelFlags mf_verify;
    std::size_t mc_paths = 100000;
    int mc_steps = 400;
    auto* verify_cmd = app.add_subcommand("verify", "run the oracle checks at one parameter point");
    mf_verify.add(*verify_cmd);
    verify_cmd->add_option("--strike", strike)->required();
    verify_cmd->add_option("--maturity", maturity)->required();
    verify_cmd->add_option("--paths", mc_paths, "Monte Carlo paths")->capture_default_str();
    verify_cmd->add_option("--steps", mc_steps, "Euler steps (classical CEV)")->capture_default_str();
    verify_cmd->add_option("--seed", seed)->required();
    verify_cmd->add_option("--threads", threads)->capture_default_str();

    std::string input, mode_str = "joint", model_name = "msfcev";
    std::vector<std::string> models{"bs", "mfbs", "msfbs", "cev", "mfcev", "msfcev"};
    bool filter = false;
    calibrate::OptimizerConfig opt;
    auto add_fit_flags = [&](CLI::App* cmd) {
        cmd->add_option("--input", input, "ChainCsv file")->required();
        cmd->add_option("--mode", mode_str, "joint or per_maturity")->capture_default_str();
        cmd->add_option("--starts", opt.starts)->capture_default_str();
        cmd->add_option("--max-iterations", opt.max_iterations)->capture_default_str();
        cmd->add_option("--seed", seed)->required();
        cmd->add_option("--threads", threads)->capture_default_str();
        cmd->add_flag("--moneyness-filter", filter, "keep strikes >= 0.95 spot");
        cmd->add_option("--out", out_path);
    };
    auto* calibrate_cmd = app.add_subcommand("calibrate", "fit one model to an option chain");
    add_fit_flags(calibrate_cmd);
    calibrate_cmd->add_option("--model", model_name)->capture_default_str();
    auto* compare = app.add_subcommand("compare", "fit several models and tabulate their MSE");
    add_fit_flags(compare);
    compare->add_option("--models", models)->delimiter(',')->capture_default_str();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
        app.parse(rev);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << one_line(e.what()) << '\n';
        return 1;
    }

    try {
        if (price->parsed()) return cmd_price(mf, maturity, strike, json, out);
        if (density->parsed()) {
            Sink sink(out_path, out);
            return cmd_density(mf_density, maturity, points, s_min, s_max, method, n_space, n_time, sink.get());
        }
        if (curve->parsed()) {
            Sink sink(out_path, out);
            return cmd_curve(mf_curve, maturity, curve_strike, alphas, hursts, family, threads, sink.get());
        }
        if (simulate->parsed()) {
            Sink sink(out_path, out);
            return cmd_simulate(mf_sim, horizon, steps, paths, seed, threads, sink.get());
        }
        if (verify_cmd->parsed()) return cmd_verify(mf_verify, maturity, strike, mc_paths, mc_steps, seed, threads, out);

        calibrate::Mode mode;
        if (mode_str == "joint") mode = calibrate::Mode::Joint;
        else if (mode_str == "per_maturity") mode = calibrate::Mode::PerMaturity;
        else throw UsageError("--mode must be 'joint' or 'per_maturity'");
        opt.seed = seed;
        opt.threads = threads;
        opt.validate();
        auto kind = [](const std::string& name) {
            auto m = pricing::parse_model_name(name);
            if (!m) throw UsageError("unknown model '" + name + "'");
            return *m;
        };
        if (calibrate_cmd->parsed()) {
            const auto k = kind(model_name);
            const auto chain = read_chain(input, filter, err);
            const auto report = calibrate::fit(chain, k, mode, opt);
            Sink sink(out_path, out);
            calibrate::write_json(sink.get(), report);
            for (const auto& w : report.warnings) err << "warning: " << w << '\n';
            return report.converged ? 0 : 2;
        }
        std::vector<ModelSpec> catalog;
        for (const auto& name : models) catalog.push_back(kind(name));
        const auto chain = read_chain(input, filter, err);
        const auto rows = calibrate::compare_models(chain, catalog, mode, opt);
        Sink sink(out_path, out);
        calibrate::write_json(sink.get(), rows);
        bool ok = true;
        for (const auto& r : rows) {
            if (!r.ok) err << "warning: " << r.model << " failed: " << one_line(r.error) << '\n';
            ok = ok && r.ok && r.report.converged;
        }
        return ok ? 0 : 2;
    } catch (const std::exception& e) {
        err << "error: " << kind_of(e) << ": " << one_line(e.what()) << '\n';
        return 1;
    }
}

}  // namespace msfcev::cli
