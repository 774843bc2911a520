#include "msfcev/verify.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>

#include "msfcev/errors.hpp"
#include "msfcev/parallel.hpp"
#include "msfcev/rng.hpp"

namespace msfcev::verify {

using pricing::Driver;
using pricing::Family;

namespace {

void require_cev(const ModelSpec& model, const char* op) {
    if (model.family != Family::CEV) throw DomainError(std::string(op) + " requires the CEV family");
}

// Weight c of the fractional kernel, lambda(t) = c H t^(2H-1).
double kernel_weight(const ModelSpec& model) {
    const double h = model.driver_params.hurst;
    return model.driver == Driver::MixedSubFractional ? 2.0 - std::pow(2.0, 2.0 * h - 1.0) : 1.0;
}

// Time average of a(t) = beta^2/2 + gamma^2 lambda(t) over [t0, t1], using
// Int_0^t lambda = c t^(2H) / 2.
double mean_coefficient(const ModelSpec& model, double t0, double t1) {
    const auto& p = model.driver_params;
    if (model.driver == Driver::Classical) return 0.5 * (p.beta * p.beta + p.gamma * p.gamma);
    const double c = kernel_weight(model);
    const double h2 = 2.0 * p.hurst;
    const double lambda_mean = 0.5 * c * (std::pow(t1, h2) - std::pow(t0, h2)) / (t1 - t0);
    return 0.5 * p.beta * p.beta + p.gamma * p.gamma * lambda_mean;
}

// Solves a tridiagonal system in place (Thomas). lower[0] and upper[n-1]
// are unused.
void solve_tridiagonal(std::vector<double>& lower, std::vector<double>& diag, std::vector<double>& upper,
                       std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

struct Moments {
    double mean;
    double se;
};

Moments mean_and_se(const std::vector<double>& samples) {
    const double n = static_cast<double>(samples.size());
    double sum = 0.0, comp = 0.0;
    for (double v : samples) {  // Neumaier: the result must not depend on accumulation order noise
        const double t = sum + v;
        comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    const double mean = (sum + comp) / n;
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol, double abs_tol,
                 unsigned max_intervals) {
    if (!(b >= a)) throw DomainError("integrate needs a <= b");
    if (a == b) return 0.0;
    using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;
    struct Piece {
        double a, b, value, error;
        bool operator<(const Piece& o) const { return error < o.error; }
    };
    auto rule = [&](double lo, double hi) {
        double err = 0.0;
        const double v = Rule::integrate(f, lo, hi, 0, 0.0, &err);
        return Piece{lo, hi, v, err};
    };
    // Global adaptive bisection: always split the piece with the largest
    // error estimate.
    std::priority_queue<Piece> pieces;
    pieces.push(rule(a, b));
    double value = pieces.top().value, error = pieces.top().error;
    while (error > std::max(abs_tol, rel_tol * std::abs(value))) {
        if (pieces.size() >= max_intervals || !std::isfinite(value)) {
            std::ostringstream msg;
            msg << "quadrature did not converge on [" << a << ", " << b << "]: estimate " << value << ", error "
                << error;
            throw NumericalError(msg.str());
        }
        const Piece worst = pieces.top();
        pieces.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        const Piece left = rule(worst.a, mid), right = rule(mid, worst.b);
        pieces.push(left);
        pieces.push(right);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        if (pieces.size() % 64 == 0) {  // refresh sums against drift
            auto copy = pieces;
            value = error = 0.0;
            while (!copy.empty()) {
                value += copy.top().value;
                error += copy.top().error;
                copy.pop();
            }
        }
    }
    return value;
}

double effective_variance_quadrature(const ModelSpec& model, const MarketEnv& env, double maturity) {
    require_cev(model, "effective_variance_quadrature");
    model.validate();
    env.validate();
    if (!(maturity > 0.0)) throw DomainError("maturity must be > 0");
    const auto& p = model.driver_params;
    const double b = 2.0 - model.alpha;
    const double growth = b * env.rate;
    const double scale = model.sigma * model.sigma * b * b;

    // Constant part of a(t).
    const double flat = model.driver == Driver::Classical ? 0.5 * (p.beta * p.beta + p.gamma * p.gamma)
                                                          : 0.5 * p.beta * p.beta;
    const double brownian =
        flat * integrate([&](double u) { return std::exp(growth * u); }, 0.0, maturity, 1e-13);
    if (model.driver == Driver::Classical || p.gamma == 0.0) return scale * brownian;

    // Int_0^T lambda(tau) e^{growth (T - tau)} dtau. lambda has an algebraic
    // endpoint singularity in its derivative; tanh-sinh absorbs it.
    const double h2 = 2.0 * p.hurst;
    boost::math::quadrature::tanh_sinh<double> rule;
    double error = 0.0;
    const double frac = rule.integrate(
        [&](double tau) {
            return kernel_weight(model) * p.hurst * std::pow(tau, h2 - 1.0) * std::exp(growth * (maturity - tau));
        },
        0.0, maturity, 1e-14, &error);
    if (!std::isfinite(frac) || error > 1e-11 * std::abs(frac))
        throw NumericalError("effective_variance_quadrature: tanh-sinh did not converge");
    return scale * (brownian + p.gamma * p.gamma * frac);
}

double quadrature_price(const ModelSpec& model, const MarketEnv& env, double maturity, double strike,
                        double rel_tol) {
    require_cev(model, "quadrature_price");
    if (!(std::isfinite(strike) && strike >= 0.0)) throw DomainError("strike must be >= 0");
    const auto in = pricing::cev_intermediates(model, env, maturity, strike);
    const double nu = 1.0 / (2.0 - model.alpha);

    // In u = sqrt(k S^(2-alpha)) the density is close to a Gaussian of
    // width 1/sqrt(2) around sqrt(y).
    auto spot_of = [&](double u) { return std::pow(u * u / in.k_s, nu); };
    auto integrand = [&](double u) {
        if (u <= 0.0) return 0.0;
        const double s = spot_of(u);
        if (!(s > 0.0) || !std::isfinite(s)) return 0.0;
        return (s - strike) * pricing::transition_density(model, env, maturity, s) * 2.0 * nu * s / u;
    };
    const double lo = std::sqrt(in.z_s);
    const double centre = std::sqrt(in.y_s);
    const double hi = std::max(centre, lo) + 40.0;
    std::vector<double> cuts{lo};
    for (double c : {centre - 10.0, centre - 3.0, centre, centre + 3.0, centre + 10.0})
        if (c > lo && c < hi) cuts.push_back(c);
    cuts.push_back(hi);

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        total += integrate(integrand, cuts[i], cuts[i + 1], rel_tol * 1e-2, 1e-12 * env.spot);
    return std::exp(-env.rate * maturity) * total;
}

void FpeGrid::validate() const {
    if (!(x_min >= 0.0 && x_max > x_min && std::isfinite(x_max))) throw DomainError("FpeGrid needs 0 <= x_min < x_max");
    if (n_space < 50 || n_time < 50) throw DomainError("FpeGrid needs n_space >= 50 and n_time >= 50");
}

FpeGrid FpeGrid::around(const ModelSpec& model, const MarketEnv& env, double maturity, int n_space, int n_time,
                        double width) {
    const double b = 2.0 - model.alpha;
    const double phi = pricing::effective_variance(model, env, maturity);
    const double mean = std::pow(env.spot, b) * std::exp(b * env.rate * maturity);
    const double sd = std::sqrt(2.0 * mean * phi + 4.0 * phi * phi);
    FpeGrid g{std::max(0.0, mean - width * sd), mean + width * sd, n_space, n_time};
    // Keep the start point well inside.
    const double x0 = std::pow(env.spot, b);
    g.x_min = std::max(0.0, std::min(g.x_min, x0 - width * sd));
    return g;
}

FpeSolution solve_fpe(const ModelSpec& model, const MarketEnv& env, double maturity, const FpeGrid& grid,
                      double initial_spot) {
    require_cev(model, "solve_fpe");
    model.validate();
    env.validate();
    grid.validate();
    if (!(maturity > 0.0)) throw DomainError("maturity must be > 0");
    if (!(initial_spot > 0.0)) throw DomainError("initial spot must be > 0");

    const double b = 2.0 - model.alpha;
    const double s2 = model.sigma * model.sigma;
    const auto n = static_cast<std::size_t>(grid.n_space);
    const double h = (grid.x_max - grid.x_min) / static_cast<double>(n);
    const double x0 = std::pow(initial_spot, b);
    if (x0 < grid.x_min + 10.0 * h || x0 > grid.x_max - 10.0 * h)
        throw DomainError("FPE grid must contain x0 = S0^(2-alpha) with a margin of 10 cells");
    const bool origin = grid.x_min == 0.0;

    std::vector<double> centre(n), face(n + 1);
    for (std::size_t i = 0; i < n; ++i) centre[i] = grid.x_min + (static_cast<double>(i) + 0.5) * h;
    for (std::size_t j = 0; j <= n; ++j) face[j] = grid.x_min + static_cast<double>(j) * h;

    // Flux through face j: F_j = fl_j P_{j-1} + fr_j P_j, with diffusion
    // D = a b^2 s2 x and drift A = b r x + a b (1-alpha) s2. Split into the
    // a-independent part (suffix 0) and the part proportional to a (suffix 1).
    std::vector<double> fl0(n + 1, 0.0), fr0(n + 1, 0.0), fl1(n + 1, 0.0), fr1(n + 1, 0.0);
    for (std::size_t j = 1; j < n; ++j) {
        const double a0 = b * env.rate * face[j];
        const double a1 = b * (1.0 - model.alpha) * s2;
        fl0[j] = 0.5 * a0;
        fr0[j] = 0.5 * a0;
        fl1[j] = 0.5 * a1 + b * b * s2 * centre[j - 1] / h;
        fr1[j] = 0.5 * a1 - b * b * s2 * centre[j] / h;
    }
    // Left: at the origin D vanishes and F = (A(0) - D'(0)) P(0) = -a b s2 P
    // (outflow into the absorbed state); elsewhere a zero-density wall.
    const double left1 = origin ? -b * s2 : -2.0 * b * b * s2 * centre[0] / h;
    const double right1 = 2.0 * b * b * s2 * centre[n - 1] / h;

    std::vector<double> p(n);
    {
        const double width = 2.0 * h;
        double mass = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (centre[i] - x0) / width;
            p[i] = std::exp(-0.5 * d * d);
            mass += p[i] * h;
        }
        for (double& v : p) v /= mass;
    }

    // Graded time grid; the first two intervals are each replaced by two
    // implicit half steps (Rannacher) to damp the sharp initial data.
    struct Step {
        double t0, t1, theta;
    };
    std::vector<Step> steps;
    const auto nt = static_cast<std::size_t>(grid.n_time);
    auto time_at = [&](std::size_t k) {
        const double s = static_cast<double>(k) / static_cast<double>(nt);
        return maturity * s * s;
    };
    for (std::size_t k = 0; k < nt; ++k) {
        const double t0 = time_at(k), t1 = time_at(k + 1);
        if (k < 2) {
            const double mid = 0.5 * (t0 + t1);
            steps.push_back({t0, mid, 1.0});
            steps.push_back({mid, t1, 1.0});
        } else {
            steps.push_back({t0, t1, 0.5});
        }
    }

    auto apply = [&](const std::vector<double>& v, double a, std::size_t i) {
        // (L v)_i = (F_i - F_{i+1}) / h
        double left_flux = i == 0 ? a * left1 * v[0] : (fl0[i] + a * fl1[i]) * v[i - 1] + (fr0[i] + a * fr1[i]) * v[i];
        double right_flux = i == n - 1 ? a * right1 * v[n - 1]
                                       : (fl0[i + 1] + a * fl1[i + 1]) * v[i] + (fr0[i + 1] + a * fr1[i + 1]) * v[i + 1];
        return (left_flux - right_flux) / h;
    };

    FpeSolution out;
    double out_left = 0.0, out_right = 0.0;
    std::vector<double> lower(n), diag(n), upper(n), rhs(n);
    for (const auto& st : steps) {
        const double dt = st.t1 - st.t0;
        const double a = mean_coefficient(model, st.t0, st.t1);
        const double flux_l0 = a * left1 * p[0], flux_r0 = a * right1 * p[n - 1];
        for (std::size_t i = 0; i < n; ++i) {
            rhs[i] = p[i] + (1.0 - st.theta) * dt * apply(p, a, i);
            // Row i of (I - theta dt L).
            const double c = st.theta * dt / h;
            double d_self = 0.0;
            if (i == 0) {
                d_self += a * left1;
                lower[i] = 0.0;
            } else {
                d_self += fr0[i] + a * fr1[i];
                lower[i] = -c * (fl0[i] + a * fl1[i]);
            }
            if (i == n - 1) {
                d_self -= a * right1;
                upper[i] = 0.0;
            } else {
                d_self -= fl0[i + 1] + a * fl1[i + 1];
                upper[i] = c * (fr0[i + 1] + a * fr1[i + 1]);
            }
            diag[i] = 1.0 - c * d_self;
        }
        solve_tridiagonal(lower, diag, upper, rhs);
        p.swap(rhs);
        const double flux_l1 = a * left1 * p[0], flux_r1 = a * right1 * p[n - 1];
        out_left -= dt * (st.theta * flux_l1 + (1.0 - st.theta) * flux_l0);
        out_right += dt * (st.theta * flux_r1 + (1.0 - st.theta) * flux_r0);

        double mass = 0.0;
        for (double v : p) mass += v * h;
        out.max_drift = std::max(out.max_drift, std::abs(mass + out_left + out_right - 1.0));
        if (!std::isfinite(mass) || out.max_drift > 1e-3) {
            std::ostringstream msg;
            msg << "FPE mass accounting drifted by " << out.max_drift << " at t = " << st.t1
                << "; refine the grid (n_space = " << grid.n_space << ", n_time = " << grid.n_time << ")";
            throw NumericalError(msg.str());
        }
        out.mass = mass;
    }

    out.absorbed = origin ? out_left : 0.0;
    out.truncated = out_right + (origin ? 0.0 : out_left);
    out.cell_width = h;
    out.x = centre;
    out.density_x = p;
    out.spot.resize(n);
    out.density_s.resize(n);
    const double nu = 1.0 / b;
    for (std::size_t i = 0; i < n; ++i) {
        out.spot[i] = std::pow(centre[i], nu);
        out.density_s[i] = p[i] * b * centre[i] / out.spot[i];  // dx/dS = b S^(1-alpha) = b x / S
    }
    return out;
}

double FpeSolution::l1_distance(const ModelSpec& model, const MarketEnv& env, double maturity) const {
    const double nu = 1.0 / (2.0 - model.alpha);
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = spot[i];
        const double exact = pricing::transition_density(model, env, maturity, s) * nu * s / x[i];
        sum += std::abs(density_x[i] - exact);
    }
    return sum * cell_width;
}

void write_density_csv(std::ostream& out, const std::vector<double>& spot, const std::vector<double>& density) {
    if (spot.size() != density.size()) throw DomainError("density CSV needs equal-length columns");
    out << "S_T,density\n" << std::setprecision(17);
    for (std::size_t i = 0; i < spot.size(); ++i) out << spot[i] << ',' << density[i] << '\n';
}

void McConfig::validate() const {
    if (n_paths < 1000) throw DomainError("n_paths must be >= 1000");
    if (n_steps < 10) throw DomainError("n_steps must be >= 10");
    if (antithetic && n_paths % 2 != 0) throw DomainError("antithetic sampling needs an even n_paths");
}

McResult mc_price_msfbs(const ModelSpec& model, const MarketEnv& env, double maturity, double strike,
                        const McConfig& cfg) {
    if (model.family != Family::BS) throw DomainError("mc_price_msfbs requires the BS family");
    model.validate();
    env.validate();
    cfg.validate();
    if (!(strike > 0.0)) throw DomainError("strike must be > 0");
    const double var = pricing::bs_total_variance(model, maturity);
    const double sd = std::sqrt(var);
    const double drift = env.rate * maturity - 0.5 * var;
    const double discount = std::exp(-env.rate * maturity);

    // One sample per draw; an antithetic pair counts as two paths but one
    // independent sample (their average).
    const std::size_t draws = cfg.antithetic ? cfg.n_paths / 2 : cfg.n_paths;
    std::vector<double> samples(draws);
    parallel_for(draws, cfg.threads, [&](std::size_t begin, std::size_t end) {
        std::normal_distribution<double> normal;
        for (std::size_t i = begin; i < end; ++i) {
            auto rng = Xoshiro256::substream(cfg.seed, i);
            normal.reset();
            const double z = normal(rng);
            auto payoff = [&](double g) { return std::max(env.spot * std::exp(drift + sd * g) - strike, 0.0); };
            samples[i] = discount * (cfg.antithetic ? 0.5 * (payoff(z) + payoff(-z)) : payoff(z));
        }
    });
    const auto m = mean_and_se(samples);
    return {m.mean, m.se, cfg.n_paths, cfg.seed, {}};
}

McResult mc_price_cev_classical(const ModelSpec& model, const MarketEnv& env, double maturity, double strike,
                                const McConfig& cfg) {
    require_cev(model, "mc_price_cev_classical");
    if (model.driver != Driver::Classical) throw DomainError("Euler simulation is only valid for the classical driver");
    model.validate();
    env.validate();
    cfg.validate();
    if (!(maturity > 0.0)) throw DomainError("maturity must be > 0");
    if (!(strike > 0.0)) throw DomainError("strike must be > 0");

    const auto& p = model.driver_params;
    const double vol = model.sigma * std::sqrt(p.beta * p.beta + p.gamma * p.gamma);
    const double dt = maturity / cfg.n_steps;
    const double sqrt_dt = std::sqrt(dt);
    const double half_alpha = 0.5 * model.alpha;
    const double discount = std::exp(-env.rate * maturity);

    const std::size_t draws = cfg.antithetic ? cfg.n_paths / 2 : cfg.n_paths;
    std::vector<double> samples(draws);
    parallel_for(draws, cfg.threads, [&](std::size_t begin, std::size_t end) {
        std::normal_distribution<double> normal;
        for (std::size_t i = begin; i < end; ++i) {
            auto rng = Xoshiro256::substream(cfg.seed, i);
            normal.reset();
            double s = env.spot, s_anti = env.spot;
            for (int k = 0; k < cfg.n_steps; ++k) {
                const double z = normal(rng);
                if (s > 0.0) {
                    s += env.rate * s * dt + vol * std::pow(s, half_alpha) * sqrt_dt * z;
                    if (s <= 0.0) s = 0.0;
                }
                if (cfg.antithetic && s_anti > 0.0) {
                    s_anti += env.rate * s_anti * dt - vol * std::pow(s_anti, half_alpha) * sqrt_dt * z;
                    if (s_anti <= 0.0) s_anti = 0.0;
                }
            }
            const double pay = std::max(s - strike, 0.0);
            samples[i] = discount * (cfg.antithetic ? 0.5 * (pay + std::max(s_anti - strike, 0.0)) : pay);
        }
    });
    const auto m = mean_and_se(samples);
    McResult r{m.mean, m.se, cfg.n_paths, cfg.seed, {}};
    if (cfg.n_steps < 200.0 * maturity) {
        std::ostringstream msg;
        msg << "n_steps = " << cfg.n_steps << " is below 200 * T = " << 200.0 * maturity
            << "; Euler discretization bias may exceed the statistical error";
        r.warning = msg.str();
    }
    return r;
}

void write_json(std::ostream& out, const McResult& result) {
    nlohmann::json j{{"price", result.price}, {"se", result.standard_error}, {"n_paths", result.n_paths},
                     {"seed", result.seed}};
    if (!result.warning.empty()) j["warning"] = result.warning;
    out << j.dump(2) << '\n';
}

}  // namespace msfcev::verify
