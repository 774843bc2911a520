#include "msfcev/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "msfcev/errors.hpp"
#include "msfcev/parallel.hpp"
#include "msfcev/specfun.hpp"

namespace msfcev::pricing {

namespace {

bool is_mixed(Driver d) { return d != Driver::Classical; }

// Prices need the tails to absolute accuracy only; time_value keeps the
// default relative accuracy.
constexpr specfun::Tolerance kPriceTolerance{1e-13, 1e-12, 10'000, false};

void require_cev(const ModelSpec& model, const char* op) {
    if (model.family != Family::CEV) throw DomainError(std::string(op) + " requires the CEV family");
}

void require_maturity(double maturity) {
    if (!(std::isfinite(maturity) && maturity > 0.0)) throw DomainError("maturity must be > 0");
}

// Int_0^T e^{b u} du with b T = z, written as T * expm1(z) / z. The series
// branch keeps r = 0 (and tiny r T) free of any division by r.
double exp_growth_integral(double maturity, double z) {
    if (std::abs(z) < 1e-6) return maturity * (1.0 + z / 2.0 + z * z / 6.0);
    return maturity * std::expm1(z) / z;
}

// Weight of the sub-fractional term relative to the fractional one:
// 2 (1 - 2^(2H-2)) = 2 - 2^(2H-1).
double subfractional_factor(double hurst) { return 2.0 - std::pow(2.0, 2.0 * hurst - 1.0); }

}  // namespace

void ModelSpec::validate() const {
    if (!(std::isfinite(sigma) && sigma > 0.0)) throw DomainError("sigma must be > 0");
    driver_params.validate();
    if (family == Family::CEV && !(alpha >= 0.0 && alpha <= kMaxAlpha))
        throw DomainError("alpha must lie in [0, 2 - 1e-6] for the CEV family");
    if (is_mixed(driver) && !(driver_params.hurst >= 0.5 && driver_params.hurst < 1.0))
        throw DomainError("mixed drivers require 1/2 <= H < 1");
}

ModelSpec ModelSpec::canonical() const {
    const auto& p = driver_params;
    if (driver != Driver::Classical && p.hurst != 0.5 && p.gamma != 0.0) return *this;
    ModelSpec out = *this;
    out.driver = Driver::Classical;
    out.driver_params = {0.5, std::hypot(p.beta, p.gamma), 0.0};
    return out;
}

std::string model_name(Family family, Driver driver) {
    std::string prefix = driver == Driver::Classical ? "" : driver == Driver::MixedFractional ? "mf" : "msf";
    return prefix + (family == Family::BS ? "bs" : "cev");
}

std::optional<ModelSpec> parse_model_name(std::string_view name, ModelSpec base) {
    for (Family f : {Family::BS, Family::CEV}) {
        for (Driver d : {Driver::Classical, Driver::MixedFractional, Driver::MixedSubFractional}) {
            if (model_name(f, d) == name) {
                base.family = f;
                base.driver = d;
                return base;
            }
        }
    }
    return std::nullopt;
}

void MarketEnv::validate() const {
    if (!(std::isfinite(spot) && spot > 0.0)) throw DomainError("spot must be > 0");
    if (!(std::isfinite(rate) && rate >= 0.0)) throw DomainError("rate must be >= 0");
}

double diffusion_kernel(Driver driver, double hurst, double t) {
    if (!(t > 0.0)) throw DomainError("diffusion_kernel needs t > 0");
    if (driver == Driver::Classical) return 0.5;
    if (!(hurst >= 0.5 && hurst < 1.0)) throw DomainError("diffusion_kernel needs 1/2 <= H < 1");
    const double fractional = hurst * std::pow(t, 2.0 * hurst - 1.0);
    return driver == Driver::MixedFractional ? fractional : fractional * subfractional_factor(hurst);
}

double effective_variance(const ModelSpec& model, const MarketEnv& env, double maturity) {
    require_cev(model, "effective_variance");
    model.validate();
    env.validate();
    require_maturity(maturity);

    const double beta = model.driver_params.beta;
    const double gamma = model.driver_params.gamma;
    const double hurst = model.driver_params.hurst;
    const double elast = 2.0 - model.alpha;
    const double z = elast * env.rate * maturity;
    const double scale = model.sigma * model.sigma * elast * elast;

    if (model.driver == Driver::Classical)
        return 0.5 * scale * (beta * beta + gamma * gamma) * exp_growth_integral(maturity, z);

    const double brownian = 0.5 * scale * beta * beta * exp_growth_integral(maturity, z);
    // e^{z/2} z^{-H} M_{H,H+1/2}(z) = z M(1, 2H+2, z): the Whittaker
    // prefactors cancel analytically, which keeps T -> 0 and r = 0 finite.
    const double whittaker_term = z == 0.0 ? 0.0 : z * specfun::kummer_m(1.0, 2.0 * hurst + 2.0, z);
    const double weight = model.driver == Driver::MixedSubFractional ? 1.0 - std::pow(2.0, 2.0 * hurst - 2.0) : 0.5;
    const double fractional = gamma * gamma * scale / (2.0 * hurst + 1.0) * std::pow(maturity, 2.0 * hurst) *
                              weight * (2.0 * hurst + 1.0 + whittaker_term);
    return brownian + fractional;
}

double bs_total_variance(const ModelSpec& model, double maturity) {
    model.validate();
    require_maturity(maturity);
    const auto& p = model.driver_params;
    const double s2 = model.sigma * model.sigma;
    switch (model.driver) {
        case Driver::Classical:
            return s2 * (p.beta * p.beta + p.gamma * p.gamma) * maturity;
        case Driver::MixedFractional:
            return s2 * (p.beta * p.beta * maturity + p.gamma * p.gamma * std::pow(maturity, 2.0 * p.hurst));
        case Driver::MixedSubFractional:
            return s2 * (p.beta * p.beta * maturity +
                         p.gamma * p.gamma * subfractional_factor(p.hurst) * std::pow(maturity, 2.0 * p.hurst));
    }
    return 0.0;
}

PricingIntermediates cev_intermediates(const ModelSpec& model, const MarketEnv& env, double maturity,
                                       double strike) {
    if (!(std::isfinite(strike) && strike >= 0.0)) throw DomainError("strike must be >= 0");
    const double elast = 2.0 - model.alpha;
    PricingIntermediates out;
    out.phi = effective_variance(model, env, maturity);
    out.k_s = 1.0 / out.phi;
    out.y_s = out.k_s * std::pow(env.spot, elast) * std::exp(env.rate * elast * maturity);
    out.z_s = out.k_s * std::pow(strike, elast);
    return out;
}

double transition_density(const ModelSpec& model, const MarketEnv& env, double maturity, double terminal_price) {
    require_cev(model, "transition_density");
    if (!(std::isfinite(terminal_price) && terminal_price > 0.0))
        throw DomainError("transition_density needs S_T > 0");
    auto in = cev_intermediates(model, env, maturity, 0.0);
    const double elast = 2.0 - model.alpha;
    const double order = 1.0 / elast;
    in.w_s = in.k_s * std::pow(terminal_price, elast);
    if (in.w_s == 0.0) return 0.0;
    // e^{-y-w} I_nu(2 sqrt(yw)) = e^{-(sqrt y - sqrt w)^2} [e^{-x} I_nu(x)]
    const double x = 2.0 * std::sqrt(in.y_s * in.w_s);
    const double gap = std::sqrt(in.y_s) - std::sqrt(in.w_s);
    const double log_scaled_bessel = specfun::log_bessel_i_scaled(order, x);
    const double log_density = std::log(elast) + order * std::log(in.k_s) +
                               0.5 * order * (std::log(in.y_s) + (1.0 - 2.0 * model.alpha) * std::log(in.w_s)) -
                               gap * gap + log_scaled_bessel;
    return std::exp(log_density);
}

double absorption_probability(const ModelSpec& model, const MarketEnv& env, double maturity) {
    require_cev(model, "absorption_probability");
    const auto in = cev_intermediates(model, env, maturity, 0.0);
    return specfun::gamma_q(1.0 / (2.0 - model.alpha), in.y_s);
}

double black_scholes_call(double spot, double strike, double rate, double maturity, double total_variance) {
    const double discount = std::exp(-rate * maturity);
    if (strike == 0.0) return spot;
    if (total_variance <= 0.0) return std::max(spot - strike * discount, 0.0);
    const double sd = std::sqrt(total_variance);
    const double d1 = (std::log(spot / strike) + rate * maturity) / sd + 0.5 * sd;
    const double d2 = d1 - sd;
    return spot * specfun::normal_cdf(d1) - strike * discount * specfun::normal_cdf(d2);
}

double call_price(const ModelSpec& model, const MarketEnv& env, double maturity, double strike) {
    model.validate();
    env.validate();
    require_maturity(maturity);
    if (!(std::isfinite(strike) && strike > 0.0)) throw DomainError("strike must be > 0");

    if (model.family == Family::BS)
        return black_scholes_call(env.spot, strike, env.rate, maturity, bs_total_variance(model, maturity));

    const auto in = cev_intermediates(model, env, maturity, strike);
    const double order = 1.0 / (2.0 - model.alpha);
    const double asset_leg = specfun::chi2_noncentral_sf(2.0 * in.z_s, 2.0 + 2.0 * order, 2.0 * in.y_s, kPriceTolerance);
    const double strike_leg = specfun::chi2_noncentral_cdf(2.0 * in.y_s, 2.0 * order, 2.0 * in.z_s, kPriceTolerance);
    const double price = env.spot * asset_leg - strike * std::exp(-env.rate * maturity) * strike_leg;
    return std::clamp(price, 0.0, env.spot);
}

double time_value(const ModelSpec& model, const MarketEnv& env, double maturity, double strike) {
    model.validate();
    env.validate();
    require_maturity(maturity);
    if (!(std::isfinite(strike) && strike > 0.0)) throw DomainError("strike must be > 0");
    const double discounted = strike * std::exp(-env.rate * maturity);
    if (env.spot <= discounted) return call_price(model, env, maturity, strike);

    if (model.family == Family::BS) {
        const double var = bs_total_variance(model, maturity);
        const double sd = std::sqrt(var);
        const double d1 = (std::log(env.spot / strike) + env.rate * maturity) / sd + 0.5 * sd;
        return discounted * specfun::normal_cdf(-(d1 - sd)) - env.spot * specfun::normal_cdf(-d1);
    }

    const auto in = cev_intermediates(model, env, maturity, strike);
    const double order = 1.0 / (2.0 - model.alpha);
    const double asset_leg = specfun::chi2_noncentral_cdf(2.0 * in.z_s, 2.0 + 2.0 * order, 2.0 * in.y_s);
    const double strike_leg = specfun::chi2_noncentral_sf(2.0 * in.y_s, 2.0 * order, 2.0 * in.z_s);
    return std::clamp(discounted * strike_leg - env.spot * asset_leg, 0.0, discounted);
}

std::vector<CurveRow> price_curve(const ModelSpec& model_template, const MarketEnv& env, double maturity,
                                  double strike, const std::vector<double>& alpha_grid,
                                  const std::vector<double>& hurst_set, unsigned threads) {
    if (alpha_grid.empty() || hurst_set.empty()) throw DomainError("price_curve needs non-empty grids");
    std::vector<CurveRow> rows;
    rows.reserve(alpha_grid.size() * hurst_set.size() * 2);
    for (double a : alpha_grid)
        for (double h : hurst_set)
            for (Driver d : {Driver::MixedFractional, Driver::MixedSubFractional}) rows.push_back({a, h, d, 0.0});

    parallel_for(rows.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            ModelSpec m = model_template;
            m.driver = rows[i].driver;
            m.alpha = rows[i].alpha;
            m.driver_params.hurst = rows[i].hurst;
            rows[i].price = call_price(m, env, maturity, strike);
        }
    });
    return rows;
}

void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows, Family family) {
    out << "alpha,hurst,driver,price\n";
    out << std::setprecision(17);
    for (const auto& r : rows)
        out << r.alpha << ',' << r.hurst << ',' << model_name(family, r.driver) << ',' << r.price << '\n';
}

}  // namespace msfcev::pricing
