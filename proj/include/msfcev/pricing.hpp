#pragma once

// Closed-form European call pricing for the CEV and Black-Scholes families
// driven by a classical, mixed fractional or mixed sub-fractional Brownian
// motion.
//
// CEV dynamics: dS = r S dt + sigma S^(alpha/2) dM, with M the driver.
// Under x = S^(2-alpha) the Fokker-Planck equation is a square-root
// diffusion whose coefficients share the time factor
//     a(t) = beta^2 / 2 + gamma^2 * lambda(t),
// so a deterministic time change reduces it to Feller's constant-coefficient
// problem. Everything then hinges on the effective variance
//     Phi(T) = sigma^2 (2-alpha)^2 * Int_0^T a(T-u) e^{(2-alpha) r u} du,
// with k = 1 / Phi(T).

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msfcev/process.hpp"

namespace msfcev::pricing {

enum class Family { BS, CEV };
enum class Driver { Classical, MixedFractional, MixedSubFractional };

// Largest admissible CEV elasticity.
inline constexpr double kMaxAlpha = 2.0 - 1e-6;

struct ModelSpec {
    Family family = Family::CEV;
    Driver driver = Driver::MixedSubFractional;
    double sigma = 0.3;
    double alpha = 1.0;  // ignored by the BS family
    process::MixedDriverParams driver_params{0.7, 1.0, 1.0};

    // sigma > 0; 0 <= alpha <= kMaxAlpha for CEV; mixed drivers need
    // 1/2 <= H < 1.
    void validate() const;

    // Classical driver with beta_eff = sqrt(beta^2 + gamma^2), gamma = 0.
    // Mixed drivers at H = 1/2 collapse to this as well.
    ModelSpec canonical() const;
};

// "bs", "mfbs", "msfbs", "cev", "mfcev", "msfcev".
std::string model_name(Family family, Driver driver);
inline std::string model_name(const ModelSpec& m) { return model_name(m.family, m.driver); }
// Sets family and driver from a name, keeping the remaining fields.
std::optional<ModelSpec> parse_model_name(std::string_view name, ModelSpec base = {});

struct MarketEnv {
    double rate = 0.05;  // continuously compounded, per year
    double spot = 100.0;

    void validate() const;
};

struct PricingIntermediates {
    double phi = 0.0;  // effective variance Phi(T)
    double k_s = 0.0;  // 1 / Phi(T)
    double y_s = 0.0;  // k_s S0^(2-alpha) e^{r(2-alpha)T}
    double w_s = 0.0;  // k_s S_T^(2-alpha), density evaluation only
    double z_s = 0.0;  // k_s E^(2-alpha)
};

// Second-order Ito coefficient lambda(t) of the driver: 1/2 (classical),
// H t^(2H-1) (fractional), H t^(2H-1) (2 - 2^(2H-1)) (sub-fractional).
double diffusion_kernel(Driver driver, double hurst, double t);

// Phi(T) in closed form (CEV family).
double effective_variance(const ModelSpec& model, const MarketEnv& env, double maturity);

// Terminal variance of log S for the BS family: sigma^2 Var(M_T).
double bs_total_variance(const ModelSpec& model, double maturity);

PricingIntermediates cev_intermediates(const ModelSpec& model, const MarketEnv& env, double maturity,
                                       double strike);

// Transition density of S_T given S_0 (CEV family). Integrates to
// 1 - absorption_probability.
double transition_density(const ModelSpec& model, const MarketEnv& env, double maturity, double terminal_price);

// Probability that the CEV price has been absorbed at zero by `maturity`.
double absorption_probability(const ModelSpec& model, const MarketEnv& env, double maturity);

// Black-Scholes call with terminal log-variance `total_variance`.
double black_scholes_call(double spot, double strike, double rate, double maturity, double total_variance);

double call_price(const ModelSpec& model, const MarketEnv& env, double maturity, double strike);

// Time value C - max(S0 - E e^{-rT}, 0) of the call. In the money it is
// evaluated from the complementary tails (each summed directly) rather than
// by subtraction, so it keeps relative accuracy where the call price itself
// is intrinsic value to every representable digit. Relies on the discounted
// CEV price being a martingale with absorption at zero.
double time_value(const ModelSpec& model, const MarketEnv& env, double maturity, double strike);

struct CurveRow {
    double alpha;
    double hurst;
    Driver driver;
    double price;
};

// call_price over alpha_grid x hurst_set for the mixed fractional and mixed
// sub-fractional drivers, rows ordered alpha-major, then hurst, then driver.
std::vector<CurveRow> price_curve(const ModelSpec& model_template, const MarketEnv& env, double maturity,
                                  double strike, const std::vector<double>& alpha_grid,
                                  const std::vector<double>& hurst_set, unsigned threads = 1);

// Header `alpha,hurst,driver,price`.
void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows, Family family);

}  // namespace msfcev::pricing
