#pragma once

// Independent checks on the closed forms: quadrature over the transition
// density, a Crank-Nicolson Fokker-Planck solver in x = S^(2-alpha), and
// Monte Carlo pricers for the cases where exact or Ito-Euler sampling is
// legitimate (BS family; classical CEV).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "msfcev/pricing.hpp"

namespace msfcev::verify {

using pricing::MarketEnv;
using pricing::ModelSpec;

// Globally adaptive Gauss-Kronrod (7/15) on [a, b]. Throws NumericalError
// when the error estimate is still above max(abs_tol, rel_tol * |I|) with
// max_intervals pieces.
double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol = 1e-10,
                 double abs_tol = 0.0, unsigned max_intervals = 2000);

// Phi(T) by quadrature of sigma^2 (2-alpha)^2 Int_0^T a(T-u) e^{(2-alpha) r u} du.
double effective_variance_quadrature(const ModelSpec& model, const MarketEnv& env, double maturity);

// e^{-rT} Int max(S - E, 0) p(S) dS over transition_density. strike = 0 is
// admitted and gives e^{-rT} E[S_T].
double quadrature_price(const ModelSpec& model, const MarketEnv& env, double maturity, double strike,
                        double rel_tol = 1e-8);

struct FpeGrid {
    double x_min = 0.0;
    double x_max = 1.0;
    int n_space = 2000;
    int n_time = 1000;

    void validate() const;

    // x0 e^{(2-alpha) r T} +- `width` standard deviations of x_T, clipped at 0.
    static FpeGrid around(const ModelSpec& model, const MarketEnv& env, double maturity, int n_space = 2000,
                          int n_time = 1000, double width = 12.0);
};

struct FpeSolution {
    std::vector<double> x;          // cell centres
    std::vector<double> density_x;  // density of x_T at the centres
    std::vector<double> spot;       // S_T = x^(1/(2-alpha))
    std::vector<double> density_s;  // density of S_T
    double cell_width = 0.0;
    double mass = 0.0;       // remaining on the grid
    double absorbed = 0.0;   // flux out through x = 0 (only when x_min = 0)
    double truncated = 0.0;  // flux out through artificial boundaries
    double max_drift = 0.0;  // worst |mass + absorbed + truncated - 1| over the steps

    // Int |p_fpe - p_closed| dx; equal to the L1 distance in S.
    double l1_distance(const ModelSpec& model, const MarketEnv& env, double maturity) const;
};

// Crank-Nicolson (Rannacher start, time grid graded as (n/N)^2) finite-volume
// solution from a Gaussian of width two cells at x0 = initial_spot^(2-alpha).
// env.rate is used; env.spot is ignored in favour of initial_spot.
// Throws NumericalError when mass accounting drifts by more than 1e-3.
FpeSolution solve_fpe(const ModelSpec& model, const MarketEnv& env, double maturity, const FpeGrid& grid,
                      double initial_spot);

// Header `S_T,density`.
void write_density_csv(std::ostream& out, const std::vector<double>& spot, const std::vector<double>& density);

struct McConfig {
    std::size_t n_paths = 100'000;
    int n_steps = 400;  // Euler schemes only
    std::uint64_t seed = 0;
    bool antithetic = false;
    unsigned threads = 1;

    void validate() const;
};

struct McResult {
    double price = 0.0;
    double standard_error = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::string warning;  // empty unless a diagnostic applies
};

// Exact terminal sampling for the BS family.
McResult mc_price_msfbs(const ModelSpec& model, const MarketEnv& env, double maturity, double strike,
                        const McConfig& cfg);

// Euler-Maruyama on the classical CEV SDE, absorbed at zero.
McResult mc_price_cev_classical(const ModelSpec& model, const MarketEnv& env, double maturity, double strike,
                                const McConfig& cfg);

// {"price": ..., "se": ..., "n_paths": ..., "seed": ...}
void write_json(std::ostream& out, const McResult& result);

}  // namespace msfcev::verify
