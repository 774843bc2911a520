#pragma once

// Least-squares calibration of the model catalog to European call quotes,
// jointly over all maturities or separately per maturity.
//
// Free parameters: BS (sigma); mfBS, msfBS (sigma, H); CEV (sigma, alpha);
// mfCEV, msfCEV (sigma, alpha, H). Mixed drivers use beta = gamma = 1,
// the classical driver beta = 1, gamma = 0.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msfcev/pricing.hpp"

namespace msfcev::calibrate {

using pricing::Driver;
using pricing::Family;
using pricing::ModelSpec;

struct MarketQuote {
    double strike = 0.0;
    double maturity = 0.0;  // years
    double mid_price = 0.0;
    double spot = 0.0;
    double rate = 0.0;

    void validate() const;
};

struct OptionChain {
    std::string quote_date;
    std::vector<MarketQuote> quotes;
};

struct LoadOptions {
    // Keep only calls at most 5% in the money: strike >= 0.95 spot.
    bool moneyness_filter = false;
};

// Reads `quote_date,spot,rate,strike,maturity_years,mid_price`. Malformed
// header or rows throw ParseError; rows that parse but violate an invariant
// (or a different quote_date / spot, or the moneyness filter) are skipped
// and described in `diagnostics` ("line N: ..."). Throws EmptyChainError
// when nothing is left.
OptionChain load_chain(std::istream& in, const LoadOptions& options = {},
                       std::vector<std::string>* diagnostics = nullptr);

void write_chain(std::ostream& out, const OptionChain& chain);

// Names of the free parameters of family/driver, in vector order.
std::vector<std::string> free_parameters(Family family, Driver driver);

struct Bounds {
    double lo;
    double hi;
};
Bounds parameter_bounds(const std::string& name);

// `kind` supplies family and driver; params follow free_parameters order.
// Throws DomainError for wrong arity or out-of-bounds values.
ModelSpec make_model(const ModelSpec& kind, std::span<const double> params);

// Mean over quotes of (call_price - mid)^2. Order-independent (squared
// errors are summed in sorted order). Returns +infinity if params are out of
// bounds or any quote fails to price.
double mse_objective(const ModelSpec& kind, std::span<const double> params, const OptionChain& chain);

enum class Mode { Joint, PerMaturity };
std::string mode_name(Mode mode);

struct OptimizerConfig {
    int starts = 8;
    int max_iterations = 400;  // per Nelder-Mead run
    double ftol = 1e-10;       // simplex value spread, relative to 1 + |f|; prices carry ~1e-10 round-off
    double xtol = 1e-7;        // simplex diameter, as a fraction of each parameter's range
    std::uint64_t seed = 0;
    unsigned threads = 1;

    void validate() const;
};

struct CalibrationReport {
    std::string model;
    Mode mode = Mode::Joint;
    // Group label ("joint" or the maturity in years) -> parameter name -> value.
    std::map<std::string, std::map<std::string, double>> fitted;
    std::map<double, double> mse_per_maturity;
    double total_mse = 0.0;  // mean of squared errors over all quotes in scope
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

// Multi-start Nelder-Mead on a logistic reparameterization of the bounded
// box. Deterministic given (chain, kind, mode, cfg). PerMaturity mode
// includes the joint optimum among each group's starts; groups with fewer
// than two quotes keep the joint parameters and are reported in warnings.
CalibrationReport fit(const OptionChain& chain, const ModelSpec& kind, Mode mode, const OptimizerConfig& cfg = {});

struct ComparisonRow {
    std::string model;
    bool ok = false;
    std::string error;  // set when !ok
    CalibrationReport report;
};

// One fit per catalog entry; a failing model is recorded, not rethrown.
std::vector<ComparisonRow> compare_models(const OptionChain& chain, const std::vector<ModelSpec>& catalog, Mode mode,
                                          const OptimizerConfig& cfg = {});

void write_json(std::ostream& out, const CalibrationReport& report);
void write_json(std::ostream& out, const std::vector<ComparisonRow>& rows);

// Quotes priced by `model` on strikes K = F exp(m s sqrt(T)), m evenly
// spaced on [-1.5, 0.75], F the forward and s the local volatility at the
// spot, plus Normal(0, noise_sd^2) noise.
OptionChain synthetic_chain(const ModelSpec& model, const pricing::MarketEnv& env,
                            const std::vector<double>& maturities, int strikes_per_maturity, double noise_sd = 0.0,
                            std::uint64_t seed = 0);

}  // namespace msfcev::calibrate
