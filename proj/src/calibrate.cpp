#include "msfcev/calibrate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <random>
#include <sstream>

#include "msfcev/errors.hpp"
#include "msfcev/parallel.hpp"
#include "msfcev/rng.hpp"

namespace msfcev::calibrate {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr const char* kHeader = "quote_date,spot,rate,strike,maturity_years,mid_price";

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_number(const std::string& field, const char* name, std::size_t line) {
    double v = 0.0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (field.empty() || ec != std::errc() || ptr != end) throw ParseError(std::string("bad ") + name + " '" + field + "'", line);
    return v;
}

double maturity_key(double t) { return std::round(t * 1e6) / 1e6; }

std::string maturity_label(double t) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(6) << t;
    return s.str();
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Unconstrained z -> bounded parameter.
std::vector<double> to_params(const std::vector<Bounds>& box, const std::vector<double>& z) {
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        p[i] = box[i].lo + (box[i].hi - box[i].lo) * logistic(std::clamp(z[i], -30.0, 30.0));
    return p;
}

double radical_inverse(std::uint64_t i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

struct NelderMeadResult {
    std::vector<double> z;
    double value = kInf;
    int iterations = 0;
    bool converged = false;
};

template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> start, const OptimizerConfig& cfg, double step = 0.5) {
    const std::size_t n = start.size();
    std::vector<std::vector<double>> simplex(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step;
    std::vector<double> values(n + 1);
    for (std::size_t i = 0; i <= n; ++i) values[i] = f(simplex[i]);

    NelderMeadResult out;
    std::vector<std::size_t> order(n + 1);
    auto point = [&](const std::vector<double>& centroid, const std::vector<double>& worst, double t) {
        std::vector<double> p(n);
        for (std::size_t k = 0; k < n; ++k) p[k] = centroid[k] + t * (worst[k] - centroid[k]);
        return p;
    };
    for (out.iterations = 0; out.iterations < cfg.max_iterations; ++out.iterations) {
        for (std::size_t i = 0; i <= n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

        double diameter = 0.0;
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t k = 0; k < n; ++k)
                diameter = std::max(diameter, std::abs(logistic(simplex[i][k]) - logistic(simplex[best][k])));
        const double spread = values[worst] - values[best];
        if (std::isfinite(values[worst]) && spread <= cfg.ftol * (1.0 + std::abs(values[best])) && diameter <= cfg.xtol) {
            out.converged = true;
            break;
        }
        if (std::isfinite(values[best]) && values[best] == 0.0 && spread == 0.0) {
            out.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i)
            if (i != worst)
                for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);

        const auto reflected = point(centroid, simplex[worst], -1.0);
        const double fr = f(reflected);
        if (fr < values[best]) {
            const auto expanded = point(centroid, simplex[worst], -2.0);
            const double fe = f(expanded);
            if (fe < fr) {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if (fr < values[second]) {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            const bool outside = fr < values[worst];
            const auto contracted = point(centroid, outside ? reflected : simplex[worst], 0.5);
            const double fc = f(contracted);
            if (fc < (outside ? fr : values[worst])) {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t k = 0; k < n; ++k) simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    out.z = simplex[best];
    out.value = values[best];
    return out;
}

struct FitResult {
    std::vector<double> params;
    double value = kInf;
    int iterations = 0;
    bool converged = false;
};

// Multi-start minimization of the chain MSE. `extra_start`, when given in
// unconstrained coordinates, is tried before the low-discrepancy points.
FitResult minimize(const OptionChain& chain, const ModelSpec& kind, const OptimizerConfig& cfg,
                   const std::vector<double>* extra_start) {
    const auto names = free_parameters(kind.family, kind.driver);
    std::vector<Bounds> box;
    for (const auto& nm : names) box.push_back(parameter_bounds(nm));
    const std::size_t dim = names.size();

    auto objective = [&](const std::vector<double>& z) {
        const auto p = to_params(box, z);
        return mse_objective(kind, p, chain);
    };

    // Halton points (bases 2, 3, 5) with a Cranley-Patterson shift drawn
    // from the optimizer seed; kept away from the box edges.
    static constexpr unsigned kBases[] = {2, 3, 5};
    Xoshiro256 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> shift(dim);
    for (double& s : shift) s = unit(rng);
    std::vector<std::vector<double>> starts;
    if (extra_start) starts.push_back(*extra_start);
    for (int i = 0; i < cfg.starts; ++i) {
        std::vector<double> z(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            double u = radical_inverse(static_cast<std::uint64_t>(i) + 1, kBases[d]) + shift[d];
            u = std::clamp(u - std::floor(u), 0.02, 0.98);
            z[d] = std::log(u / (1.0 - u));
        }
        starts.push_back(std::move(z));
    }

    std::vector<NelderMeadResult> runs(starts.size());
    parallel_for(starts.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto r = nelder_mead(objective, starts[i], cfg);
            // One restart from the best vertex guards against a collapsed simplex.
            if (std::isfinite(r.value)) {
                auto again = nelder_mead(objective, r.z, cfg, 0.1);
                again.iterations += r.iterations;
                if (again.value <= r.value) r = std::move(again);
                else r.iterations = again.iterations;
            }
            runs[i] = std::move(r);
        }
    });

    FitResult out;
    std::size_t best = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        out.iterations += runs[i].iterations;
        if (std::isfinite(runs[i].value) && (best == runs.size() || runs[i].value < runs[best].value)) best = i;
    }
    if (best == runs.size()) throw CalibrationError("no optimizer start produced a finite objective");
    out.params = to_params(box, runs[best].z);
    out.value = runs[best].value;
    out.converged = runs[best].converged;
    return out;
}

std::vector<double> to_unconstrained(const ModelSpec& kind, const std::vector<double>& params) {
    const auto names = free_parameters(kind.family, kind.driver);
    std::vector<double> z(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto b = parameter_bounds(names[i]);
        const double u = std::clamp((params[i] - b.lo) / (b.hi - b.lo), 1e-12, 1.0 - 1e-12);
        z[i] = std::log(u / (1.0 - u));
    }
    return z;
}

std::map<std::string, double> named(const ModelSpec& kind, const std::vector<double>& params) {
    const auto names = free_parameters(kind.family, kind.driver);
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = params[i];
    return out;
}

double squared_error(const ModelSpec& model, const MarketQuote& q) {
    const double c = pricing::call_price(model, {q.rate, q.spot}, q.maturity, q.strike);
    return (c - q.mid_price) * (c - q.mid_price);
}

nlohmann::json report_json(const CalibrationReport& r) {
    nlohmann::json per_maturity = nlohmann::json::object();
    for (const auto& [t, v] : r.mse_per_maturity) per_maturity[maturity_label(t)] = v;
    return {{"model", r.model},
            {"mode", mode_name(r.mode)},
            {"fitted", r.fitted},
            {"mse_per_maturity", per_maturity},
            {"total_mse", r.total_mse},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"warnings", r.warnings}};
}

}  // namespace

void MarketQuote::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(strike)) throw DomainError("strike must be > 0");
    if (!positive(maturity)) throw DomainError("maturity must be > 0");
    if (!positive(mid_price)) throw DomainError("mid_price must be > 0");
    if (!positive(spot)) throw DomainError("spot must be > 0");
    if (!(std::isfinite(rate) && rate >= 0.0)) throw DomainError("rate must be >= 0");
}

OptionChain load_chain(std::istream& in, const LoadOptions& options, std::vector<std::string>* diagnostics) {
    auto note = [&](std::size_t line, const std::string& msg) {
        if (diagnostics) diagnostics->push_back("line " + std::to_string(line) + ": " + msg);
    };
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (!trim(line).empty()) break;
    }
    if (trim(line) != kHeader) throw ParseError(std::string("expected header '") + kHeader + "'", line_no);

    OptionChain chain;
    bool have_date = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split(line);
        if (f.size() != 6) throw ParseError("expected 6 fields, found " + std::to_string(f.size()), line_no);
        if (f[0].empty()) throw ParseError("empty quote_date", line_no);
        MarketQuote q;
        q.spot = parse_number(f[1], "spot", line_no);
        q.rate = parse_number(f[2], "rate", line_no);
        q.strike = parse_number(f[3], "strike", line_no);
        q.maturity = parse_number(f[4], "maturity_years", line_no);
        q.mid_price = parse_number(f[5], "mid_price", line_no);
        try {
            q.validate();
        } catch (const DomainError& e) {
            note(line_no, std::string("rejected: ") + e.what());
            continue;
        }
        if (!have_date) {
            chain.quote_date = f[0];
            have_date = true;
        } else if (f[0] != chain.quote_date) {
            note(line_no, "rejected: quote_date " + f[0] + " differs from " + chain.quote_date);
            continue;
        }
        if (!chain.quotes.empty() && q.spot != chain.quotes.front().spot) {
            note(line_no, "rejected: spot differs from the first quote of " + chain.quote_date);
            continue;
        }
        if (options.moneyness_filter && q.strike < 0.95 * q.spot) {
            note(line_no, "excluded: more than 5% in the money");
            continue;
        }
        chain.quotes.push_back(q);
    }
    if (chain.quotes.empty()) throw EmptyChainError("option chain has no usable quotes");
    return chain;
}

void write_chain(std::ostream& out, const OptionChain& chain) {
    auto num = [](double v) {
        char buf[32];
        return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
    };
    out << kHeader << '\n';
    for (const auto& q : chain.quotes)
        out << chain.quote_date << ',' << num(q.spot) << ',' << num(q.rate) << ',' << num(q.strike) << ','
            << num(q.maturity) << ',' << num(q.mid_price) << '\n';
}

std::vector<std::string> free_parameters(Family family, Driver driver) {
    std::vector<std::string> names{"sigma"};
    if (family == Family::CEV) names.push_back("alpha");
    if (driver != Driver::Classical) names.push_back("hurst");
    return names;
}

Bounds parameter_bounds(const std::string& name) {
    if (name == "sigma") return {1e-4, 5.0};
    if (name == "alpha") return {0.0, 1.999};
    if (name == "hurst") return {0.5, 0.999};
    throw DomainError("unknown parameter '" + name + "'");
}

ModelSpec make_model(const ModelSpec& kind, std::span<const double> params) {
    const auto names = free_parameters(kind.family, kind.driver);
    if (params.size() != names.size())
        throw DomainError(pricing::model_name(kind) + " takes " + std::to_string(names.size()) + " parameters");
    ModelSpec m = kind;
    m.driver_params = kind.driver == Driver::Classical ? process::MixedDriverParams{0.5, 1.0, 0.0}
                                                       : process::MixedDriverParams{0.5, 1.0, 1.0};
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto b = parameter_bounds(names[i]);
        const double v = params[i];
        const bool lo_ok = names[i] == "sigma" ? v > b.lo : v >= b.lo;
        if (!(lo_ok && v <= b.hi)) throw DomainError(names[i] + " out of bounds");
        if (names[i] == "sigma") m.sigma = v;
        if (names[i] == "alpha") m.alpha = v;
        if (names[i] == "hurst") m.driver_params.hurst = v;
    }
    return m;
}

double mse_objective(const ModelSpec& kind, std::span<const double> params, const OptionChain& chain) {
    if (chain.quotes.empty()) throw EmptyChainError("option chain has no quotes");
    ModelSpec model;
    try {
        model = make_model(kind, params);
    } catch (const DomainError&) {
        return kInf;
    }
    std::vector<double> sq;
    sq.reserve(chain.quotes.size());
    for (const auto& q : chain.quotes) {
        try {
            sq.push_back(squared_error(model, q));
        } catch (const std::exception& e) {
            std::clog << "mse_objective: quote (K=" << q.strike << ", T=" << q.maturity << ") failed: " << e.what()
                      << '\n';
            return kInf;
        }
        if (!std::isfinite(sq.back())) return kInf;
    }
    std::sort(sq.begin(), sq.end());
    double sum = 0.0;
    for (double v : sq) sum += v;
    return sum / static_cast<double>(sq.size());
}

std::string mode_name(Mode mode) { return mode == Mode::Joint ? "joint" : "per_maturity"; }

void OptimizerConfig::validate() const {
    if (starts < 1) throw DomainError("optimizer needs at least one start");
    if (max_iterations < 1) throw DomainError("max_iterations must be >= 1");
    if (!(ftol > 0.0) || !(xtol > 0.0)) throw DomainError("optimizer tolerances must be > 0");
}

CalibrationReport fit(const OptionChain& chain, const ModelSpec& kind, Mode mode, const OptimizerConfig& cfg) {
    cfg.validate();
    if (chain.quotes.empty()) throw EmptyChainError("option chain has no quotes");

    CalibrationReport report;
    report.model = pricing::model_name(kind);
    report.mode = mode;

    const auto joint = minimize(chain, kind, cfg, nullptr);
    report.iterations = joint.iterations;
    report.converged = joint.converged;

    // Group quotes by maturity.
    std::map<double, OptionChain> groups;
    for (const auto& q : chain.quotes) {
        auto& g = groups[maturity_key(q.maturity)];
        g.quote_date = chain.quote_date;
        g.quotes.push_back(q);
    }

    double weighted = 0.0;
    if (mode == Mode::Joint) {
        report.fitted["joint"] = named(kind, joint.params);
        for (const auto& [t, g] : groups) {
            report.mse_per_maturity[t] = mse_objective(kind, joint.params, g);
            weighted += report.mse_per_maturity[t] * static_cast<double>(g.quotes.size());
        }
    } else {
        const auto warm = to_unconstrained(kind, joint.params);
        for (const auto& [t, g] : groups) {
            std::vector<double> params = joint.params;
            if (g.quotes.size() < 2) {
                report.warnings.push_back("maturity " + maturity_label(t) +
                                          " has fewer than two quotes; joint parameters kept");
            } else {
                const auto local = minimize(g, kind, cfg, &warm);
                report.iterations += local.iterations;
                report.converged = report.converged && local.converged;
                params = local.params;
            }
            report.fitted[maturity_label(t)] = named(kind, params);
            report.mse_per_maturity[t] = mse_objective(kind, params, g);
            weighted += report.mse_per_maturity[t] * static_cast<double>(g.quotes.size());
        }
    }
    report.total_mse = weighted / static_cast<double>(chain.quotes.size());
    return report;
}

std::vector<ComparisonRow> compare_models(const OptionChain& chain, const std::vector<ModelSpec>& catalog, Mode mode,
                                          const OptimizerConfig& cfg) {
    if (catalog.empty()) throw DomainError("model catalog is empty");
    std::vector<ComparisonRow> rows;
    for (const auto& kind : catalog) {
        ComparisonRow row;
        row.model = pricing::model_name(kind);
        try {
            row.report = fit(chain, kind, mode, cfg);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_json(std::ostream& out, const CalibrationReport& report) { out << report_json(report).dump(2) << '\n'; }

void write_json(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) {
        if (r.ok) {
            table.push_back(report_json(r.report));
        } else {
            table.push_back({{"model", r.model}, {"failed", true}, {"error", r.error}});
        }
    }
    out << nlohmann::json{{"models", table}}.dump(2) << '\n';
}

OptionChain synthetic_chain(const ModelSpec& model, const pricing::MarketEnv& env,
                            const std::vector<double>& maturities, int strikes_per_maturity, double noise_sd,
                            std::uint64_t seed) {
    model.validate();
    env.validate();
    if (maturities.empty() || strikes_per_maturity < 1) throw DomainError("synthetic chain needs maturities and strikes");
    if (!(noise_sd >= 0.0)) throw DomainError("noise_sd must be >= 0");
    const auto& p = model.driver_params;
    const double elasticity = model.family == Family::CEV ? model.alpha / 2.0 - 1.0 : 0.0;
    const double local_vol = model.sigma * std::pow(env.spot, elasticity) * std::hypot(p.beta, p.gamma);

    OptionChain chain;
    chain.quote_date = "synthetic";
    Xoshiro256 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
    for (double t : maturities) {
        const double forward = env.spot * std::exp(env.rate * t);
        for (int i = 0; i < strikes_per_maturity; ++i) {
            const double m = strikes_per_maturity == 1
                                 ? 0.0
                                 : -1.5 + 2.25 * static_cast<double>(i) / static_cast<double>(strikes_per_maturity - 1);
            const double strike = forward * std::exp(m * local_vol * std::sqrt(t));
            double price = pricing::call_price(model, env, t, strike);
            if (noise_sd > 0.0) price += noise(rng);
            if (!(price > 0.0)) throw DomainError("synthetic quote price is not positive; reduce noise or moneyness");
            chain.quotes.push_back({strike, t, price, env.spot, env.rate});
        }
    }
    return chain;
}

}  // namespace msfcev::calibrate
