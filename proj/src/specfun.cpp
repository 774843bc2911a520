#include "msfcev/specfun.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "msfcev/errors.hpp"

namespace msfcev::specfun {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kEulerGamma = 0.57721566490153286061;
constexpr double kDensityTailsFrom = 1e5;
constexpr double kLnSqrt2Pi = 0.91893853320467274178;

// Neumaier compensated summation.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// zeta(k) - 1 for k = 0..kZetaTerms-1 (entries 0 and 1 unused).
constexpr int kZetaTerms = 40;

constexpr std::array<double, kZetaTerms> make_zeta_minus_one() {
    std::array<double, kZetaTerms> out{};
    constexpr int n_direct = 50;
    for (int k = 2; k < kZetaTerms; ++k) {
        double s = 0.0;
        for (int n = n_direct - 1; n >= 2; --n) {
            double p = 1.0;
            for (int i = 0; i < k; ++i) p /= n;
            s += p;
        }
        // Euler-Maclaurin tail from N = n_direct.
        const double N = n_direct;
        double nk = 1.0;  // N^-k
        for (int i = 0; i < k; ++i) nk /= N;
        const double kk = k;
        s += nk * N / (kk - 1.0) + 0.5 * nk + kk * nk / (12.0 * N) -
             kk * (kk + 1) * (kk + 2) * nk / (720.0 * N * N * N) +
             kk * (kk + 1) * (kk + 2) * (kk + 3) * (kk + 4) * nk / (30240.0 * N * N * N * N * N);
        out[k] = s;
    }
    return out;
}

constexpr auto kZetaMinusOne = make_zeta_minus_one();

// ln Gamma via the asymptotic Stirling series, x >= 10.
double log_gamma_stirling(double x) {
    // B_{2k} / (2k (2k-1)), k = 1..8
    static constexpr std::array<double, 8> c = {
        1.0 / 12.0,          -1.0 / 360.0,        1.0 / 1260.0,       -1.0 / 1680.0,
        1.0 / 1188.0,        -691.0 / 360360.0,   1.0 / 156.0,        -3617.0 / 122400.0,
    };
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = 0.0;
    for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) series = series * inv2 + c[k];
    series *= inv;
    return (x - 0.5) * std::log(x) - x + kLnSqrt2Pi + series;
}

// ln Gamma(1 + eps) for |eps| < 0.25.
double log_gamma_near_one(double eps) {
    double power = -eps;
    double sum = -kEulerGamma * eps;
    for (int k = 2; k < kZetaTerms; ++k) {
        power *= -eps;
        const double term = (1.0 + kZetaMinusOne[k]) * power / k;
        sum += term;
        if (std::abs(term) <= kEps * std::abs(sum) * 0.25) break;
    }
    return sum;
}

// ln Gamma(2 + eps) for |eps| < 0.25.
double log_gamma_near_two(double eps) {
    double power = -eps;
    double sum = (1.0 - kEulerGamma) * eps;
    for (int k = 2; k < kZetaTerms; ++k) {
        power *= -eps;
        const double term = kZetaMinusOne[k] * power / k;
        sum += term;
        if (std::abs(term) <= kEps * std::abs(sum) * 0.25) break;
    }
    return sum;
}

// Stirling error: ln Gamma(n+1) - (n + 1/2) ln n + n - ln sqrt(2 pi), n > 0.
double stirling_error(double n) {
    if (n >= 15.0) {
        const double inv = 1.0 / n;
        const double inv2 = inv * inv;
        return inv * (1.0 / 12.0 -
                      inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    }
    return log_gamma(n + 1.0) - (n + 0.5) * std::log(n) + n - kLnSqrt2Pi;
}

// Deviance term x ln(x / m) + m - x, accurate when x is close to m.
double deviance(double x, double m) {
    if (std::abs(x - m) < 0.1 * (x + m)) {
        double v = (x - m) / (x + m);
        double s = (x - m) * v;
        double ej = 2.0 * x * v;
        v *= v;
        for (int j = 1; j < 1000; ++j) {
            ej *= v;
            const double s1 = s + ej / (2 * j + 1);
            if (s1 == s) return s1;
            s = s1;
        }
        return s;
    }
    return x * std::log(x / m) + m - x;
}

int term_budget(const Tolerance& tol, double scale) {
    const double extra = 60.0 * std::sqrt(std::max(scale, 0.0)) + 100.0;
    return tol.max_terms + static_cast<int>(std::min(extra, 1e8));
}

void require(bool ok, const char* what) {
    if (!ok) throw DomainError(what);
}

// ln(exp(-z) I_order(z)) via the ascending series summed outward from its
// largest term. All terms are positive, so the sum has no cancellation.
double log_bessel_i_scaled_series(double order, double z, const Tolerance& tol) {
    const double q = 0.25 * z * z;
    const double peak = std::floor(0.5 * (std::sqrt(order * order + z * z) - order));
    const double log_peak = (2.0 * peak + order) * std::log(0.5 * z) - log_gamma(peak + 1.0) -
                            log_gamma(peak + order + 1.0) - z;
    const int budget = term_budget(tol, z);
    CompensatedSum sum;
    sum.add(1.0);
    int used = 0;
    double t = 1.0;
    for (double k = peak;; k += 1.0) {
        t *= q / ((k + 1.0) * (k + order + 1.0));
        sum.add(t);
        if (t <= 0.25 * kEps * sum.value()) break;
        if (++used > budget) throw ConvergenceError("bessel_i: ascending series did not converge");
    }
    t = 1.0;
    for (double k = peak; k > 0.0; k -= 1.0) {
        t *= k * (k + order) / q;
        sum.add(t);
        if (t <= 0.25 * kEps * sum.value()) break;
        if (++used > budget) throw ConvergenceError("bessel_i: ascending series did not converge");
    }
    return log_peak + std::log(sum.value());
}

// Large non-centrality: the mixture needs O(sqrt(mu)) terms, so instead
// integrate the density over the smaller tail, outward from x in
// Gauss-Legendre panels sized to the local decay scale. The Bessel factor is
// then always in its (cheap) large-argument regime.
Chi2Tails chi2_noncentral_by_density(double x, double df, double lambda) {
    const double v = 0.5 * df - 1.0;
    const double sqrt_lambda = std::sqrt(lambda);
    auto density = [&](double t) {
        if (t <= 0.0) return 0.0;
        const double s = std::sqrt(lambda * t);
        if (s < std::max(30.0, v * v)) return 0.0;  // > 40 sd below the mean
        const double d = std::sqrt(t) - sqrt_lambda;
        const double log_f = -std::log(2.0) - 0.5 * d * d + 0.5 * v * std::log(t / lambda) +
                             std::log(detail::bessel_i_scaled_asymptotic(std::abs(v), s, Tolerance{}));
        return std::exp(log_f);
    };
    const double mean = df + lambda;
    const double sd = std::sqrt(2.0 * (df + 2.0 * lambda));
    const double dir = x >= mean ? 1.0 : -1.0;
    CompensatedSum tail;
    double t = x;
    for (int panel = 0;; ++panel) {
        const double width = sd / (1.0 + std::abs(t - mean) / sd);
        double next = t + dir * width;
        if (next < 0.0) next = 0.0;
        const double piece = boost::math::quadrature::gauss<double, 10>::integrate(density, std::min(t, next), std::max(t, next));
        tail.add(piece);
        t = next;
        if (t == 0.0 || piece <= 1e-17 * tail.value() || (tail.value() == 0.0 && std::abs(t - mean) > 40.0 * sd)) break;
        if (panel > 100000) throw ConvergenceError("chi2_noncentral: tail integration did not converge");
    }
    const double small = std::clamp(tail.value(), 0.0, 1.0);
    return dir > 0.0 ? Chi2Tails{1.0 - small, small} : Chi2Tails{small, 1.0 - small};
}

}  // namespace

void Tolerance::validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || max_terms < 1)
        throw DomainError("Tolerance: abs_tol, rel_tol must be > 0 and max_terms >= 1");
}

double log_gamma(double x) {
    require(std::isfinite(x) && x > 0.0, "log_gamma: argument must be positive and finite");
    if (std::abs(x - 1.0) < 0.2) return log_gamma_near_one(x - 1.0);
    if (std::abs(x - 2.0) < 0.2) return log_gamma_near_two(x - 2.0);
    if (x >= 10.0) return log_gamma_stirling(x);
    // Shift upward into the Stirling range; the product has at most 11
    // factors and cannot overflow.
    double product = 1.0;
    double shifted = x;
    while (shifted < 10.0) {
        product *= shifted;
        shifted += 1.0;
    }
    return log_gamma_stirling(shifted) - std::log(product);
}

namespace detail {

double poisson_pmf(double k, double mu) {
    if (mu == 0.0) return k == 0.0 ? 1.0 : 0.0;
    if (k == 0.0) return std::exp(-mu);
    return std::exp(-stirling_error(k) - deviance(k, mu)) / std::sqrt(2.0 * std::numbers::pi * k);
}

double bessel_i_scaled_series(double order, double z, const Tolerance& tol) {
    if (z == 0.0) return order == 0.0 ? 1.0 : 0.0;
    return std::exp(log_bessel_i_scaled_series(order, z, tol));
}

double bessel_i_scaled_asymptotic(double order, double z, const Tolerance& tol) {
    const double mu = 4.0 * order * order;
    CompensatedSum sum;
    sum.add(1.0);
    double term = 1.0;
    double last = 1.0;
    const int budget = term_budget(tol, 0.0);
    for (int k = 1; k <= budget; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= -(mu - odd * odd) / (8.0 * k * z);
        if (term == 0.0) break;
        if (std::abs(term) > std::abs(last)) {
            if (std::abs(last) > tol.rel_tol * 1e-3 * std::abs(sum.value()))
                throw ConvergenceError("bessel_i: asymptotic expansion diverged before converging");
            break;
        }
        sum.add(term);
        if (std::abs(term) <= 0.25 * kEps * std::abs(sum.value())) break;
        last = term;
    }
    return sum.value() / std::sqrt(2.0 * std::numbers::pi * z);
}

bool bessel_uses_asymptotic(double order, double z) {
    return z >= std::max(30.0, order * order);
}

}  // namespace detail

double bessel_i_scaled(double order, double z, const Tolerance& tol) {
    require(std::isfinite(order) && order >= 0.0, "bessel_i: order must be finite and >= 0");
    require(std::isfinite(z) && z >= 0.0, "bessel_i: argument must be finite and >= 0");
    tol.validate();
    if (z == 0.0) return order == 0.0 ? 1.0 : 0.0;
    if (detail::bessel_uses_asymptotic(order, z)) return detail::bessel_i_scaled_asymptotic(order, z, tol);
    return detail::bessel_i_scaled_series(order, z, tol);
}

double log_bessel_i_scaled(double order, double z, const Tolerance& tol) {
    require(std::isfinite(order) && order >= 0.0, "bessel_i: order must be finite and >= 0");
    require(std::isfinite(z) && z >= 0.0, "bessel_i: argument must be finite and >= 0");
    tol.validate();
    if (z == 0.0) return order == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    if (detail::bessel_uses_asymptotic(order, z)) return std::log(detail::bessel_i_scaled_asymptotic(order, z, tol));
    return log_bessel_i_scaled_series(order, z, tol);
}

double log_bessel_i(double order, double z, const Tolerance& tol) { return log_bessel_i_scaled(order, z, tol) + z; }

double bessel_i(double order, double z, const Tolerance& tol) {
    if (z == 0.0) {
        require(std::isfinite(order) && order >= 0.0, "bessel_i: order must be finite and >= 0");
        return order == 0.0 ? 1.0 : 0.0;
    }
    return std::exp(log_bessel_i(order, z, tol));
}

double kummer_m(double a, double b, double z, const Tolerance& tol) {
    require(std::isfinite(a) && std::isfinite(b) && std::isfinite(z), "kummer_m: arguments must be finite");
    require(!(b <= 0.0 && b == std::floor(b)), "kummer_m: b must not be a non-positive integer");
    require(z >= 0.0, "kummer_m: z must be >= 0");
    tol.validate();
    CompensatedSum sum;
    sum.add(1.0);
    double term = 1.0;
    const int budget = tol.max_terms;
    for (int k = 0; k < budget; ++k) {
        term *= (a + k) * z / ((b + k) * (k + 1.0));
        if (term == 0.0) return sum.value();
        sum.add(term);
        if (!std::isfinite(sum.value())) throw NumericalError("kummer_m: overflow");
        const bool decreasing = std::abs((a + k + 1.0) * z) < std::abs((b + k + 1.0) * (k + 2.0));
        if (decreasing && std::abs(term) <= 0.25 * kEps * std::abs(sum.value())) return sum.value();
    }
    throw ConvergenceError("kummer_m: series did not converge within " + std::to_string(budget) + " terms");
}

double whittaker_m(double kappa, double mu, double z, const Tolerance& tol) {
    require(std::isfinite(z) && z > 0.0, "whittaker_m: z must be > 0");
    const double m = kummer_m(mu - kappa + 0.5, 1.0 + 2.0 * mu, z, tol);
    return std::exp(-0.5 * z + (mu + 0.5) * std::log(z)) * m;
}

GammaPQ gamma_pq(double a, double x, const Tolerance& tol) {
    require(std::isfinite(a) && a > 0.0, "gamma_pq: a must be positive and finite");
    require(!std::isnan(x) && x >= 0.0, "gamma_pq: x must be >= 0");
    tol.validate();
    if (x == 0.0) return {0.0, 1.0};
    if (std::isinf(x)) return {1.0, 0.0};
    const int budget = term_budget(tol, a);
    // x^a e^-x / Gamma(a+1)
    const double prefactor = detail::poisson_pmf(a, x);
    if (x < a + 1.0) {
        CompensatedSum sum;
        sum.add(1.0);
        double term = 1.0;
        for (int n = 1;; ++n) {
            term *= x / (a + n);
            sum.add(term);
            if (term <= 0.25 * kEps * sum.value()) break;
            if (n > budget) throw ConvergenceError("gamma_pq: series did not converge");
        }
        const double p = std::min(1.0, prefactor * sum.value());
        return {p, 1.0 - p};
    }
    // Modified Lentz evaluation of the continued fraction for Q.
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1;; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) <= kEps) break;
        if (i > budget) throw ConvergenceError("gamma_pq: continued fraction did not converge");
    }
    const double q = std::min(1.0, a * prefactor * h);
    return {1.0 - q, q};
}

Chi2Tails chi2_noncentral(double x, double df, double noncentrality, const Tolerance& tol) {
    require(!std::isnan(x) && x >= 0.0, "chi2_noncentral: x must be >= 0");
    require(std::isfinite(df) && df > 0.0, "chi2_noncentral: df must be positive");
    require(std::isfinite(noncentrality) && noncentrality >= 0.0, "chi2_noncentral: noncentrality must be >= 0");
    tol.validate();
    if (x == 0.0) return {0.0, 1.0};
    if (std::isinf(x)) return {1.0, 0.0};

    const double y = 0.5 * x;
    const double mu = 0.5 * noncentrality;
    if (mu == 0.0) {
        const auto pq = gamma_pq(0.5 * df, y, tol);
        return {pq.p, pq.q};
    }
    if (mu > kDensityTailsFrom && 0.25 * df * df < mu) return chi2_noncentral_by_density(x, df, noncentrality);

    // Poisson(mu) mixture of central chi-squared tails with df + 2j degrees
    // of freedom, summed outward from the Poisson mode j0. Moving one step
    // in j shifts each central tail by the gamma density term
    // y^a e^-y / Gamma(a+1).
    const double j0 = std::floor(mu);
    const double a0 = 0.5 * df + j0;
    const double w0 = detail::poisson_pmf(j0, mu);
    const auto pq0 = gamma_pq(a0, y, tol);
    const double t0 = detail::poisson_pmf(a0, y);
    const double stop = 0.05 * tol.abs_tol;
    const int budget = term_budget(tol, mu);

    CompensatedSum cdf;
    CompensatedSum sf;
    cdf.add(w0 * pq0.p);
    sf.add(w0 * pq0.q);
    int used = 0;

    {
        double p = pq0.p, q = pq0.q, w = w0, t = t0, a = a0, j = j0;
        for (;;) {
            q += t;
            p = std::max(0.0, p - t);
            t *= y / (a + 1.0);
            a += 1.0;
            w *= mu / (j + 1.0);
            j += 1.0;
            cdf.add(w * p);
            sf.add(w * q);
            const double ratio = mu / (j + 1.0);
            if (ratio < 1.0) {
                // Remaining Poisson mass bounds the rest of both sums; keep
                // going while it still matters relative to a small tail.
                const double rest = w * ratio / (1.0 - ratio);
                const bool relative = rest <= 1e-16 * sf.value() && rest * p <= 1e-16 * cdf.value();
                if (rest < stop && (relative || !tol.relative_tails || used > budget)) break;
            }
            if (++used > budget + budget) throw ConvergenceError("chi2_noncentral: Poisson mixture did not converge");
        }
    }
    {
        double p = pq0.p, q = pq0.q, w = w0, t = t0, a = a0, j = j0;
        while (j > 0.0) {
            const double prev = t * a / y;
            q = std::max(0.0, q - prev);
            p += prev;
            t = prev;
            a -= 1.0;
            w *= j / mu;
            j -= 1.0;
            cdf.add(w * p);
            sf.add(w * q);
            const double ratio = j / mu;
            if (ratio < 1.0) {
                const double rest = w * ratio / (1.0 - ratio);
                const bool relative = rest <= 1e-16 * cdf.value() && rest * q <= 1e-16 * sf.value();
                if (rest < stop && (relative || !tol.relative_tails || used > budget)) break;
            }
            if (++used > budget + budget) throw ConvergenceError("chi2_noncentral: Poisson mixture did not converge");
        }
    }
    return {std::clamp(cdf.value(), 0.0, 1.0), std::clamp(sf.value(), 0.0, 1.0)};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace msfcev::specfun
