#pragma once

// Real-argument special functions needed by the CEV pricing kernel.
//
// Everything here is pure and reentrant. Functions throw DomainError for
// arguments outside their documented domain and ConvergenceError when a
// series exceeds its term budget.

namespace msfcev::specfun {

struct Tolerance {
    double abs_tol = 1e-13;
    double rel_tol = 1e-12;
    // Floor on the number of series terms. Series centred on a large
    // parameter (Poisson mode, Bessel peak) get at least a budget
    // proportional to their natural width on top of this.
    int max_terms = 10'000;
    // chi2_noncentral: keep summing until both tails are accurate relative
    // to themselves, even when one is astronomically small. When false the
    // sums stop at abs_tol, which is far cheaper when a tail underflows.
    bool relative_tails = true;

    void validate() const;
};

// ln Gamma(x) for x > 0.
double log_gamma(double x);

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x),
// each computed directly so that the smaller of the two keeps full
// relative accuracy.
struct GammaPQ {
    double p;
    double q;
};
GammaPQ gamma_pq(double a, double x, const Tolerance& tol = {});
inline double gamma_p(double a, double x, const Tolerance& tol = {}) { return gamma_pq(a, x, tol).p; }
inline double gamma_q(double a, double x, const Tolerance& tol = {}) { return gamma_pq(a, x, tol).q; }

// Modified Bessel function of the first kind I_order(z), order >= 0, z >= 0.
double bessel_i(double order, double z, const Tolerance& tol = {});
// exp(-z) * I_order(z); finite for all admissible inputs.
double bessel_i_scaled(double order, double z, const Tolerance& tol = {});
// ln(exp(-z) I_order(z)); usable where the scaled value itself underflows.
double log_bessel_i_scaled(double order, double z, const Tolerance& tol = {});
// ln I_order(z); -inf when I_order(z) == 0.
double log_bessel_i(double order, double z, const Tolerance& tol = {});

// Kummer's confluent hypergeometric function M(a, b, z) = 1F1(a; b; z).
double kummer_m(double a, double b, double z, const Tolerance& tol = {});

// Whittaker function M_{kappa,mu}(z) = exp(-z/2) z^(mu+1/2) M(mu-kappa+1/2, 1+2mu, z).
double whittaker_m(double kappa, double mu, double z, const Tolerance& tol = {});

// Non-central chi-squared distribution with `df` degrees of freedom and
// non-centrality `noncentrality`; both tails are returned, each summed
// directly.
struct Chi2Tails {
    double cdf;
    double sf;
};
Chi2Tails chi2_noncentral(double x, double df, double noncentrality, const Tolerance& tol = {});

// Q(x; df, lambda) = P(chi2_df(lambda) > x).
inline double chi2_noncentral_sf(double x, double df, double noncentrality, const Tolerance& tol = {}) {
    return chi2_noncentral(x, df, noncentrality, tol).sf;
}
inline double chi2_noncentral_cdf(double x, double df, double noncentrality, const Tolerance& tol = {}) {
    return chi2_noncentral(x, df, noncentrality, tol).cdf;
}

// Standard normal distribution function.
double normal_cdf(double x);

namespace detail {

// Branches of bessel_i_scaled, exposed for cross-branch tests.
double bessel_i_scaled_series(double order, double z, const Tolerance& tol);
double bessel_i_scaled_asymptotic(double order, double z, const Tolerance& tol);
bool bessel_uses_asymptotic(double order, double z);

// Poisson probability mass mu^k e^{-mu} / k!, evaluated without
// cancellation for large k and mu.
double poisson_pmf(double k, double mu);

}  // namespace detail

}  // namespace msfcev::specfun
