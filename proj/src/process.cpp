#include "msfcev/process.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "msfcev/errors.hpp"
#include "msfcev/parallel.hpp"
#include "msfcev/rng.hpp"

namespace msfcev::process {

namespace {

void check_hurst(double hurst) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw DomainError("Hurst index must lie in (0, 1)");
}

void check_time(double t) {
    if (!(std::isfinite(t) && t >= 0.0)) throw DomainError("times must be finite and >= 0");
}

double pw(double x, double exponent) { return x == 0.0 ? 0.0 : std::pow(x, exponent); }

}  // namespace

void MixedDriverParams::validate() const {
    check_hurst(hurst);
    if (!(beta >= 0.0) || !(gamma >= 0.0) || !std::isfinite(beta) || !std::isfinite(gamma))
        throw DomainError("beta and gamma must be finite and >= 0");
    if (!(beta + gamma > 0.0)) throw DomainError("beta + gamma must be > 0");
}

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw DomainError("TimeGrid needs at least two points");
    if (times_.front() != 0.0) throw DomainError("TimeGrid must start at 0");
    for (std::size_t i = 1; i < times_.size(); ++i) {
        if (!std::isfinite(times_[i]) || !(times_[i] - times_[i - 1] > 1e-12 * std::max(1.0, times_[i])))
            throw DomainError("TimeGrid times must be strictly increasing (index " + std::to_string(i) + ")");
    }
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps) {
    if (!(horizon > 0.0) || steps == 0) throw DomainError("uniform grid needs horizon > 0 and steps >= 1");
    std::vector<double> t(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) t[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    return TimeGrid(std::move(t));
}

double sfbm_covariance(double s, double t, double hurst) {
    check_hurst(hurst);
    check_time(s);
    check_time(t);
    const double h2 = 2.0 * hurst;
    return pw(s, h2) + pw(t, h2) - 0.5 * (pw(s + t, h2) + pw(std::abs(t - s), h2));
}

double msfbm_covariance(double s, double t, const MixedDriverParams& params) {
    params.validate();
    const double brownian = params.beta * params.beta * std::min(s, t);
    return brownian + params.gamma * params.gamma * sfbm_covariance(s, t, params.hurst);
}

double increment_covariance(double u, double v, double s, double t, const MixedDriverParams& params) {
    params.validate();
    check_time(u);
    if (!(t > s && s >= v && v > u)) throw DomainError("increment_covariance needs t > s >= v > u >= 0");
    const double h2 = 2.0 * params.hurst;
    const double bracket = pw(t + u, h2) + pw(t - u, h2) + pw(s + v, h2) + pw(s - v, h2) - pw(t + v, h2) -
                           pw(t - v, h2) - pw(s + u, h2) - pw(s - u, h2);
    return 0.5 * params.gamma * params.gamma * bracket;
}

double increment_variance(double s, double t, const MixedDriverParams& params) {
    params.validate();
    check_time(s);
    if (!(t > s)) throw DomainError("increment_variance needs s < t");
    const double h2 = 2.0 * params.hurst;
    const double sub = -std::pow(2.0, h2 - 1.0) * (pw(s, h2) + pw(t, h2)) + pw(s + t, h2) + pw(t - s, h2);
    return params.beta * params.beta * (t - s) + params.gamma * params.gamma * sub;
}

std::vector<double> covariance_matrix(const TimeGrid& grid, const MixedDriverParams& params) {
    params.validate();
    const std::size_t m = grid.size() - 1;
    std::vector<double> cov(m * m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double c = msfbm_covariance(grid[i + 1], grid[j + 1], params);
            cov[i * m + j] = c;
            cov[j * m + i] = c;
        }
    }
    return cov;
}

PathBatch sample_msfbm(const TimeGrid& grid, const MixedDriverParams& params, std::size_t n_paths,
                       std::uint64_t seed, unsigned threads) {
    if (n_paths == 0) throw DomainError("n_paths must be >= 1");
    const std::size_t m = grid.size() - 1;
    const auto cov = covariance_matrix(grid, params);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(cov.data(), m, m);

    // Factor A = F F^T. Plain Cholesky first; pivoted LDL^T when the matrix
    // is numerically singular.
    Eigen::MatrixXd factor;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
        factor = llt.matrixL();
    } else {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        const Eigen::VectorXd d = ldlt.vectorD();
        const double scale = std::max(d.cwiseAbs().maxCoeff(), 1e-300);
        if (ldlt.info() != Eigen::Success || d.minCoeff() < -1e-10 * scale) {
            std::ostringstream msg;
            msg << "covariance factorization failed: min pivot " << d.minCoeff() << ", max pivot " << scale
                << ", grid size " << grid.size();
            throw NumericalError(msg.str());
        }
        const Eigen::VectorXd root = d.cwiseMax(0.0).cwiseSqrt();
        Eigen::MatrixXd l = ldlt.matrixL();
        factor = ldlt.transpositionsP().transpose() * (l * root.asDiagonal());
    }

    PathBatch batch{grid, n_paths, seed, std::vector<double>(n_paths * grid.size(), 0.0)};
    parallel_for(n_paths, threads, [&](std::size_t begin, std::size_t end) {
        Eigen::VectorXd z(m);
        for (std::size_t p = begin; p < end; ++p) {
            auto rng = Xoshiro256::substream(seed, p);
            std::normal_distribution<double> normal;
            for (std::size_t k = 0; k < m; ++k) z[k] = normal(rng);
            const Eigen::VectorXd x = factor * z;
            double* row = batch.values.data() + p * grid.size();
            for (std::size_t k = 0; k < m; ++k) row[k + 1] = x[k];
        }
    });
    return batch;
}

void write_csv(std::ostream& out, const PathBatch& batch) {
    const std::size_t m = batch.grid.size();
    for (std::size_t j = 0; j < m; ++j) out << (j ? "," : "") << "t_" << j;
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        const auto row = batch.path(p);
        for (std::size_t j = 0; j < m; ++j) out << (j ? "," : "") << row[j];
        out << '\n';
    }
}

}  // namespace msfcev::process
