#pragma once

// Sub-fractional and mixed sub-fractional Brownian motion: covariance
// structure, increment statistics and exact Gaussian path sampling.
//
// The mixed process is M_t = beta * B_t + gamma * xi_t, with B a standard
// Brownian motion and xi an independent sub-fractional Brownian motion of
// Hurst index H.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace msfcev::process {

struct MixedDriverParams {
    double hurst = 0.5;
    double beta = 1.0;   // weight of the Brownian component
    double gamma = 0.0;  // weight of the sub-fractional component

    // 0 < hurst < 1, beta >= 0, gamma >= 0, beta + gamma > 0.
    void validate() const;
};

// Strictly increasing observation times starting at 0.
class TimeGrid {
public:
    // Throws DomainError unless times[0] == 0, the sequence is strictly
    // increasing with spacing above 1e-12 and has at least two points.
    explicit TimeGrid(std::vector<double> times);

    static TimeGrid uniform(double horizon, std::size_t steps);

    const std::vector<double>& times() const { return times_; }
    std::size_t size() const { return times_.size(); }
    double operator[](std::size_t i) const { return times_[i]; }

private:
    std::vector<double> times_;
};

// Row-major n_paths x grid.size() matrix of driver values.
struct PathBatch {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<double> values;

    std::span<const double> path(std::size_t i) const {
        return {values.data() + i * grid.size(), grid.size()};
    }
    double at(std::size_t path_index, std::size_t time_index) const {
        return values[path_index * grid.size() + time_index];
    }
};

// E[xi_s xi_t] = s^2H + t^2H - ((s+t)^2H + |t-s|^2H) / 2.
double sfbm_covariance(double s, double t, double hurst);

// E[M_s M_t] = beta^2 min(s,t) + gamma^2 sfbm_covariance(s, t, H).
double msfbm_covariance(double s, double t, const MixedDriverParams& params);

// cov(M_v - M_u, M_t - M_s) for t > s >= v > u >= 0, closed form.
double increment_covariance(double u, double v, double s, double t, const MixedDriverParams& params);

// E[(M_t - M_s)^2] for 0 <= s < t.
double increment_variance(double s, double t, const MixedDriverParams& params);

// Dense covariance matrix of (M_t1, ..., M_tm) over the positive grid times
// (the t = 0 value is identically zero and is excluded). Row-major m x m.
std::vector<double> covariance_matrix(const TimeGrid& grid, const MixedDriverParams& params);

// Exact joint samples of the driver on `grid` by factorizing the covariance
// matrix. Path i draws from its own substream of `seed`, so the batch is
// identical for any `threads`.
PathBatch sample_msfbm(const TimeGrid& grid, const MixedDriverParams& params, std::size_t n_paths,
                       std::uint64_t seed, unsigned threads = 1);

// Header `t_0,t_1,...`, one row per path.
void write_csv(std::ostream& out, const PathBatch& batch);

}  // namespace msfcev::process
