#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

namespace cfgnn {

// Exact law of the empirical test coverage when the calibration set is a
// simple random sample of size n from the n+m pooled scores (no ties).
// P(Cover <= t) = 1 - PhiHG(c-1; n+m, n, c + floor(m t)), c = ceil((1-alpha)(n+1)).
double coverage_cdf(std::size_t n, std::size_t m, double alpha, double t);

struct CoverageDistribution {
  std::size_t n = 0;
  std::size_t m = 0;
  double alpha = 0.0;
  std::vector<double> t;         // grid points k/G for k = 1..G
  std::vector<double> cdf;       // P(Cover <= t_k)
  std::vector<double> pdf_mass;  // P(t_{k-1} < Cover <= t_k), first bin from 0 inclusive
};

CoverageDistribution coverage_pdf_grid(std::size_t n, std::size_t m, double alpha,
                                       std::size_t grid);

// CSV with header t,cdf,pdf_mass
void write_coverage_csv(const CoverageDistribution& dist, std::ostream& out);

// P(X <= k) for X hypergeometric with population N, n_white successes, and
// draws draws. Log-gamma PMF, tail summed in ascending mass order.
double hypergeom_cdf(std::int64_t k, std::int64_t population, std::int64_t n_white,
                     std::int64_t draws);

}  // namespace cfgnn
