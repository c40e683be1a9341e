#include "cfgnn/coverage_dist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "cfgnn/numeric.hpp"

namespace cfgnn {

namespace {

double log_choose(std::int64_t a, std::int64_t b) {
  if (b < 0 || b > a) return -std::numeric_limits<double>::infinity();
  return std::lgamma(static_cast<double>(a) + 1.0) -
         std::lgamma(static_cast<double>(b) + 1.0) -
         std::lgamma(static_cast<double>(a - b) + 1.0);
}

double hypergeom_log_pmf(std::int64_t x, std::int64_t population, std::int64_t n_white,
                         std::int64_t draws) {
  return log_choose(n_white, x) + log_choose(population - n_white, draws - x) -
         log_choose(population, draws);
}

}  // namespace

double hypergeom_cdf(std::int64_t k, std::int64_t population, std::int64_t n_white,
                     std::int64_t draws) {
  if (population < 0 || n_white < 0 || n_white > population || draws < 0 ||
      draws > population) {
    throw std::invalid_argument("hypergeom_cdf: invalid parameters");
  }
  const std::int64_t lo = std::max<std::int64_t>(0, draws - (population - n_white));
  const std::int64_t hi = std::min(n_white, draws);
  if (k < lo) return 0.0;
  if (k >= hi) return 1.0;

  // Mass increases toward the mode, so summing the shorter tail outward-in
  // adds terms in ascending magnitude.
  const std::int64_t mode = static_cast<std::int64_t>(
      std::floor(static_cast<double>((draws + 1) * (n_white + 1)) /
                 static_cast<double>(population + 2)));
  if (k < mode) {
    double sum = 0.0;
    for (std::int64_t x = lo; x <= k; ++x) {
      sum += std::exp(hypergeom_log_pmf(x, population, n_white, draws));
    }
    return std::min(1.0, sum);
  }
  double tail = 0.0;
  for (std::int64_t x = hi; x > k; --x) {
    tail += std::exp(hypergeom_log_pmf(x, population, n_white, draws));
  }
  return std::max(0.0, 1.0 - tail);
}

double coverage_cdf(std::size_t n, std::size_t m, double alpha, double t) {
  if (n < 1 || m < 1) throw std::invalid_argument("coverage_cdf: n and m must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("coverage_cdf: alpha must be in (0,1)");
  }
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("coverage_cdf: t must be in (0,1)");
  const std::int64_t population = static_cast<std::int64_t>(n + m);
  const std::int64_t c = snapped_ceil((1.0 - alpha) * static_cast<double>(n + 1));
  if (c > static_cast<std::int64_t>(n)) return 0.0;  // FULL threshold: coverage is always 1
  const std::int64_t covered = snapped_floor(static_cast<double>(m) * t);
  const std::int64_t draws = std::min(population, c + covered);
  return 1.0 - hypergeom_cdf(c - 1, population, static_cast<std::int64_t>(n), draws);
}

CoverageDistribution coverage_pdf_grid(std::size_t n, std::size_t m, double alpha,
                                       std::size_t grid) {
  if (grid < 1) throw std::invalid_argument("coverage_pdf_grid: grid must be >= 1");
  CoverageDistribution dist;
  dist.n = n;
  dist.m = m;
  dist.alpha = alpha;
  dist.t.resize(grid);
  dist.cdf.resize(grid);
  dist.pdf_mass.resize(grid);
  double prev = 0.0;
  for (std::size_t k = 1; k <= grid; ++k) {
    const double tk = static_cast<double>(k) / static_cast<double>(grid);
    double cdf;
    if (k == grid) {
      cdf = 1.0;
    } else {
      cdf = coverage_cdf(n, m, alpha, tk);
    }
    dist.t[k - 1] = tk;
    dist.cdf[k - 1] = cdf;
    dist.pdf_mass[k - 1] = cdf - prev;  // first bin absorbs the atom at 0
    prev = cdf;
  }
  return dist;
}

void write_coverage_csv(const CoverageDistribution& dist, std::ostream& out) {
  out << "t,cdf,pdf_mass\n";
  char buf[96];
  for (std::size_t i = 0; i < dist.t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", dist.t[i], dist.cdf[i],
                  dist.pdf_mass[i]);
    out << buf;
  }
}

}  // namespace cfgnn
