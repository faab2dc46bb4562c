#ifndef AFREE_RNG_HPP
#define AFREE_RNG_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace afree {

// Deterministic helper around mt19937_64. All randomized paths in the library
// take an explicit seed so that fixed-seed runs are reproducible.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double a = 0.0, double b = 1.0) {
    return std::uniform_real_distribution<double>(a, b)(gen_);
  }
  double normal(double mu = 0.0, double sigma = 1.0) {
    return std::normal_distribution<double>(mu, sigma)(gen_);
  }
  int uniform_int(int a, int b) {  // inclusive
    return std::uniform_int_distribution<int>(a, b)(gen_);
  }

  Eigen::VectorXd normal_vector(int dim, double sigma = 1.0) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal(0.0, sigma);
    return v;
  }

  Eigen::VectorXd unit_vector(int dim) {
    Eigen::VectorXd v;
    do {
      v = normal_vector(dim);
    } while (v.norm() < 1e-12);
    return v / v.norm();
  }

  std::mt19937_64& engine() { return gen_; }

private:
  std::mt19937_64 gen_;
};

} // namespace afree

#endif
