#ifndef AFREE_MULTI_INDEX_HPP
#define AFREE_MULTI_INDEX_HPP

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace afree {

/// Multi-index alpha in N_0^d; modulus |alpha| is the derivative order it
/// contributes.
struct MultiIndex {
  std::vector<int> entries;

  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> e) : entries(std::move(e)) {
    for (int v : entries)
      if (v < 0) throw std::invalid_argument("MultiIndex: negative entry");
  }

  int dim() const { return static_cast<int>(entries.size()); }
  int modulus() const { return std::accumulate(entries.begin(), entries.end(), 0); }

  bool operator==(const MultiIndex& o) const { return entries == o.entries; }
};

// xi^alpha = prod xi_i^{alpha_i}
inline double monomial(const MultiIndex& alpha, const double* xi) {
  double p = 1.0;
  for (int i = 0; i < alpha.dim(); ++i)
    for (int k = 0; k < alpha.entries[i]; ++k) p *= xi[i];
  return p;
}

// d/dxi_j of xi^alpha
inline double monomial_derivative(const MultiIndex& alpha, const double* xi, int j) {
  int aj = alpha.entries[j];
  if (aj == 0) return 0.0;
  double p = static_cast<double>(aj);
  for (int i = 0; i < alpha.dim(); ++i) {
    int e = alpha.entries[i] - (i == j ? 1 : 0);
    for (int k = 0; k < e; ++k) p *= xi[i];
  }
  return p;
}

} // namespace afree

#endif
