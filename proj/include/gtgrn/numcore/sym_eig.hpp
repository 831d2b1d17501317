#pragma once

#include <vector>

#include "gtgrn/numcore/matrix.hpp"

namespace gtgrn::numcore {

/// Full eigendecomposition of a real symmetric matrix.
///  - eigenvalues ascending
///  - column k of eigenvectors is the unit eigenvector of eigenvalues[k]
///  - sign fixed so the first entry with |x| > 1e-12 in each column is non-negative
struct EigenDecomposition {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is negligible.
/// Throws DimensionError for non-square input, ContractError when asymmetry
/// exceeds 1e-10, NumericError if the sweep budget runs out.
EigenDecomposition sym_eig(const Matrix& a);

}  // namespace gtgrn::numcore
