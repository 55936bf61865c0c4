#pragma once

#include <Eigen/Sparse>

#include <memory>

namespace co2hm::detail {

/// Solves a sequence of sparse systems sharing one sparsity pattern.
class LinearSolver {
 public:
  virtual ~LinearSolver() = default;
  /// Returns false when the system could not be solved.
  virtual bool solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                     Eigen::VectorXd& x) = 0;
};

/// KLU with pivot-order reuse for small systems; ILUT-preconditioned BiCGSTAB
/// with an UMFPACK fallback above `direct_limit` unknowns.
std::unique_ptr<LinearSolver> make_linear_solver(const Eigen::SparseMatrix<double>& pattern,
                                                 int direct_limit = 4000);

}  // namespace co2hm::detail
