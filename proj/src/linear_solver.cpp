#include "linear_solver.hpp"

#include <Eigen/UmfPackSupport>
#include <klu.h>

namespace co2hm::detail {

namespace {

class KluSolver final : public LinearSolver {
 public:
  explicit KluSolver(const Eigen::SparseMatrix<double>& A) : n_(static_cast<int>(A.rows())) {
    klu_defaults(&common_);
    common_.btf = 0;
    // the pattern is copied since KLU keeps no reference to it
    outer_.assign(A.outerIndexPtr(), A.outerIndexPtr() + A.outerSize() + 1);
    inner_.assign(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros());
    symbolic_ = klu_analyze(n_, outer_.data(), inner_.data(), &common_);
  }
  ~KluSolver() override {
    if (numeric_) klu_free_numeric(&numeric_, &common_);
    if (symbolic_) klu_free_symbolic(&symbolic_, &common_);
  }
  KluSolver(const KluSolver&) = delete;
  KluSolver& operator=(const KluSolver&) = delete;

  bool solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
             Eigen::VectorXd& x) override {
    if (!symbolic_) return false;
    auto* values = const_cast<double*>(A.valuePtr());
    bool fresh = false;
    if (numeric_) {
      // reuse the previous pivot sequence unless it has become unstable
      if (!klu_refactor(outer_.data(), inner_.data(), values, symbolic_, numeric_, &common_) ||
          !klu_rcond(symbolic_, numeric_, &common_) || common_.rcond < 1e-13) {
        klu_free_numeric(&numeric_, &common_);
      }
    }
    if (!numeric_) {
      numeric_ = klu_factor(outer_.data(), inner_.data(), values, symbolic_, &common_);
      if (!numeric_) return false;
      fresh = true;
    }
    x = b;
    if (!klu_solve(symbolic_, numeric_, n_, 1, x.data(), &common_)) return false;
    if (!fresh) {
      // one step of iterative refinement guards against a stale pivot order
      const Eigen::VectorXd r = b - A * x;
      if (r.norm() > 1e-8 * b.norm()) {
        Eigen::VectorXd d = r;
        klu_solve(symbolic_, numeric_, n_, 1, d.data(), &common_);
        x += d;
      }
    }
    return x.allFinite();
  }

 private:
  int n_;
  klu_common common_{};
  klu_symbolic* symbolic_ = nullptr;
  klu_numeric* numeric_ = nullptr;
  std::vector<int> outer_, inner_;
};

class IterativeSolver final : public LinearSolver {
 public:
  explicit IterativeSolver(const Eigen::SparseMatrix<double>& A) {
    bicg_.preconditioner().setFillfactor(5);
    bicg_.preconditioner().setDroptol(1e-4);
    bicg_.setTolerance(1e-8);
    bicg_.setMaxIterations(200);
    umf_.analyzePattern(A);
  }

  bool solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
             Eigen::VectorXd& x) override {
    bicg_.compute(A);
    if (bicg_.info() == Eigen::Success) {
      x = bicg_.solve(b);
      if (bicg_.info() == Eigen::Success && x.allFinite()) return true;
    }
    umf_.factorize(A);
    if (umf_.info() != Eigen::Success) return false;
    x = umf_.solve(b);
    return x.allFinite();
  }

 private:
  Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> bicg_;
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> umf_;
};

}  // namespace

std::unique_ptr<LinearSolver> make_linear_solver(const Eigen::SparseMatrix<double>& pattern,
                                                 int direct_limit) {
  if (pattern.rows() <= direct_limit) return std::make_unique<KluSolver>(pattern);
  return std::make_unique<IterativeSolver>(pattern);
}

}  // namespace co2hm::detail
