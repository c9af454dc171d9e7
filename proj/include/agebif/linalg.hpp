#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace agebif {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Factorized symmetric tridiagonal system with a constant off-diagonal,
///   d_i x_{i-1 } ... : (off, d_i, off) rows, solved by the Thomas algorithm.
/// Every implicit age step in this library produces a matrix of this shape
/// (identity plus scaled second-difference plus a diagonal potential), so the
/// factorization is done once per step and reused for all right-hand sides.
class TridiagFactor {
public:
    TridiagFactor(const Vector& diag, double off) : n_(static_cast<int>(diag.size())), off_(off) {
        if (n_ < 1) throw std::invalid_argument("TridiagFactor: empty diagonal");
        inv_pivot_.resize(n_);
        upper_ratio_.resize(n_);
        double pivot = diag[0];
        for (int i = 0;; ++i) {
            if (!(pivot > 0.0))
                throw std::runtime_error("TridiagFactor: nonpositive pivot (lost diagonal dominance)");
            inv_pivot_[i] = 1.0 / pivot;
            if (i + 1 == n_) break;
            upper_ratio_[i] = off * inv_pivot_[i];
            pivot = diag[i + 1] - off * upper_ratio_[i];
        }
    }

    /// Solve in place; works on vectors and on matrices column by column.
    template <typename Derived>
    void solve_inplace(Eigen::MatrixBase<Derived>& x) const {
        for (int i = 1; i < n_; ++i) x.row(i) -= upper_ratio_[i - 1] * x.row(i - 1);
        x.row(n_ - 1) *= inv_pivot_[n_ - 1];
        for (int i = n_ - 2; i >= 0; --i)
            x.row(i) = (x.row(i) - off_ * x.row(i + 1)) * inv_pivot_[i];
    }

    int size() const { return n_; }

private:
    int n_;
    double off_;
    Vector inv_pivot_;
    Vector upper_ratio_;
};

}  // namespace agebif
