#include "orbitforge/banded.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>

namespace orbitforge {

SymBanded& SymBanded::axpy(double alpha, const SymBanded& other) {
    if (other.n_ != n_ || other.kd_ != kd_)
        throw std::invalid_argument("SymBanded::axpy shape mismatch");
    for (size_t k = 0; k < storage_.size(); ++k) storage_[k] += alpha * other.storage_[k];
    return *this;
}

Eigen::VectorXd SymBanded::multiply(const Eigen::VectorXd& x) const {
    if (x.size() != n_) throw std::invalid_argument("SymBanded::multiply size mismatch");
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n_);
    for (int j = 0; j < n_; ++j) {
        const int imax = std::min(n_ - 1, j + kd_);
        y[j] += storage_[index(j, j)] * x[j];
        for (int i = j + 1; i <= imax; ++i) {
            const double v = storage_[index(i, j)];
            y[i] += v * x[j];
            y[j] += v * x[i];
        }
    }
    return y;
}

Eigen::MatrixXd SymBanded::dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
    for (int j = 0; j < n_; ++j) {
        const int imax = std::min(n_ - 1, j + kd_);
        for (int i = j; i <= imax; ++i) {
            m(i, j) = storage_[index(i, j)];
            m(j, i) = m(i, j);
        }
    }
    return m;
}

BandedCholesky::BandedCholesky(const SymBanded& a)
    : n_(a.rows()), kd_(a.band()), factor_(a.data(), a.data() + static_cast<size_t>(a.rows()) * a.ldab()) {
    const int info = LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'L', n_, kd_, factor_.data(), kd_ + 1);
    if (info > 0) throw NotPositiveDefinite(info);
    if (info < 0) throw std::runtime_error("dpbtrf: illegal argument " + std::to_string(-info));
}

Eigen::VectorXd BandedCholesky::solve(const Eigen::VectorXd& rhs) const {
    if (rhs.size() != n_) throw std::invalid_argument("BandedCholesky::solve size mismatch");
    Eigen::VectorXd x = rhs;
    const int info = LAPACKE_dpbtrs(LAPACK_COL_MAJOR, 'L', n_, kd_, 1, factor_.data(), kd_ + 1,
                                    x.data(), n_);
    if (info != 0) throw std::runtime_error("dpbtrs failed: info " + std::to_string(info));
    return x;
}

GenEigPair sym_banded_gen_eig(const SymBanded& a, const SymBanded& b, bool largest) {
    if (a.rows() != b.rows()) throw std::invalid_argument("gen_eig shape mismatch");
    const int n = a.rows();
    const int ka = a.band();
    const int kb = b.band();
    // dsbgvx destroys inputs.
    std::vector<double> ab(a.data(), a.data() + static_cast<size_t>(n) * a.ldab());
    std::vector<double> bb(b.data(), b.data() + static_cast<size_t>(n) * b.ldab());
    std::vector<double> w(n), z(static_cast<size_t>(n)), q(static_cast<size_t>(n) * n);
    std::vector<int> ifail(n);
    int m = 0;
    const int target = largest ? n : 1;
    const double abstol = 2.0 * LAPACKE_dlamch('S');
    const int info = LAPACKE_dsbgvx(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, ka, kb, ab.data(),
                                    ka + 1, bb.data(), kb + 1, q.data(), n, 0.0, 0.0, target,
                                    target, abstol, &m, w.data(), z.data(), n, ifail.data());
    if (info > n && info <= 2 * n)
        throw NotPositiveDefinite(info - n);  // dpbstf failed: B not positive definite
    if (info != 0 || m < 1)
        throw std::runtime_error("dsbgvx eigen-iteration failed: info " + std::to_string(info));
    GenEigPair out;
    out.value = w[0];
    out.vector = Eigen::Map<Eigen::VectorXd>(z.data(), n);
    return out;
}

}  // namespace orbitforge
