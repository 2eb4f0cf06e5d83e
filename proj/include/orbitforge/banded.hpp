#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace orbitforge {

/// Thrown when a factorization that requires positive definiteness fails.
class NotPositiveDefinite : public std::runtime_error {
public:
    explicit NotPositiveDefinite(int minor)
        : std::runtime_error("matrix is not positive definite (leading minor " +
                             std::to_string(minor) + ")"),
          minor_(minor) {}
    int minor() const { return minor_; }

private:
    int minor_;
};

/// Symmetric banded matrix in LAPACK lower column-major band storage.
/// Entry (i,j) with i >= j and i-j <= kd lives at storage[j*ldab + (i-j)].
class SymBanded {
public:
    SymBanded(int n, int kd)
        : n_(n), kd_(kd), storage_(static_cast<size_t>(n) * (kd + 1), 0.0) {}

    int rows() const { return n_; }
    int band() const { return kd_; }
    int ldab() const { return kd_ + 1; }

    double& at(int i, int j) { return storage_[index(i, j)]; }
    double at(int i, int j) const { return storage_[index(i, j)]; }

    /// Symmetric accumulate: accepts (i,j) in either order.
    void add(int i, int j, double v) {
        if (i < j) std::swap(i, j);
        if (i - j > kd_) throw std::out_of_range("SymBanded::add outside band");
        storage_[index(i, j)] += v;
    }

    /// Read with symmetric/out-of-band semantics.
    double get(int i, int j) const {
        if (i < j) std::swap(i, j);
        if (i - j > kd_) return 0.0;
        return storage_[index(i, j)];
    }

    void setZero() { std::fill(storage_.begin(), storage_.end(), 0.0); }

    /// this += alpha * other (same shape required).
    SymBanded& axpy(double alpha, const SymBanded& other);

    Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd dense() const;

    const double* data() const { return storage_.data(); }
    double* data() { return storage_.data(); }

private:
    size_t index(int i, int j) const {
        return static_cast<size_t>(j) * (kd_ + 1) + static_cast<size_t>(i - j);
    }

    int n_;
    int kd_;
    std::vector<double> storage_;
};

/// Banded Cholesky factorization (dpbtrf). Throws NotPositiveDefinite.
class BandedCholesky {
public:
    explicit BandedCholesky(const SymBanded& a);
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    int rows() const { return n_; }

private:
    int n_;
    int kd_;
    std::vector<double> factor_;
};

struct GenEigPair {
    double value = 0.0;
    Eigen::VectorXd vector;
};

/// Extreme generalized eigenpair of A x = lambda B x with B symmetric
/// positive definite, both banded (dsbgvx). `largest` selects which end.
GenEigPair sym_banded_gen_eig(const SymBanded& a, const SymBanded& b, bool largest);

}  // namespace orbitforge
