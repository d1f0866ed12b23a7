#pragma once

#include <complex>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace locclab {

using cplx = std::complex<double>;

/// Numerical cutoffs used throughout the library.
///
/// eps_rank is a relative singular-value cutoff (scaled by the largest
/// singular value), eps_eq an elementwise equality tolerance.
struct Tolerance {
    double eps_rank = 1e-9;
    double eps_eq = 1e-9;
};

/// Dense complex matrix, row-major, for dimensions up to 16.
///
/// Values are immutable in spirit: every operation returns a new matrix, so
/// instances can be shared freely across threads.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows * cols)) {
        if (rows < 1 || cols < 1) throw std::invalid_argument("Mat: dimensions must be >= 1");
    }
    Mat(int rows, int cols, std::initializer_list<cplx> entries) : Mat(rows, cols) {
        if (static_cast<int>(entries.size()) != rows * cols)
            throw std::invalid_argument("Mat: entry count mismatch");
        std::copy(entries.begin(), entries.end(), a_.begin());
    }

    static Mat zero(int rows, int cols) { return Mat(rows, cols); }
    static Mat identity(int n);
    /// Column vector from amplitudes.
    static Mat col(const std::vector<cplx>& v);
    /// Row vector.
    static Mat row(const std::vector<cplx>& v);
    static Mat diag(const std::vector<cplx>& d);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool is_square() const { return rows_ == cols_; }
    size_t size() const { return a_.size(); }

    cplx& operator()(int r, int c) { return a_[static_cast<size_t>(r) * cols_ + c]; }
    const cplx& operator()(int r, int c) const { return a_[static_cast<size_t>(r) * cols_ + c]; }

    const std::vector<cplx>& data() const { return a_; }
    std::vector<cplx>& data() { return a_; }

    bool finite() const;

    Mat operator*(const Mat& rhs) const;
    Mat operator+(const Mat& rhs) const;
    Mat operator-(const Mat& rhs) const;
    Mat operator*(cplx s) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<cplx> a_;
};

inline Mat operator*(cplx s, const Mat& m) { return m * s; }

/// Conjugate transpose.
Mat dagger(const Mat& m);
/// Elementwise complex conjugate.
Mat conjugate(const Mat& m);
/// Plain transpose.
Mat transpose(const Mat& m);

Mat kron(const Mat& a, const Mat& b);

/// Frobenius norm.
double fro_norm(const Mat& m);
/// Largest elementwise modulus.
double max_abs(const Mat& m);
double max_abs_diff(const Mat& a, const Mat& b);
bool approx_equal(const Mat& a, const Mat& b, double eps);

cplx trace(const Mat& m);
/// 2x2 determinant only; larger sizes go through lu_det.
cplx det(const Mat& m);

struct SvdResult {
    Mat u;                      // m x k, orthonormal columns (k = min(m, n))
    std::vector<double> sigma;  // descending, nonnegative
    Mat vdag;                   // k x n
};

/// Singular value decomposition by one-sided Jacobi iteration.
///
/// Chosen over a library routine because every matrix in this codebase is at
/// most 16x16 and the phase convention must be reproducible: the first
/// nonzero entry of each left singular vector is made real and positive.
SvdResult svd(const Mat& m);

struct PolarResult {
    Mat isometry;  // m x n, orthonormal columns
    Mat root;      // n x n, Hermitian PSD, root = sqrt(T^dag T)
};

/// T = isometry * root with root = sqrt(T^dag T); requires rows >= cols.
/// Off the support of T the isometry is completed canonically.
PolarResult polar_decompose(const Mat& t);

/// Number of singular values above eps_rank * max(1, sigma_max).
int rank_tol(const Mat& m, const Tolerance& tol = {});

enum class KeepSide { A, B };

/// Partial trace of a (dA*dB)x(dA*dB) matrix over one factor.
Mat partial_trace(const Mat& m, int dim_a, int dim_b, KeepSide keep);

struct HermEigResult {
    std::vector<double> evals;  // descending
    Mat evecs;                  // columns are eigenvectors
};

/// Eigendecomposition of a Hermitian matrix (two-sided Jacobi).
HermEigResult hermitian_eig(const Mat& h);

/// Hermitian PSD square root; small negative eigenvalues (within tol) are
/// clamped to zero.
Mat sqrt_psd(const Mat& h, double clamp_eps = 1e-12);

/// Inverse by Gauss-Jordan with partial pivoting.
Mat inverse(const Mat& m);

/// Moore-Penrose pseudoinverse via SVD.
Mat pinv(const Mat& m, const Tolerance& tol = {});

/// Nearest unitary/isometry in Frobenius norm (polar projection).
Mat unitarize(const Mat& m);

}  // namespace locclab
