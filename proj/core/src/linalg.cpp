#include "locclab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace locclab {

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat Mat::col(const std::vector<cplx>& v) {
    Mat m(static_cast<int>(v.size()), 1);
    for (size_t i = 0; i < v.size(); ++i) m.a_[i] = v[i];
    return m;
}

Mat Mat::row(const std::vector<cplx>& v) {
    Mat m(1, static_cast<int>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) m.a_[i] = v[i];
    return m;
}

Mat Mat::diag(const std::vector<cplx>& d) {
    Mat m(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (size_t i = 0; i < d.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return m;
}

bool Mat::finite() const {
    for (const auto& z : a_)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

Mat Mat::operator*(const Mat& rhs) const {
    if (cols_ != rhs.rows_) throw std::invalid_argument("Mat::operator*: shape mismatch");
    Mat out(rows_, rhs.cols_);
    for (int i = 0; i < rows_; ++i)
        for (int k = 0; k < cols_; ++k) {
            const cplx aik = (*this)(i, k);
            if (aik == cplx{}) continue;
            for (int j = 0; j < rhs.cols_; ++j) out(i, j) += aik * rhs(k, j);
        }
    return out;
}

Mat Mat::operator+(const Mat& rhs) const {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw std::invalid_argument("Mat::operator+: shape mismatch");
    Mat out = *this;
    for (size_t i = 0; i < a_.size(); ++i) out.a_[i] += rhs.a_[i];
    return out;
}

Mat Mat::operator-(const Mat& rhs) const {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw std::invalid_argument("Mat::operator-: shape mismatch");
    Mat out = *this;
    for (size_t i = 0; i < a_.size(); ++i) out.a_[i] -= rhs.a_[i];
    return out;
}

Mat Mat::operator*(cplx s) const {
    Mat out = *this;
    for (auto& z : out.a_) z *= s;
    return out;
}

Mat dagger(const Mat& m) {
    Mat out(m.cols(), m.rows());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) out(j, i) = std::conj(m(i, j));
    return out;
}

Mat conjugate(const Mat& m) {
    Mat out = m;
    for (auto& z : out.data()) z = std::conj(z);
    return out;
}

Mat transpose(const Mat& m) {
    Mat out(m.cols(), m.rows());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) {
            const cplx aij = a(i, j);
            if (aij == cplx{}) continue;
            for (int k = 0; k < b.rows(); ++k)
                for (int l = 0; l < b.cols(); ++l)
                    out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
        }
    return out;
}

double fro_norm(const Mat& m) {
    double s = 0;
    for (const auto& z : m.data()) s += std::norm(z);
    return std::sqrt(s);
}

double max_abs(const Mat& m) {
    double s = 0;
    for (const auto& z : m.data()) s = std::max(s, std::abs(z));
    return s;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a.data()[i] - b.data()[i]));
    return s;
}

bool approx_equal(const Mat& a, const Mat& b, double eps) {
    return a.rows() == b.rows() && a.cols() == b.cols() && max_abs_diff(a, b) <= eps;
}

cplx trace(const Mat& m) {
    if (!m.is_square()) throw std::invalid_argument("trace: matrix not square");
    cplx s = 0;
    for (int i = 0; i < m.rows(); ++i) s += m(i, i);
    return s;
}

cplx det(const Mat& m) {
    if (!m.is_square()) throw std::invalid_argument("det: matrix not square");
    if (m.rows() == 1) return m(0, 0);
    if (m.rows() == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    // LU with partial pivoting for the rare larger case.
    Mat a = m;
    const int n = a.rows();
    cplx d = 1.0;
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (std::abs(a(piv, k)) == 0.0) return 0.0;
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            d = -d;
        }
        d *= a(k, k);
        for (int i = k + 1; i < n; ++i) {
            const cplx f = a(i, k) / a(k, k);
            for (int j = k; j < n; ++j) a(i, j) -= f * a(k, j);
        }
    }
    return d;
}

namespace {

void require_finite(const Mat& m, const char* who) {
    if (!m.finite()) throw std::domain_error(std::string(who) + ": non-finite input");
}

// Orthonormally completes zero columns of u (columns marked dead) against the
// live ones, making the first nonzero entry of each new column real-positive.
void complete_columns(Mat& u, const std::vector<bool>& dead) {
    const int m = u.rows(), n = u.cols();
    for (int c = 0; c < n; ++c) {
        if (!dead[c]) continue;
        for (int seed = 0; seed < m; ++seed) {
            // Try basis vector e_seed, orthogonalize against existing columns.
            std::vector<cplx> v(static_cast<size_t>(m));
            v[static_cast<size_t>(seed)] = 1.0;
            for (int c2 = 0; c2 < n; ++c2) {
                if (c2 == c || (dead[c2] && c2 > c)) continue;
                cplx ip = 0;
                for (int r = 0; r < m; ++r) ip += std::conj(u(r, c2)) * v[static_cast<size_t>(r)];
                for (int r = 0; r < m; ++r) v[static_cast<size_t>(r)] -= ip * u(r, c2);
            }
            double nrm = 0;
            for (const auto& z : v) nrm += std::norm(z);
            nrm = std::sqrt(nrm);
            if (nrm > 1e-7) {
                cplx phase = 1.0;
                for (const auto& z : v)
                    if (std::abs(z) > 1e-12) {
                        phase = std::abs(z) / z;
                        break;
                    }
                for (int r = 0; r < m; ++r) u(r, c) = v[static_cast<size_t>(r)] * phase / nrm;
                break;
            }
        }
    }
}

}  // namespace

SvdResult svd(const Mat& m_in) {
    require_finite(m_in, "svd");
    if (m_in.rows() < m_in.cols()) {
        // Work on the dagger and swap factors back.
        SvdResult t = svd(dagger(m_in));
        SvdResult out;
        out.sigma = t.sigma;
        out.u = dagger(t.vdag);
        out.vdag = dagger(t.u);
        // Re-apply the phase convention to the new left factor.
        for (int c = 0; c < out.u.cols(); ++c) {
            cplx phase = 1.0;
            for (int r = 0; r < out.u.rows(); ++r)
                if (std::abs(out.u(r, c)) > 1e-12) {
                    phase = std::abs(out.u(r, c)) / out.u(r, c);
                    break;
                }
            for (int r = 0; r < out.u.rows(); ++r) out.u(r, c) *= phase;
            for (int k = 0; k < out.vdag.cols(); ++k) out.vdag(c, k) *= std::conj(phase);
        }
        return out;
    }

    const int m = m_in.rows(), n = m_in.cols();
    Mat a = m_in;
    Mat v = Mat::identity(n);

    // One-sided Jacobi: rotate column pairs until all are mutually orthogonal.
    const int max_sweeps = 64;
    const double tol2 = 1e-30;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                cplx apq = 0;
                double app = 0, aqq = 0;
                for (int r = 0; r < m; ++r) {
                    apq += std::conj(a(r, p)) * a(r, q);
                    app += std::norm(a(r, p));
                    aqq += std::norm(a(r, q));
                }
                if (std::norm(apq) <= tol2 * app * aqq || std::abs(apq) == 0.0) continue;
                rotated = true;
                const cplx phase = apq / std::abs(apq);
                const double g = std::abs(apq);
                const double tau = (aqq - app) / (2.0 * g);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                // Columns (p,q) <- (p,q) * [[c, s*phase], [-s*conj(phase), c]]
                for (int r = 0; r < m; ++r) {
                    const cplx ap = a(r, p), aq = a(r, q);
                    a(r, p) = c * ap - s * std::conj(phase) * aq;
                    a(r, q) = s * phase * ap + c * aq;
                }
                for (int r = 0; r < n; ++r) {
                    const cplx vp = v(r, p), vq = v(r, q);
                    v(r, p) = c * vp - s * std::conj(phase) * vq;
                    v(r, q) = s * phase * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> nrm(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) {
        double s = 0;
        for (int r = 0; r < m; ++r) s += std::norm(a(r, c));
        nrm[static_cast<size_t>(c)] = std::sqrt(s);
    }
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return nrm[static_cast<size_t>(x)] > nrm[static_cast<size_t>(y)]; });

    SvdResult out;
    out.sigma.resize(static_cast<size_t>(n));
    out.u = Mat(m, n);
    Mat vs(n, n);
    std::vector<bool> dead(static_cast<size_t>(n), false);
    for (int c = 0; c < n; ++c) {
        const int src = order[static_cast<size_t>(c)];
        const double s = nrm[static_cast<size_t>(src)];
        out.sigma[static_cast<size_t>(c)] = s;
        if (s > 1e-300) {
            for (int r = 0; r < m; ++r) out.u(r, c) = a(r, src) / s;
        } else {
            dead[static_cast<size_t>(c)] = true;
        }
        for (int r = 0; r < n; ++r) vs(r, c) = v(r, src);
    }
    complete_columns(out.u, dead);

    // Phase convention: first nonzero entry of each left singular vector is
    // real-positive; the right factor absorbs the compensating phase.
    for (int c = 0; c < n; ++c) {
        cplx phase = 1.0;
        for (int r = 0; r < m; ++r)
            if (std::abs(out.u(r, c)) > 1e-12) {
                phase = std::abs(out.u(r, c)) / out.u(r, c);
                break;
            }
        for (int r = 0; r < m; ++r) out.u(r, c) *= phase;
        for (int r = 0; r < n; ++r) vs(r, c) *= std::conj(phase);
    }
    out.vdag = dagger(vs);
    return out;
}

PolarResult polar_decompose(const Mat& t) {
    require_finite(t, "polar_decompose");
    if (t.rows() < t.cols()) throw std::invalid_argument("polar_decompose: need rows >= cols");
    SvdResult s = svd(t);
    const int n = t.cols();
    Mat sig = Mat(n, n);
    for (int i = 0; i < n; ++i) sig(i, i) = s.sigma[static_cast<size_t>(i)];
    PolarResult out;
    out.isometry = s.u * s.vdag;
    out.root = dagger(s.vdag) * sig * s.vdag;
    // Kill the tiny anti-Hermitian residue from the two rounding paths.
    out.root = (out.root + dagger(out.root)) * cplx(0.5, 0.0);
    return out;
}

int rank_tol(const Mat& m, const Tolerance& tol) {
    require_finite(m, "rank_tol");
    SvdResult s = svd(m);
    const double smax = s.sigma.empty() ? 0.0 : s.sigma.front();
    const double cut = tol.eps_rank * std::max(1.0, smax);
    int r = 0;
    for (double x : s.sigma)
        if (x > cut) ++r;
    return r;
}

Mat partial_trace(const Mat& m, int dim_a, int dim_b, KeepSide keep) {
    if (!m.is_square() || m.rows() != dim_a * dim_b)
        throw std::invalid_argument("partial_trace: dimension mismatch");
    if (keep == KeepSide::A) {
        Mat out(dim_a, dim_a);
        for (int a = 0; a < dim_a; ++a)
            for (int a2 = 0; a2 < dim_a; ++a2)
                for (int b = 0; b < dim_b; ++b) out(a, a2) += m(a * dim_b + b, a2 * dim_b + b);
        return out;
    }
    Mat out(dim_b, dim_b);
    for (int b = 0; b < dim_b; ++b)
        for (int b2 = 0; b2 < dim_b; ++b2)
            for (int a = 0; a < dim_a; ++a) out(b, b2) += m(a * dim_b + b, a * dim_b + b2);
    return out;
}

HermEigResult hermitian_eig(const Mat& h_in) {
    require_finite(h_in, "hermitian_eig");
    if (!h_in.is_square()) throw std::invalid_argument("hermitian_eig: matrix not square");
    const int n = h_in.rows();
    Mat a = h_in;
    Mat v = Mat::identity(n);
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += std::norm(a(p, q));
        if (off < 1e-30) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const cplx apq = a(p, q);
                if (std::abs(apq) < 1e-18) continue;
                const double app = a(p, p).real(), aqq = a(q, q).real();
                const cplx phase = apq / std::abs(apq);
                const double g = std::abs(apq);
                const double tau = (aqq - app) / (2.0 * g);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                // J = [[c, s*phase], [-s*conj(phase), c]]; A <- J^dag A J.
                for (int r = 0; r < n; ++r) {
                    const cplx arp = a(r, p), arq = a(r, q);
                    a(r, p) = c * arp - s * std::conj(phase) * arq;
                    a(r, q) = s * phase * arp + c * arq;
                }
                for (int r = 0; r < n; ++r) {
                    const cplx apr = a(p, r), aqr = a(q, r);
                    a(p, r) = c * apr - s * phase * aqr;
                    a(q, r) = s * std::conj(phase) * apr + c * aqr;
                }
                for (int r = 0; r < n; ++r) {
                    const cplx vrp = v(r, p), vrq = v(r, q);
                    v(r, p) = c * vrp - s * std::conj(phase) * vrq;
                    v(r, q) = s * phase * vrp + c * vrq;
                }
            }
        }
    }
    std::vector<double> ev(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ev[static_cast<size_t>(i)] = a(i, i).real();
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return ev[static_cast<size_t>(x)] > ev[static_cast<size_t>(y)]; });
    HermEigResult out;
    out.evals.resize(static_cast<size_t>(n));
    out.evecs = Mat(n, n);
    for (int c = 0; c < n; ++c) {
        out.evals[static_cast<size_t>(c)] = ev[static_cast<size_t>(order[static_cast<size_t>(c)])];
        for (int r = 0; r < n; ++r) out.evecs(r, c) = v(r, order[static_cast<size_t>(c)]);
    }
    return out;
}

Mat sqrt_psd(const Mat& h, double clamp_eps) {
    HermEigResult e = hermitian_eig(h);
    const int n = h.rows();
    double emax = 0;
    for (double x : e.evals) emax = std::max(emax, std::abs(x));
    Mat d(n, n);
    for (int i = 0; i < n; ++i) {
        double x = e.evals[static_cast<size_t>(i)];
        if (x < 0) {
            if (x < -clamp_eps * std::max(1.0, emax))
                throw std::domain_error("sqrt_psd: matrix is not positive semidefinite");
            x = 0;
        }
        d(i, i) = std::sqrt(x);
    }
    return e.evecs * d * dagger(e.evecs);
}

Mat inverse(const Mat& m) {
    require_finite(m, "inverse");
    if (!m.is_square()) throw std::invalid_argument("inverse: matrix not square");
    const int n = m.rows();
    Mat a = m;
    Mat inv = Mat::identity(n);
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (std::abs(a(piv, k)) < 1e-300) throw std::domain_error("inverse: singular matrix");
        if (piv != k)
            for (int j = 0; j < n; ++j) {
                std::swap(a(k, j), a(piv, j));
                std::swap(inv(k, j), inv(piv, j));
            }
        const cplx d = a(k, k);
        for (int j = 0; j < n; ++j) {
            a(k, j) /= d;
            inv(k, j) /= d;
        }
        for (int i = 0; i < n; ++i) {
            if (i == k) continue;
            const cplx f = a(i, k);
            if (f == cplx{}) continue;
            for (int j = 0; j < n; ++j) {
                a(i, j) -= f * a(k, j);
                inv(i, j) -= f * inv(k, j);
            }
        }
    }
    return inv;
}

Mat pinv(const Mat& m, const Tolerance& tol) {
    SvdResult s = svd(m);
    const double smax = s.sigma.empty() ? 0.0 : s.sigma.front();
    const double cut = tol.eps_rank * std::max(1.0, smax);
    const int k = static_cast<int>(s.sigma.size());
    Mat d(k, k);
    for (int i = 0; i < k; ++i)
        d(i, i) = s.sigma[static_cast<size_t>(i)] > cut ? 1.0 / s.sigma[static_cast<size_t>(i)] : 0.0;
    return dagger(s.vdag) * d * dagger(s.u);
}

Mat unitarize(const Mat& m) {
    return polar_decompose(m).isometry;
}

}  // namespace locclab
