#include "locclab/states.hpp"

#include <algorithm>
#include <cmath>

namespace locclab {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double wrap_angle(double theta) {
    double t = std::remainder(theta, 2.0 * kPi);
    if (t <= -kPi) t += 2.0 * kPi;
    return t;
}

PureState::PureState(std::vector<cplx> amps, int da, int db)
    : amplitudes(std::move(amps)), dim_a(da), dim_b(db) {
    if (da < 1 || db < 1 || static_cast<int>(amplitudes.size()) != da * db)
        throw std::invalid_argument("PureState: amplitude count must equal dim_a * dim_b");
}

Mat PureState::coefficient_matrix() const {
    Mat c(dim_a, dim_b);
    for (int a = 0; a < dim_a; ++a)
        for (int b = 0; b < dim_b; ++b) c(a, b) = amp(a, b);
    return c;
}

double PureState::norm() const {
    double s = 0;
    for (const auto& z : amplitudes) s += std::norm(z);
    return std::sqrt(s);
}

SchmidtDecomposition schmidt_decompose(const PureState& psi, double eps_norm) {
    if (std::abs(psi.norm() - 1.0) > std::max(eps_norm, 1e-12))
        throw std::invalid_argument("schmidt_decompose: state is not normalized");
    SvdResult s = svd(psi.coefficient_matrix());
    SchmidtDecomposition out;
    out.coeffs = s.sigma;
    out.basis_a = s.u;
    // psi = sum_k sigma_k |u_k> (x) |conj(v_k)>, so Bob's vectors are the
    // conjugated columns of V, i.e. the rows of vdag laid out as columns.
    out.basis_b = transpose(s.vdag);
    return out;
}

int schmidt_number(const PureState& psi, const Tolerance& tol) {
    return rank_tol(psi.coefficient_matrix(), tol);
}

double entanglement_entropy(const PureState& psi) {
    SchmidtDecomposition d = schmidt_decompose(psi);
    double e = 0;
    for (double c : d.coeffs) {
        const double lam = c * c;
        if (lam > 1e-15) e -= lam * std::log2(lam);
    }
    return e;
}

Mat ResourceState::choi() const {
    Mat x(2, 2);
    x(0, 0) = std::sqrt(mu);
    x(1, 1) = std::sqrt(1.0 - mu);
    return x;
}

ResourceState ResourceState::canonical(double mu) {
    if (mu < 0.5 || mu > 1.0) throw std::invalid_argument("ResourceState::canonical: mu must be in [1/2, 1]");
    ResourceState r;
    r.mu = mu;
    r.local_a = Mat::identity(2);
    r.local_b = Mat::identity(2);
    r.state = PureState({std::sqrt(mu), 0.0, 0.0, std::sqrt(1.0 - mu)}, 2, 2);
    return r;
}

double ResourceState::entropy() const { return entanglement_entropy(state); }

namespace {

// Completes k orthonormal columns to a d x d unitary.
Mat complete_to_unitary(const Mat& cols) {
    const int d = cols.rows(), k = cols.cols();
    Mat u(d, d);
    for (int c = 0; c < k; ++c)
        for (int r = 0; r < d; ++r) u(r, c) = cols(r, c);
    for (int c = k; c < d; ++c) {
        for (int seed = 0; seed < d; ++seed) {
            std::vector<cplx> v(static_cast<size_t>(d));
            v[static_cast<size_t>(seed)] = 1.0;
            for (int c2 = 0; c2 < c; ++c2) {
                cplx ip = 0;
                for (int r = 0; r < d; ++r) ip += std::conj(u(r, c2)) * v[static_cast<size_t>(r)];
                for (int r = 0; r < d; ++r) v[static_cast<size_t>(r)] -= ip * u(r, c2);
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
                for (int r = 0; r < d; ++r) u(r, c) = v[static_cast<size_t>(r)] * phase / nrm;
                break;
            }
        }
    }
    return u;
}

}  // namespace

ResourceState canonical_resource(const PureState& psi, const Tolerance& tol) {
    if (schmidt_number(psi, tol) != 2)
        throw std::domain_error("canonical_resource: state does not have Schmidt number 2");
    SchmidtDecomposition d = schmidt_decompose(psi);
    ResourceState out;
    out.mu = d.coeffs[0] * d.coeffs[0];
    Mat cols_a(psi.dim_a, 2), cols_b(psi.dim_b, 2);
    for (int r = 0; r < psi.dim_a; ++r)
        for (int c = 0; c < 2; ++c) cols_a(r, c) = d.basis_a(r, c);
    for (int r = 0; r < psi.dim_b; ++r)
        for (int c = 0; c < 2; ++c) cols_b(r, c) = d.basis_b(r, c);
    out.local_a = complete_to_unitary(cols_a);
    out.local_b = complete_to_unitary(cols_b);
    out.state = psi;
    return out;
}

Mat controlled_phase_matrix(double theta) {
    Mat u = Mat::identity(4);
    u(3, 3) = std::polar(1.0, theta);
    return u;
}

ControlledUnitary ControlledUnitary::canonical(double theta) {
    ControlledUnitary g;
    g.theta = wrap_angle(theta);
    g.v1 = g.v2 = g.w1 = g.w2 = Mat::identity(2);
    g.u = Mat::diag({1.0, std::polar(1.0, g.theta)});
    g.degenerate = std::abs(std::polar(1.0, g.theta) - cplx(1.0, 0.0)) < 1e-9;
    return g;
}

Mat ControlledUnitary::canonical_matrix() const { return controlled_phase_matrix(theta); }

Mat ControlledUnitary::matrix() const {
    Mat p00(2, 2), p11(2, 2);
    p00(0, 0) = 1.0;
    p11(1, 1) = 1.0;
    Mat core = kron(p00, Mat::identity(2)) + kron(p11, u);
    return kron(v1, v2) * core * kron(w1, w2);
}

namespace {

struct Eig2 {
    cplx lam0, lam1;
    Mat vecs;  // unitary columns
};

// Eigendecomposition of a 2x2 unitary (normal) matrix.
Eig2 eig_unitary_2x2(const Mat& u) {
    const cplx tr = u(0, 0) + u(1, 1);
    const cplx dt = u(0, 0) * u(1, 1) - u(0, 1) * u(1, 0);
    const cplx disc = std::sqrt(tr * tr - 4.0 * dt);
    Eig2 e;
    e.lam0 = (tr + disc) / 2.0;
    e.lam1 = (tr - disc) / 2.0;
    if (std::abs(e.lam0 - e.lam1) < 1e-12) {
        e.vecs = Mat::identity(2);
        return e;
    }
    auto vec_for = [&](cplx lam) {
        cplx x1 = u(0, 1), y1 = lam - u(0, 0);
        cplx x2 = lam - u(1, 1), y2 = u(1, 0);
        double n1 = std::norm(x1) + std::norm(y1);
        double n2 = std::norm(x2) + std::norm(y2);
        cplx x = n1 >= n2 ? x1 : x2, y = n1 >= n2 ? y1 : y2;
        const double nrm = std::sqrt(std::norm(x) + std::norm(y));
        return std::pair<cplx, cplx>{x / nrm, y / nrm};
    };
    auto [x0, y0] = vec_for(e.lam0);
    auto [x1, y1] = vec_for(e.lam1);
    e.vecs = Mat(2, 2);
    e.vecs(0, 0) = x0;
    e.vecs(1, 0) = y0;
    e.vecs(0, 1) = x1;
    e.vecs(1, 1) = y1;
    e.vecs = unitarize(e.vecs);
    return e;
}

ControlledUnitary canonicalize_from_blocks(const Mat& u0, const Mat& u1, const Mat& pre_v1,
                                           const Mat& pre_v2, const Mat& pre_w1, const Mat& pre_w2) {
    const Mat urel = dagger(u0) * u1;
    Eig2 e = eig_unitary_2x2(urel);
    double a0 = std::arg(e.lam0), a1 = std::arg(e.lam1);
    double theta = wrap_angle(a1 - a0);
    Mat r = e.vecs;
    // Fix theta >= 0 by relabeling which eigenvector is called |0>.
    if (theta < 0) {
        std::swap(a0, a1);
        theta = -theta;
        Mat rs(2, 2);
        for (int i = 0; i < 2; ++i) {
            rs(i, 0) = r(i, 1);
            rs(i, 1) = r(i, 0);
        }
        r = rs;
    }
    ControlledUnitary g;
    g.theta = theta;
    g.degenerate = std::abs(std::polar(1.0, theta) - cplx(1.0, 0.0)) < 1e-9;
    g.u = Mat::diag({1.0, std::polar(1.0, theta)});
    // u_rel = e^{i a0} r diag(1, e^{i theta}) r^dag, and the scalar phase on
    // the |1><1| block is the local rotation diag(1, e^{i a0}) on the control.
    g.v1 = pre_v1 * Mat::diag({1.0, std::polar(1.0, a0)});
    g.v2 = pre_v2 * u0 * r;
    g.w1 = pre_w1;
    g.w2 = dagger(r) * pre_w2;
    return g;
}

}  // namespace

ControlledUnitary canonicalize_controlled_unitary(const Mat& u4, const Tolerance& tol) {
    if (u4.rows() != 4 || u4.cols() != 4) throw std::invalid_argument("canonicalize: need a 4x4 matrix");
    if (!approx_equal(dagger(u4) * u4, Mat::identity(4), std::max(tol.eps_eq, 1e-8)))
        throw std::invalid_argument("canonicalize: matrix is not unitary");
    double off = 0;
    for (int i = 0; i < 2; ++i)
        for (int j = 2; j < 4; ++j) off = std::max({off, std::abs(u4(i, j)), std::abs(u4(j, i))});
    if (off > std::max(tol.eps_eq, 1e-8))
        throw std::invalid_argument("canonicalize: raw gate is not block-diagonal in the control qubit");
    Mat u0(2, 2), u1(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            u0(i, j) = u4(i, j);
            u1(i, j) = u4(i + 2, j + 2);
        }
    const Mat id = Mat::identity(2);
    return canonicalize_from_blocks(u0, u1, id, id, id, id);
}

ControlledUnitary canonicalize_controlled_unitary(const Mat& v1, const Mat& v2, const Mat& u,
                                                  const Mat& w1, const Mat& w2, const Tolerance& tol) {
    for (const Mat* m : {&v1, &v2, &u, &w1, &w2}) {
        if (m->rows() != 2 || m->cols() != 2) throw std::invalid_argument("canonicalize: dressings must be 2x2");
        if (!approx_equal(dagger(*m) * (*m), Mat::identity(2), std::max(tol.eps_eq, 1e-8)))
            throw std::invalid_argument("canonicalize: dressed form contains a non-unitary factor");
    }
    return canonicalize_from_blocks(Mat::identity(2), u, v1, v2, w1, w2);
}

}  // namespace locclab
