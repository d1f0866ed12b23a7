#include "locclab/rng.hpp"

#include <cmath>

namespace locclab {

Mat Rng::gaussian_matrix(int rows, int cols) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = cnormal();
    return m;
}

Mat Rng::haar_unitary(int n) {
    Mat a = gaussian_matrix(n, n);
    // Gram-Schmidt with phase fixing of the R diagonal gives the Haar measure.
    Mat q(n, n);
    for (int c = 0; c < n; ++c) {
        std::vector<cplx> v(static_cast<size_t>(n));
        for (int r = 0; r < n; ++r) v[static_cast<size_t>(r)] = a(r, c);
        for (int c2 = 0; c2 < c; ++c2) {
            cplx ip = 0;
            for (int r = 0; r < n; ++r) ip += std::conj(q(r, c2)) * v[static_cast<size_t>(r)];
            for (int r = 0; r < n; ++r) v[static_cast<size_t>(r)] -= ip * q(r, c2);
        }
        double nrm = 0;
        for (const auto& z : v) nrm += std::norm(z);
        nrm = std::sqrt(nrm);
        cplx diag = 0;
        for (int r = 0; r < n; ++r)
            if (r == c) diag = v[static_cast<size_t>(r)];
        cplx phase = std::abs(diag) > 1e-14 ? diag / std::abs(diag) : cplx(1.0, 0.0);
        for (int r = 0; r < n; ++r) q(r, c) = v[static_cast<size_t>(r)] / (nrm * phase);
    }
    return q;
}

std::vector<cplx> Rng::random_state(int dim) {
    std::vector<cplx> v(static_cast<size_t>(dim));
    double nrm = 0;
    for (auto& z : v) {
        z = cnormal();
        nrm += std::norm(z);
    }
    nrm = std::sqrt(nrm);
    for (auto& z : v) z /= nrm;
    return v;
}

}  // namespace locclab
