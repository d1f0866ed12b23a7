#pragma once

#include <optional>
#include <vector>

#include "locclab/linalg.hpp"

namespace locclab {

/// Normalized pure state on a bipartite system of dimensions (dim_a, dim_b).
struct PureState {
    std::vector<cplx> amplitudes;  // length dim_a * dim_b, index a * dim_b + b
    int dim_a = 2;
    int dim_b = 2;

    PureState() = default;
    PureState(std::vector<cplx> amps, int da, int db);

    cplx amp(int a, int b) const { return amplitudes[static_cast<size_t>(a) * dim_b + b]; }
    /// Coefficient matrix C with C(a,b) = amplitude of |a>|b>.
    Mat coefficient_matrix() const;
    double norm() const;
};

struct SchmidtDecomposition {
    std::vector<double> coeffs;  // descending, sum of squares = 1
    Mat basis_a;                 // columns are Alice Schmidt vectors
    Mat basis_b;                 // columns are Bob Schmidt vectors
};

SchmidtDecomposition schmidt_decompose(const PureState& psi, double eps_norm = 1e-9);

int schmidt_number(const PureState& psi, const Tolerance& tol = {});

/// Entanglement entropy in ebits: -sum lambda log2 lambda over squared
/// Schmidt coefficients.
double entanglement_entropy(const PureState& psi);

/// Schmidt-number-2 resource in the canonical form
/// (local_a X (x) local_b) |Phi+>, X = sqrt(mu)|0><0| + sqrt(1-mu)|1><1|,
/// |Phi+> = |00> + |11> unnormalized so that the dressed product is a unit
/// vector. Convention: mu >= 1/2.
struct ResourceState {
    PureState state;
    double mu = 0.5;
    Mat local_a;  // unitary dressing on Alice's resource qubit
    Mat local_b;  // unitary dressing on Bob's resource qubit

    /// Choi matrix X = diag(sqrt(mu), sqrt(1-mu)).
    Mat choi() const;
    /// The canonical two-qubit resource for a given mu.
    static ResourceState canonical(double mu);
    double entropy() const;
};

/// Canonicalizes a Schmidt-number-2 pure state into ResourceState form.
/// Throws std::domain_error when the Schmidt number differs from 2.
ResourceState canonical_resource(const PureState& psi, const Tolerance& tol = {});

/// Two-qubit controlled-unitary in dressed form
/// (v1 (x) v2) (|0><0| (x) I + |1><1| (x) u) (w1 (x) w2),
/// locally equivalent to the canonical diag(1,1,1,e^{i theta}).
struct ControlledUnitary {
    double theta = 0.0;  // in (-pi, pi]
    Mat v1, v2, w1, w2, u;
    bool degenerate = false;  // theta == 0: the gate is local

    static ControlledUnitary canonical(double theta);
    /// The canonical 4x4 matrix diag(1,1,1,e^{i theta}).
    Mat canonical_matrix() const;
    /// The full dressed 4x4 matrix.
    Mat matrix() const;
};

/// Canonical gate matrix for a bare angle.
Mat controlled_phase_matrix(double theta);

/// Extract the nonlocal angle and dressings from a raw computational-basis
/// controlled gate (block-diagonal in the first qubit).
ControlledUnitary canonicalize_controlled_unitary(const Mat& u4, const Tolerance& tol = {});

/// Same reduction starting from an explicit dressed form.
ControlledUnitary canonicalize_controlled_unitary(const Mat& v1, const Mat& v2, const Mat& u,
                                                  const Mat& w1, const Mat& w2,
                                                  const Tolerance& tol = {});

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

}  // namespace locclab
