#pragma once

#include <map>
#include <optional>
#include <string>

#include "locclab/protocol.hpp"
#include "locclab/verifier.hpp"

namespace locclab {

/// Hermitian PSD 2x2 block elements of the accumulated operators three turns
/// before the end: A_kk from the Alice-side leaf vectors summed over her last
/// turn, B_ll from the Bob-side leaf vectors summed over his last two turns.
struct BlockElements {
    Mat a00, a11, b00, b11;
    int rank_a00 = 0, rank_a11 = 0, rank_b00 = 0, rank_b11 = 0;
};

enum class ReductionCase { A, B, C };

std::string to_string(ReductionCase c);

struct InvariantViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Auxiliary quantities computed while transforming one case-c prefix; kept
/// for the trace and for the consistency tests.
struct ReductionWorkspace {
    double lambda = 1.0;       // squared top singular value of A11 A00^{-1}
    double mu = 1.0;           // squared top singular value of the B-side ratio
    double delta = 0.0;        // phase from the lambda != 1 analysis
    double delta_prime = 0.0;  // phase solving mu + e^{-i d'} = e^{i th}(1 + mu e^{-i d'})
    double phi0 = 0.0, phi1 = 0.0;
    Mat t_gate;    // u^dag A11 A00^{-1}
    Mat s_frame;   // eigenvector frame of t_gate
    Mat e00;       // A00-side core matrix in the rotated frames
    Mat u_relate;  // unitary relating the two A-block images
    std::map<std::string, double> residuals;
};

struct ReductionStep {
    int step = 0;
    std::string kind;  // "a", "b", "c" or "merge"
    double lambda = 0, mu = 0, delta_prime = 0;
    std::map<std::string, double> residuals;
};

struct ReductionTrace {
    std::vector<ReductionStep> steps;
};

struct ReductionResult {
    LoccProtocol protocol;
    ReductionTrace trace;
};

/// Block elements along the canonical (all-zero) prefix, after moving to the
/// frame with canonical resource and Bob acting last. Requires n >= 3.
BlockElements compute_block_elements(const LoccProtocol& p, const Tolerance& tol = {});

/// Lemma-1 classification. Throws InvariantViolation when the rank equalities
/// that hold for every successful protocol are broken.
ReductionCase classify_case(const BlockElements& blocks, const Tolerance& tol = {});

/// One-step reductions (n -> n-1 turns), applicable when every prefix of the
/// protocol classifies into the stated case. The driver below picks the case
/// automatically; these entry points exist for targeted use and testing.
LoccProtocol reduce_case_a(const LoccProtocol& p, const ControlledUnitary& target,
                           const Tolerance& tol = {});
LoccProtocol reduce_case_b(const LoccProtocol& p, const ControlledUnitary& target,
                           const Tolerance& tol = {});
LoccProtocol reduce_case_c(const LoccProtocol& p, const ControlledUnitary& target,
                           const Tolerance& tol = {});

/// Iterates merge and case reductions until exactly three turns remain.
/// Every intermediate protocol is re-verified; a failing step aborts with the
/// step index in the exception message.
ReductionResult reduce_to_three_turns(const LoccProtocol& p, const ControlledUnitary& target,
                                      const Tolerance& tol = {});

struct Lemma4Report {
    double proportionality_residual = 0;
    double inferred_mu = 0.5;
};

/// For a verified 3-turn protocol: evaluates the identity-prefix functional
/// sum_l (A00 X conj(B_ll)) (c.c.), which must be proportional to the
/// identity; reports the deviation and the resource weight it implies.
Lemma4Report check_lemma4(const LoccProtocol& p, const ControlledUnitary& target,
                          const Tolerance& tol = {});

/// The same functional on explicit block data (for synthetic inputs).
Lemma4Report lemma4_functional(const Mat& a00, const Mat& b00, const Mat& b11, const Mat& choi);

/// Measurement splitting: given PSD targets summing to T^dag T, builds
/// operators M_i with (M_i T)^dag (M_i T) = gram_i and sum M_i^dag M_i = I on
/// the support of T. When T is rank-deficient on its output space an extra
/// operator is appended to complete the instrument off-support.
std::vector<Mat> split_measurement(const Mat& t, const std::vector<Mat>& grams,
                                   const Tolerance& tol = {});

/// Inserts a single-outcome identity turn at the given position, shifting
/// downstream histories. Used to stretch protocols for reduction tests.
LoccProtocol insert_identity_turn(const LoccProtocol& p, int position, Party party);

/// Inserts a local unitary at `position` and its inverse folded into the same
/// party's next turn, leaving the channel unchanged; requires that party to
/// act again later. Returns the dressed protocol.
LoccProtocol insert_dressed_identity(const LoccProtocol& p, int position, Party party, const Mat& v);

}  // namespace locclab
