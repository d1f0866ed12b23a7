#pragma once

#include <array>
#include <string>
#include <vector>

#include "locclab/protocol.hpp"

namespace locclab {

/// Resource-register row vectors of a leaf operator
/// A = sum_{k,i} |k><i| (x) <a_{ki}|, stored as bra components, so that
/// <a|X|b*> is computed as a_row * X * b_row without further conjugation.
using BlockVec = std::array<cplx, 2>;

struct BlockDecomposition {
    BlockVec a[2][2];  // a[k][i]
    BlockVec b[2][2];  // b[l][j]
};

/// Splits 2x4 leaf operators into their block vectors. Throws on wrong shape.
BlockDecomposition extract_block_vectors(const Mat& acc_a, const Mat& acc_b);

struct BranchReport {
    History outcomes;
    cplx c = 0;              // fitted branch coefficient, |c|^2 = branch probability
    double deviation = 0;    // residual over the four basis inputs
    BlockDecomposition blocks;
};

struct VerificationReport {
    bool pass = false;
    double prob_sum = 0;        // sum |c|^2
    double max_deviation = 0;
    bool degenerate_theta = false;
    std::vector<BranchReport> branches;
};

/// Decides whether the protocol deterministically implements the canonical
/// gate U_theta of the target with its attached resource: per branch, fits a
/// single input-independent coefficient c with
/// (A (x) B)(|ij> (x) |r>) = c U_theta |ij> over all four basis inputs.
///
/// check_superpositions additionally folds the four |+->-type product inputs
/// into the residual; linearity makes the basis sufficient, the extra inputs
/// only guard against indexing bugs.
VerificationReport verify(const LoccProtocol& p, const ControlledUnitary& target,
                          const Tolerance& tol = {}, bool check_superpositions = false);

/// Checks the block conditions <a_kk|X|b*_ll> = c eps_kl, vanishing
/// off-diagonal vectors, and linear independence of {a_00, a_11} and
/// {b_00, b_11} for theta != 0. Returns violations; empty means consistent.
std::vector<std::string> check_block_conditions(const VerificationReport& report, const Mat& choi,
                                                double theta, const Tolerance& tol = {});

struct MinTurnsCheck {
    bool verified = false;
    int turns = 0;
    bool holds = true;  // verified && theta != 0 implies turns >= 3
};

/// Structural sanity assertion: no verified implementation of a nontrivial
/// controlled-unitary exists with fewer than three turns.
MinTurnsCheck min_turns_check(const LoccProtocol& p, const ControlledUnitary& target,
                              const Tolerance& tol = {});

}  // namespace locclab
