#pragma once

#include <map>
#include <string>
#include <vector>

#include "locclab/linalg.hpp"
#include "locclab/states.hpp"

namespace locclab {

enum class Party { Alice, Bob };

inline Party other(Party p) { return p == Party::Alice ? Party::Bob : Party::Alice; }

/// Outcome sequence identifying a branch of the protocol tree.
using History = std::vector<int>;

std::string history_to_string(const History& h);

/// One generalized measurement: an ordered list of Kraus operators on the
/// acting party's input (x) resource registers. Operators may shrink the
/// resource register (rows < cols), e.g. a projective readout that discards
/// the measured qubit.
struct Instrument {
    std::vector<Mat> ops;
};

/// One turn: a party applies an instrument that may depend arbitrarily on
/// the outcome history so far, then broadcasts its outcome.
struct Turn {
    Party party = Party::Alice;
    std::map<History, Instrument> instruments;
    bool identity_fill = false;  // inserted by padding, safe to skip
};

struct ProtocolStructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// History-indexed tree of measurement turns over input (x) resource
/// registers for two parties. Input registers are qubits; resource register
/// dimensions are fixed at construction.
struct LoccProtocol {
    ResourceState resource = ResourceState::canonical(0.5);
    int res_dim_a = 2;
    int res_dim_b = 2;
    std::vector<Turn> turns;

    int n_turns() const { return static_cast<int>(turns.size()); }
};

/// Leaf branch with the accumulated per-party operators
/// A = M^{(r_n|..)} ... M^{(r_1)},  B likewise (identity on the other
/// party's turns).
struct Branch {
    History outcomes;
    Mat acc_a;
    Mat acc_b;
};

/// Completeness and shape check. Returns human-readable violations; empty
/// means valid. Malformed history references throw ProtocolStructureError.
std::vector<std::string> validate(const LoccProtocol& p, const Tolerance& tol = {});

/// Fills implicit identity instruments so every branch sees every turn.
LoccProtocol pad_to_uniform_depth(const LoccProtocol& p);

/// One Branch per leaf of the (uniform-depth) tree.
std::vector<Branch> accumulated_operators(const LoccProtocol& p);

/// Accumulated operators along a given prefix history.
struct PrefixOps {
    Mat acc_a;
    Mat acc_b;
};
PrefixOps accumulated_prefix(const LoccProtocol& p, const History& prefix);

/// The channel action sum_branches Tr_r [(A (x) B) (rho_in (x) rho_r) (.)^dag]
/// on a two-qubit input density matrix (basis A_in (x) B_in).
Mat apply_channel(const LoccProtocol& p, const Mat& rho_in);

/// Applies a branch pair (A, B) to |in> (x) |r>; returns the output vector on
/// (A_in, A_r', B_in, B_r') ordering.
std::vector<cplx> branch_apply(const Mat& acc_a, const Mat& acc_b, const std::vector<cplx>& in4,
                               const std::vector<cplx>& res, int res_dim_a, int res_dim_b);

/// Combines turns k and k+1 of the same party into a single turn with joint
/// outcomes; the channel action is unchanged.
LoccProtocol merge_adjacent_turns(const LoccProtocol& p, int k);

/// Relabels Alice <-> Bob everywhere (turns, registers, resource sides).
LoccProtocol swap_parties(const LoccProtocol& p);

/// Rewrites the protocol over the canonical resource (X (x) I)|Phi+> by
/// folding the resource dressings into each party's first instrument.
LoccProtocol canonicalize_resource_frame(const LoccProtocol& p, const Tolerance& tol = {});

/// True if m is the identity within eps.
bool is_identity(const Mat& m, double eps = 1e-12);

}  // namespace locclab
