#pragma once

#include "locclab/protocol.hpp"

namespace locclab {

/// The three-turn reference implementation of a controlled-unitary with a
/// maximally entangled two-qubit resource:
///   Alice: CNOT from her input onto her resource half, Z-readout (outcome a);
///   Bob:   bit-flip on his half if a = 1, controlled-u from resource onto his
///          input, X-basis readout (outcome b);
///   Alice: phase-flip correction Z^b on her input.
LoccProtocol build_eisert(const ControlledUnitary& target);

/// Maximum entanglement (in ebits) the canonical gate U_theta creates from a
/// product input, estimated by multi-start coordinate descent over the four
/// Bloch angles. Deterministic for a fixed budget.
double entangling_power(const ControlledUnitary& target, long budget = 10000);

struct ConvertibilityQuery {
    PureState input;  // product state on the two input qubits
    ControlledUnitary target_gate;
    ResourceState resource;
};

struct FeasibilityReport {
    bool feasible = false;
    double required_entropy = 0;           // entropy of U|input>
    std::array<double, 2> target_coeffs;   // Schmidt coefficients of U|input>
    std::array<double, 2> resource_coeffs; // Schmidt coefficients of the resource
};

/// Known-input convertibility: with the input identity revealed, LOCC can
/// realize the gate iff the resource majorizes the output state, which for
/// Schmidt number 2 is a single coefficient comparison.
FeasibilityReport known_input_feasible(const ConvertibilityQuery& q, const Tolerance& tol = {});

}  // namespace locclab
