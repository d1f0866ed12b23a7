#pragma once

#include <cstdint>
#include <vector>

#include "locclab/protocol.hpp"

namespace locclab {

/// Fixed three-turn Alice-Bob-Alice template with parameterized instruments:
/// a unitary pre-rotation followed by a projective readout of the resource
/// register on the first two turns, and a conditional phase on the last.
/// Every parameter vector yields a protocol that passes validate by
/// construction.
struct ProtocolAnsatz {
    int resource_rank = 2;  // 2 or 3

    explicit ProtocolAnsatz(int rank);

    int n_params() const { return n_params_; }
    /// Schmidt weights of the resource encoded by the parameter vector.
    std::vector<double> resource_weights(const std::vector<double>& params) const;
    double resource_entropy(const std::vector<double>& params) const;
    LoccProtocol build(const std::vector<double>& params) const;

    /// Entropy cap enforcement: moves the weights toward the peaked
    /// distribution until the entropy does not exceed the cap.
    std::vector<double> project_entropy(const std::vector<double>& params, double cap) const;

private:
    int n_params_ = 0;
};

/// Process infidelity 1 - F between the channel realized by the ansatz at
/// `params` and conjugation by U_theta, via the Choi overlap
/// F = sum_branches |tr(U^dag E_branch)|^2 / 16.
double objective(const ProtocolAnsatz& ansatz, const std::vector<double>& params, double theta);

struct RestartRecord {
    int restart = 0;
    double infidelity = 1;
    double entropy = 0;
    long evals = 0;
};

struct SearchResult {
    std::vector<double> best_params;
    double infidelity = 1;
    double resource_entropy = 0;
    bool verified = false;         // gated by the verifier at eps 1e-6
    bool tolerance_flag = false;   // rank-2 verified result below 1 ebit: a bug, not a discovery
    std::vector<RestartRecord> trace;
};

/// Multi-restart Nelder-Mead over the ansatz parameters; deterministic for a
/// fixed seed (each restart owns a private stream). `budget` caps objective
/// evaluations per restart; budget 0 returns the initial-point evaluation.
SearchResult optimize(double theta, int resource_rank, int restarts, long budget, uint64_t seed,
                      const Tolerance& tol = {});

/// Same search under an entropy cap, optionally reusing a warm start.
SearchResult optimize_capped(double theta, int resource_rank, int restarts, long budget,
                             uint64_t seed, double entropy_cap, const Tolerance& tol = {});

struct FrontierPoint {
    double entropy_cap = 0;
    double best_infidelity = 1;
};

/// Best infidelity as a function of the allowed resource entropy; the curve
/// is made monotone by best-of post-processing across caps.
std::vector<FrontierPoint> entropy_frontier(double theta, int resource_rank,
                                            const std::vector<double>& entropy_grid, long budget,
                                            uint64_t seed = 7, int restarts = 4);

}  // namespace locclab
