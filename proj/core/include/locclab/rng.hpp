#pragma once

#include <cstdint>
#include <random>

#include "locclab/linalg.hpp"

namespace locclab {

/// Deterministic random source for seeded tests and multi-start searches.
/// Each consumer owns its own stream; streams derived from (seed, index) are
/// independent in the sense of std::seed_seq mixing.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}
    Rng(uint64_t seed, uint64_t stream) {
        std::seed_seq seq{seed, stream, uint64_t{0x9e3779b97f4a7c15ULL}};
        gen_.seed(seq);
    }

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }

    cplx cnormal() { return {normal(), normal()}; }

    /// Matrix with i.i.d. standard complex gaussian entries.
    Mat gaussian_matrix(int rows, int cols);
    /// Haar-distributed unitary via QR of a gaussian matrix.
    Mat haar_unitary(int n);
    /// Normalized random state vector of the given dimension.
    std::vector<cplx> random_state(int dim);

private:
    std::mt19937_64 gen_;
};

}  // namespace locclab
