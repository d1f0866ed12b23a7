#include "locclab/verifier.hpp"

#include <cmath>
#include <sstream>

namespace locclab {

BlockDecomposition extract_block_vectors(const Mat& acc_a, const Mat& acc_b) {
    if (acc_a.rows() != 2 || acc_a.cols() != 4 || acc_b.rows() != 2 || acc_b.cols() != 4)
        throw std::invalid_argument("extract_block_vectors: leaf operators must be 2x4");
    BlockDecomposition d;
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int s = 0; s < 2; ++s) {
                d.a[k][i][static_cast<size_t>(s)] = acc_a(k, i * 2 + s);
                d.b[k][i][static_cast<size_t>(s)] = acc_b(k, i * 2 + s);
            }
    return d;
}

namespace {

double vec_norm(const std::vector<cplx>& v) {
    double s = 0;
    for (const auto& z : v) s += std::norm(z);
    return std::sqrt(s);
}

// <a|X|b*> with both vectors stored as bra components.
cplx bra_x_bra(const BlockVec& a, const Mat& x, const BlockVec& b) {
    cplx s = 0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) s += a[static_cast<size_t>(i)] * x(i, j) * b[static_cast<size_t>(j)];
    return s;
}

double norm2(const BlockVec& v) { return std::norm(v[0]) + std::norm(v[1]); }

}  // namespace

VerificationReport verify(const LoccProtocol& p, const ControlledUnitary& target, const Tolerance& tol,
                          bool check_superpositions) {
    const Mat u = target.canonical_matrix();
    const auto branches = accumulated_operators(pad_to_uniform_depth(p));
    const auto& res = p.resource.state.amplitudes;

    VerificationReport rep;
    rep.degenerate_theta = target.degenerate;

    std::vector<std::vector<cplx>> inputs;
    for (int x = 0; x < 4; ++x) {
        std::vector<cplx> e(4);
        e[static_cast<size_t>(x)] = 1.0;
        inputs.push_back(std::move(e));
    }
    if (check_superpositions) {
        const double h = 0.5;
        for (int sa = 0; sa < 2; ++sa)
            for (int sb = 0; sb < 2; ++sb) {
                std::vector<cplx> e(4);
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j)
                        e[static_cast<size_t>(i * 2 + j)] =
                            h * (i && sa ? -1.0 : 1.0) * (j && sb ? -1.0 : 1.0);
                inputs.push_back(std::move(e));
            }
    }

    for (const auto& br : branches) {
        if (br.acc_a.rows() != 2 || br.acc_b.rows() != 2)
            throw std::invalid_argument(
                "verify: branch " + history_to_string(br.outcomes) +
                " retains resource registers; the protocol must measure them out");
        BranchReport b;
        b.outcomes = br.outcomes;
        b.blocks = extract_block_vectors(br.acc_a, br.acc_b);

        std::vector<std::vector<cplx>> outs;
        cplx num = 0;
        double den = 0;
        for (const auto& in : inputs) {
            auto w = branch_apply(br.acc_a, br.acc_b, in, res, p.res_dim_a, p.res_dim_b);
            // target vector U |in>
            std::vector<cplx> t(4);
            for (int m = 0; m < 4; ++m)
                for (int x = 0; x < 4; ++x) t[static_cast<size_t>(m)] += u(m, x) * in[static_cast<size_t>(x)];
            for (int m = 0; m < 4; ++m) num += std::conj(t[static_cast<size_t>(m)]) * w[static_cast<size_t>(m)];
            den += 1.0;
            outs.push_back(std::move(w));
        }
        b.c = num / den;

        double dev2 = 0;
        for (size_t q = 0; q < inputs.size(); ++q) {
            std::vector<cplx> t(4);
            for (int m = 0; m < 4; ++m)
                for (int x = 0; x < 4; ++x)
                    t[static_cast<size_t>(m)] += u(m, x) * inputs[q][static_cast<size_t>(x)];
            std::vector<cplx> diff(4);
            for (int m = 0; m < 4; ++m)
                diff[static_cast<size_t>(m)] = outs[q][static_cast<size_t>(m)] - b.c * t[static_cast<size_t>(m)];
            const double d = vec_norm(diff);
            dev2 += d * d;
        }
        b.deviation = std::sqrt(dev2);

        rep.prob_sum += std::norm(b.c);
        rep.max_deviation = std::max(rep.max_deviation, b.deviation);
        rep.branches.push_back(std::move(b));
    }
    rep.pass = rep.max_deviation <= tol.eps_eq && std::abs(rep.prob_sum - 1.0) <= tol.eps_eq;
    return rep;
}

std::vector<std::string> check_block_conditions(const VerificationReport& report, const Mat& choi,
                                                double theta, const Tolerance& tol) {
    std::vector<std::string> out;
    const double eps = std::max(tol.eps_eq, 1e-10) * 100;
    const cplx gate_diag[2][2] = {{1.0, 1.0}, {1.0, std::polar(1.0, theta)}};
    const bool degenerate = std::abs(std::polar(1.0, theta) - cplx(1.0, 0.0)) < 1e-9;

    for (const auto& br : report.branches) {
        std::ostringstream tag;
        tag << "branch " << history_to_string(br.outcomes);
        // Diagonal conditions <a_kk|X|b*_ll> = c eps_kl.
        for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l) {
                const cplx val = bra_x_bra(br.blocks.a[k][k], choi, br.blocks.b[l][l]);
                const cplx want = br.c * gate_diag[k][l];
                if (std::abs(val - want) > eps)
                    out.push_back(tag.str() + ": <a_" + std::to_string(k) + std::to_string(k) +
                                  "|X|b*_" + std::to_string(l) + std::to_string(l) +
                                  "> deviates by " + std::to_string(std::abs(val - want)));
            }
        // Off-diagonal vectors must vanish.
        for (int k = 0; k < 2; ++k) {
            const int i = 1 - k;
            if (std::sqrt(norm2(br.blocks.a[k][i])) > eps)
                out.push_back(tag.str() + ": a_" + std::to_string(k) + std::to_string(i) +
                              " is not a zero vector");
            if (std::sqrt(norm2(br.blocks.b[k][i])) > eps)
                out.push_back(tag.str() + ": b_" + std::to_string(k) + std::to_string(i) +
                              " is not a zero vector");
        }
        // Cross conditions <a_kk|X|b*_lj> with k != i or l != j are covered by
        // the zero-vector checks; the remaining requirement is independence.
        if (!degenerate) {
            auto indep = [&](const BlockVec& u, const BlockVec& v) {
                const double nu = norm2(u), nv = norm2(v);
                if (nu < eps * eps || nv < eps * eps) return false;
                cplx ip = std::conj(u[0]) * v[0] + std::conj(u[1]) * v[1];
                return std::norm(ip) < nu * nv * (1.0 - 1e-9);
            };
            if (!indep(br.blocks.a[0][0], br.blocks.a[1][1]))
                out.push_back(tag.str() + ": a_00 and a_11 are not linearly independent");
            if (!indep(br.blocks.b[0][0], br.blocks.b[1][1]))
                out.push_back(tag.str() + ": b_00 and b_11 are not linearly independent");
        }
    }
    return out;
}

MinTurnsCheck min_turns_check(const LoccProtocol& p, const ControlledUnitary& target,
                              const Tolerance& tol) {
    MinTurnsCheck out;
    out.turns = p.n_turns();
    out.verified = verify(p, target, tol).pass;
    if (out.verified && !target.degenerate) out.holds = out.turns >= 3;
    return out;
}

}  // namespace locclab
