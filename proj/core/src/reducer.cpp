#include "locclab/reducer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace locclab {

namespace {

constexpr double kDeadWeight = 1e-14;

void bump(std::map<std::string, double>& res, const std::string& key, double val) {
    auto it = res.find(key);
    if (it == res.end() || it->second < val) res[key] = val;
}

// Turn indices of the four-turn tail in the working frame
// (Alice, Bob, Alice, Bob ending the protocol). alice1 == -1 when n == 3.
struct TailIdx {
    int alice1, bob1, alice2, bob2;
};

TailIdx tail_of(int n_turns) { return {n_turns - 4, n_turns - 3, n_turns - 2, n_turns - 1}; }

int arity_at(const LoccProtocol& p, int turn, const History& h) {
    const auto& t = p.turns.at(static_cast<size_t>(turn));
    auto it = t.instruments.find(h);
    return it == t.instruments.end() ? 1 : static_cast<int>(it->second.ops.size());
}

const Mat& op_at(const LoccProtocol& p, int turn, const History& h, int r) {
    return p.turns.at(static_cast<size_t>(turn)).instruments.at(h).ops.at(static_cast<size_t>(r));
}

std::vector<History> histories_at(const LoccProtocol& p, int len) {
    std::vector<History> level{History{}};
    for (int k = 0; k < len; ++k) {
        std::vector<History> next;
        for (const auto& h : level) {
            const int ar = arity_at(p, k, h);
            for (int r = 0; r < ar; ++r) {
                History h2 = h;
                h2.push_back(r);
                next.push_back(std::move(h2));
            }
        }
        level = std::move(next);
    }
    return level;
}

// Ket outer product |v><v| from bra components.
Mat ket_outer(const BlockVec& bra) {
    Mat m(2, 2);
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t)
            m(s, t) = std::conj(bra[static_cast<size_t>(s)]) * bra[static_cast<size_t>(t)];
    return m;
}

Mat block_of(const Mat& g4, int k) {
    Mat m(2, 2);
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t) m(s, t) = g4(k * 2 + s, k * 2 + t);
    return m;
}

double offblock_norm(const Mat& g4) {
    double s = 0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            s = std::max(s, std::abs(g4(i, 2 + j)));
            s = std::max(s, std::abs(g4(2 + i, j)));
        }
    return s;
}

History extend(History h, std::initializer_list<int> tail) {
    for (int t : tail) h.push_back(t);
    return h;
}

// Leaf accumulated operators under a tail history (i, j, k) appended to the
// prefix; both must come out 2x4 for the block calculus.
struct LeafOps {
    Mat a, b;
};

LeafOps leaf_ops(const LoccProtocol& p, const History& prefix, int i, int j, int k) {
    const auto acc = accumulated_prefix(p, extend(prefix, {i, j, k}));
    if (acc.acc_a.rows() != 2 || acc.acc_b.rows() != 2)
        throw std::invalid_argument("reducer: leaf operators retain resource registers");
    return {acc.acc_a, acc.acc_b};
}

BlockElements blocks_from_leaves(const LoccProtocol& p, const TailIdx& t, const History& prefix,
                                 const Tolerance& tol, std::map<std::string, double>* res) {
    BlockElements out;
    Mat a00sq(2, 2), a11sq(2, 2), b00sq(2, 2), b11sq(2, 2);

    // A_kk^2: sum over Alice's last-turn outcomes at fixed representative
    // Bob outcomes (the sums are outcome-independent for valid protocols;
    // the residuals record how well that holds).
    const int ni = arity_at(p, t.bob1, prefix);
    Mat a00_alt(2, 2), a11_alt(2, 2);
    for (int rep_i = 0; rep_i < std::min(ni, 2); ++rep_i) {
        Mat s00(2, 2), s11(2, 2);
        const History hb = extend(prefix, {rep_i});
        const int nj = arity_at(p, t.alice2, hb);
        for (int j = 0; j < nj; ++j) {
            const LeafOps lf = leaf_ops(p, prefix, rep_i, j, 0);
            const auto bd = extract_block_vectors(lf.a, lf.b);
            s00 = s00 + ket_outer(bd.a[0][0]);
            s11 = s11 + ket_outer(bd.a[1][1]);
            if (res) {
                bump(*res, "leaf_offdiag",
                     std::sqrt(std::norm(bd.a[0][1][0]) + std::norm(bd.a[0][1][1])));
                bump(*res, "leaf_offdiag",
                     std::sqrt(std::norm(bd.a[1][0][0]) + std::norm(bd.a[1][0][1])));
            }
        }
        if (rep_i == 0) {
            a00sq = s00;
            a11sq = s11;
        } else {
            a00_alt = s00;
            a11_alt = s11;
            if (res) {
                bump(*res, "block_rep_consistency", max_abs_diff(a00sq, a00_alt));
                bump(*res, "block_rep_consistency", max_abs_diff(a11sq, a11_alt));
            }
        }
    }

    // B_ll^2: sum over Bob's last two turns at a representative Alice outcome.
    for (int i = 0; i < ni; ++i) {
        const History hb = extend(prefix, {i});
        const History hj = extend(hb, {0});
        const int nk = arity_at(p, t.bob2, hj);
        for (int k = 0; k < nk; ++k) {
            const LeafOps lf = leaf_ops(p, prefix, i, 0, k);
            const auto bd = extract_block_vectors(lf.a, lf.b);
            b00sq = b00sq + ket_outer(bd.b[0][0]);
            b11sq = b11sq + ket_outer(bd.b[1][1]);
        }
    }

    if (res) {
        const auto acc = accumulated_prefix(p, prefix);
        const Mat ga = dagger(acc.acc_a) * acc.acc_a;
        const Mat gb = dagger(acc.acc_b) * acc.acc_b;
        bump(*res, "gram_offblock", offblock_norm(ga));
        bump(*res, "gram_offblock", offblock_norm(gb));
        bump(*res, "block_gram_residual", max_abs_diff(block_of(ga, 0), a00sq));
        bump(*res, "block_gram_residual", max_abs_diff(block_of(ga, 1), a11sq));
        bump(*res, "block_gram_residual", max_abs_diff(block_of(gb, 0), b00sq));
        bump(*res, "block_gram_residual", max_abs_diff(block_of(gb, 1), b11sq));
    }

    out.a00 = sqrt_psd(a00sq, 1e-9);
    out.a11 = sqrt_psd(a11sq, 1e-9);
    out.b00 = sqrt_psd(b00sq, 1e-9);
    out.b11 = sqrt_psd(b11sq, 1e-9);
    out.rank_a00 = rank_tol(out.a00, tol);
    out.rank_a11 = rank_tol(out.a11, tol);
    out.rank_b00 = rank_tol(out.b00, tol);
    out.rank_b11 = rank_tol(out.b11, tol);
    return out;
}

// Gram-block variant used to drive the constructions (representative-free).
BlockElements blocks_from_gram(const LoccProtocol& p, const History& prefix, const Tolerance& tol) {
    const auto acc = accumulated_prefix(p, prefix);
    const Mat ga = dagger(acc.acc_a) * acc.acc_a;
    const Mat gb = dagger(acc.acc_b) * acc.acc_b;
    BlockElements out;
    out.a00 = sqrt_psd(block_of(ga, 0), 1e-9);
    out.a11 = sqrt_psd(block_of(ga, 1), 1e-9);
    out.b00 = sqrt_psd(block_of(gb, 0), 1e-9);
    out.b11 = sqrt_psd(block_of(gb, 1), 1e-9);
    out.rank_a00 = rank_tol(out.a00, tol);
    out.rank_a11 = rank_tol(out.a11, tol);
    out.rank_b00 = rank_tol(out.b00, tol);
    out.rank_b11 = rank_tol(out.b11, tol);
    return out;
}

Mat row2(cplx c0, cplx c1) {
    Mat m(1, 2);
    m(0, 0) = c0;
    m(0, 1) = c1;
    return m;
}

// 2x4 block-diagonal operator |0><0| (x) row0 + |1><1| (x) row1.
Mat embed_rows(const Mat& row0, const Mat& row1) {
    Mat m(2, 4);
    for (int s = 0; s < 2; ++s) {
        m(0, s) = row0(0, s);
        m(1, 2 + s) = row1(0, s);
    }
    return m;
}

// Orthonormal rows spanning the range of m (first `take` columns of the SVD
// frame) and its complement; used to complete rank-deficient instruments.
Mat svd_frame_rows(const Mat& m, int from, int to) {
    SvdResult s = svd(m);
    Mat u = s.u;
    Mat out(to - from, m.rows());
    for (int c = from; c < to; ++c)
        for (int r = 0; r < m.rows(); ++r) out(c - from, r) = std::conj(u(r, c));
    return out;
}

struct FrameInfo {
    LoccProtocol p;  // canonical resource, padded
    bool swapped = false;
};

FrameInfo to_working_frame(const LoccProtocol& p, const Tolerance& tol) {
    if (p.res_dim_a > 2 || p.res_dim_b > 2)
        throw std::invalid_argument(
            "reducer: resource registers larger than a qubit must be pre-compressed");
    FrameInfo f;
    f.p = pad_to_uniform_depth(canonicalize_resource_frame(p, tol));
    if (!f.p.turns.empty() && f.p.turns.back().party == Party::Alice) {
        f.p = swap_parties(f.p);
        f.swapped = true;
    }
    return f;
}

void require_alternating_tail(const LoccProtocol& p) {
    const int n = p.n_turns();
    if (n < 4) throw std::invalid_argument("reducer: need at least four turns to reduce");
    const TailIdx t = tail_of(n);
    if (p.turns[static_cast<size_t>(t.bob2)].party != Party::Bob ||
        p.turns[static_cast<size_t>(t.alice2)].party != Party::Alice ||
        p.turns[static_cast<size_t>(t.bob1)].party != Party::Bob ||
        p.turns[static_cast<size_t>(t.alice1)].party != Party::Alice)
        throw std::invalid_argument(
            "reducer: tail turns must alternate (merge adjacent same-party turns first)");
}

// ---------------------------------------------------------------------------
// Case c: both parties' blocks are full rank. The last three turns are
// replaced wholesale by a two-outcome Alice measurement, a two-outcome Bob
// measurement and a deterministic Alice phase, built from the block data.
// ---------------------------------------------------------------------------

struct CaseCBuild {
    Mat m_prime[2];
    Mat k_prime[2][2];  // [alice outcome r][bob outcome s]
    cplx phase_dp;      // e^{i delta'}
    ReductionWorkspace ws;
};

cplx leaf_coefficient(const LoccProtocol& p, const Mat& acc_a, const Mat& acc_b, double theta) {
    const Mat u = controlled_phase_matrix(theta);
    cplx num = 0;
    for (int x = 0; x < 4; ++x) {
        std::vector<cplx> e(4);
        e[static_cast<size_t>(x)] = 1.0;
        const auto w = branch_apply(acc_a, acc_b, e, p.resource.state.amplitudes, p.res_dim_a,
                                    p.res_dim_b);
        for (int m = 0; m < 4; ++m) num += std::conj(u(m, x)) * w[static_cast<size_t>(m)];
    }
    return num / 4.0;
}

// Diagnostics mirroring the appendix analysis: the unitary u relating the two
// A-block images, T = u^dag A11 A00^{-1}, its singular structure, and the
// lambda-dependent phase identities.
void case_c_diagnostics(const LoccProtocol& p, const TailIdx& t, const History& prefix,
                        const BlockElements& bl, double theta, ReductionWorkspace& ws) {
    // Level-(n-2) b vectors: g * leaf vectors at the representative outcomes.
    const LeafOps lf0 = leaf_ops(p, prefix, 0, 0, 0);
    const auto bd = extract_block_vectors(lf0.a, lf0.b);
    const History hj = extend(prefix, {0, 0});
    const int nk = arity_at(p, t.bob2, hj);
    cplx cref = 0;
    std::vector<cplx> cs;
    for (int k = 0; k < nk; ++k) {
        const LeafOps lf = leaf_ops(p, prefix, 0, 0, k);
        cs.push_back(leaf_coefficient(p, lf.a, lf.b, theta));
    }
    cref = cs[0];
    size_t best = 0;
    for (size_t k = 1; k < cs.size(); ++k)
        if (std::abs(cs[k]) > std::abs(cs[best])) best = k;
    if (std::abs(cref) < 1e-12) cref = cs[best];
    double g2 = 0;
    for (const auto& c : cs) g2 += std::norm(c / cref);
    const double g = std::sqrt(g2);

    const Mat x = p.resource.choi();
    auto colvec = [](const BlockVec& bra) {
        return Mat::col({bra[0], bra[1]});
    };
    const Mat b00c = colvec(bd.b[0][0]) * cplx(g, 0);
    const Mat b11c = colvec(bd.b[1][1]) * cplx(g, 0);
    const Mat e1 = bl.a00 * x * b00c;
    const Mat e2 = bl.a00 * x * b11c;
    const Mat f1 = bl.a11 * x * b00c;
    const Mat f2 = bl.a11 * x * b11c;

    Mat ef(2, 2), ee(2, 2);
    for (int r = 0; r < 2; ++r) {
        ee(r, 0) = e1(r, 0);
        ee(r, 1) = e2(r, 0);
        ef(r, 0) = f1(r, 0);
        ef(r, 1) = f2(r, 0) * std::polar(1.0, -theta);
    }
    Mat u_rel;
    try {
        u_rel = unitarize(ef * inverse(ee));
    } catch (const std::exception&) {
        u_rel = Mat::identity(2);
    }
    ws.u_relate = u_rel;
    ws.s_frame = ee;

    Mat t_gate;
    try {
        t_gate = dagger(u_rel) * bl.a11 * inverse(bl.a00);
    } catch (const std::exception&) {
        t_gate = Mat::identity(2);
    }
    ws.t_gate = t_gate;
    SvdResult tsvd = svd(t_gate);
    ws.lambda = tsvd.sigma[0] * tsvd.sigma[0];
    bump(ws.residuals, "det_t", std::abs(tsvd.sigma[0] * tsvd.sigma[1] - 1.0));

    // Eigenvalue check: T should fix e1 and scale e2 by e^{i theta}.
    const Mat te1 = t_gate * e1, te2 = t_gate * e2;
    bump(ws.residuals, "t_eigvec", max_abs_diff(te1, e1));
    bump(ws.residuals, "t_eigvec", max_abs_diff(te2, e2 * std::polar(1.0, theta)));

    const Mat a00t = tsvd.vdag * bl.a00;  // rotated frame
    if (std::abs(ws.lambda - 1.0) > 1e-6) {
        const Mat v1 = a00t * x * b00c;
        const Mat v2 = a00t * x * b11c;
        const double delta = std::arg(v1(1, 0)) - std::arg(v2(1, 0)) - std::arg(v1(0, 0)) +
                             std::arg(v2(0, 0));
        ws.delta = delta;
        const cplx lhs = std::polar(1.0, -delta);
        const cplx rhs = (ws.lambda - std::polar(1.0, -theta)) /
                         (ws.lambda * std::polar(1.0, -theta) - 1.0);
        bump(ws.residuals, "delta_formula", std::abs(lhs - rhs));
    } else {
        // lambda == 1: the two functionals commute and their spectra swap.
        const Mat m0 = a00t * x * conjugate(bl.b00 * bl.b00) * x * dagger(a00t);
        const Mat m1 = a00t * x * conjugate(bl.b11 * bl.b11) * x * dagger(a00t);
        HermEigResult e0 = hermitian_eig(m0);
        const Mat d1 = dagger(e0.evecs) * m1 * e0.evecs;
        bump(ws.residuals, "ef_offdiag", std::abs(d1(0, 1)));
        bump(ws.residuals, "ef_swap", std::abs(e0.evals[0] - d1(1, 1).real()));
        bump(ws.residuals, "ef_swap", std::abs(e0.evals[1] - d1(0, 0).real()));
    }

    // E00 in the appendix frames, for the magnitude-structure record.
    const Mat t_b = conjugate(bl.b11) * inverse(conjugate(bl.b00));
    SvdResult bsvd = svd(t_b);
    const double mu_b = bsvd.sigma[0] * bsvd.sigma[0];
    const Mat bp00 = conjugate(bsvd.vdag) * bl.b00;
    ws.e00 = a00t * x * conjugate(bp00);
    const double m00 = std::abs(ws.e00(0, 0));
    if (m00 > 1e-12) {
        bump(ws.residuals, "e00_structure", std::abs(std::abs(ws.e00(0, 1)) - std::sqrt(mu_b) * m00));
        bump(ws.residuals, "e00_structure",
             std::abs(std::abs(ws.e00(1, 0)) - std::sqrt(ws.lambda) * m00));
        bump(ws.residuals, "e00_structure",
             std::abs(std::abs(ws.e00(1, 1)) - std::sqrt(ws.lambda * mu_b) * m00));
    }
}

CaseCBuild build_case_c(const LoccProtocol& p, const TailIdx& t, const History& prefix, double theta,
                        const Tolerance& tol) {
    CaseCBuild out;
    const auto acc = accumulated_prefix(p, prefix);
    const Mat& a_pref = acc.acc_a;
    const Mat& b_pref = acc.acc_b;
    if (a_pref.rows() != 4 || b_pref.rows() != 4)
        throw InvariantViolation(
            "case c requires both parties to retain their resource qubits at the prefix");

    const Mat ga = dagger(a_pref) * a_pref;
    const Mat gb = dagger(b_pref) * b_pref;
    bump(out.ws.residuals, "gram_offblock", offblock_norm(ga));
    bump(out.ws.residuals, "gram_offblock", offblock_norm(gb));
    const Mat a00sq = block_of(ga, 0), a11sq = block_of(ga, 1);
    BlockElements bl;
    bl.a00 = sqrt_psd(a00sq, 1e-8);
    bl.a11 = sqrt_psd(a11sq, 1e-8);
    bl.b00 = sqrt_psd(block_of(gb, 0), 1e-8);
    bl.b11 = sqrt_psd(block_of(gb, 1), 1e-8);

    const Mat x = p.resource.choi();
    const Mat xinv = inverse(x);

    // B-side singular structure.
    Mat xi = inverse(bl.b00) * bl.b11;
    SvdResult xs = svd(xi);
    bump(out.ws.residuals, "det_tb", std::abs(xs.sigma[0] * xs.sigma[1] - 1.0));
    Mat q = xs.u;
    Mat r = xs.vdag;
    double mu = xs.sigma[0] * xs.sigma[0];

    auto h_of = [&](const Mat& asq, const Mat& qbar) {
        return dagger(qbar) * transpose(bl.b00) * x * asq * x * conjugate(bl.b00) * qbar;
    };
    Mat qbar = conjugate(q);
    Mat h = h_of(a00sq, qbar);
    Mat hp = h_of(a11sq, qbar);

    // The singular-value ordering must match the weight ratio of H; if the
    // protocol realizes the inverted ratio, swap the SVD columns.
    if (std::abs(mu - 1.0) > 1e-9) {
        const double e_keep = std::abs(h(1, 1).real() - mu * h(0, 0).real());
        const double e_swap = std::abs(h(1, 1).real() - h(0, 0).real() / mu);
        if (e_swap < e_keep) {
            Mat perm(2, 2);
            perm(0, 1) = perm(1, 0) = 1.0;
            q = q * perm;
            r = perm * r;
            mu = 1.0 / mu;
            qbar = conjugate(q);
            h = h_of(a00sq, qbar);
            hp = h_of(a11sq, qbar);
            bump(out.ws.residuals, "mu_order_swapped", 1.0);
        }
    }
    const double h00 = h(0, 0).real();
    if (h00 < kDeadWeight)
        throw InvariantViolation("case c: prefix carries no weight, cannot normalize");
    bump(out.ws.residuals, "h_ratio", std::abs(h(1, 1).real() - mu * h00) / h00);

    const cplx eith = std::polar(1.0, theta);
    const cplx edp = (mu - eith) / (mu * eith - 1.0);  // e^{-i delta'}
    const double delta_prime = -std::arg(edp);
    out.phase_dp = std::conj(edp);
    out.ws.mu = mu;
    out.ws.delta_prime = delta_prime;
    bump(out.ws.residuals, "mud_identity",
         std::abs(mu + edp - eith * (1.0 + mu * edp)));

    const Mat dtil = Mat::diag({1.0, out.phase_dp});
    bump(out.ws.residuals, "h_prime", max_abs_diff(hp, dtil * h * dagger(dtil)) / std::max(1.0, h00));

    // Phase pair solving  sum_r rho^2 |m(psi_r)><m(psi_r)| = H.
    const double rho = std::sqrt(h00 / 2.0);
    cplx tau = h(0, 1) / (std::sqrt(mu) * h00);
    double ta = std::abs(tau);
    if (ta > 1.0) {
        bump(out.ws.residuals, "tau_clamp", ta - 1.0);
        tau /= ta;
        ta = 1.0;
    }
    const double spread = std::acos(ta);
    const double base = std::arg(tau);
    const double psi[2] = {base + spread, base - spread};
    out.ws.phi0 = psi[0];
    out.ws.phi1 = psi[1];

    const Mat rbar = conjugate(r);
    const Mat binv_star = inverse(conjugate(bl.b00));
    const Mat right = dagger(qbar) * binv_star * xinv;
    const Mat a_inv = inverse(a_pref);
    const Mat b_inv = inverse(b_pref);
    const Mat q_dag_b00 = dagger(q) * bl.b00;
    const cplx one{1.0, 0.0};

    for (int ri = 0; ri < 2; ++ri) {
        const cplx eips = std::polar(1.0, psi[ri]);
        const Mat p0 = row2(one, std::sqrt(mu) * eips) * right * cplx(rho, 0.0);
        const Mat p1 = row2(one, std::sqrt(mu) * eips * edp) * right * cplx(rho, 0.0);
        out.m_prime[ri] = embed_rows(p0, p1) * a_inv;

        // Bob's rotated readout rows.
        const Mat t1 = row2(std::sqrt(mu), eips) * rbar;
        const cplx den = std::sqrt(mu) * eips * eith * (edp - one);
        Mat wrow1 = row2(std::sqrt(mu) * (one - eith), eips * (edp - eith)) * rbar;
        wrow1 = wrow1 * (one / den);
        Mat wrow0 = t1 - wrow1 * (std::sqrt(mu) * eips);

        // Polish to an exactly orthonormal pair.
        double n0 = fro_norm(wrow0);
        bump(out.ws.residuals, "omega_polish", std::abs(n0 - 1.0));
        wrow0 = wrow0 * (one / n0);
        cplx ip = 0;
        for (int s = 0; s < 2; ++s) ip += std::conj(wrow0(0, s)) * wrow1(0, s);
        bump(out.ws.residuals, "omega_polish", std::abs(ip));
        for (int s = 0; s < 2; ++s) wrow1(0, s) -= ip * wrow0(0, s);
        const double n1 = fro_norm(wrow1);
        bump(out.ws.residuals, "omega_polish", std::abs(n1 - 1.0));
        wrow1 = wrow1 * (one / n1);

        const Mat rows[2] = {wrow0, wrow1};
        for (int s = 0; s < 2; ++s) {
            Mat q0(1, 2), q1(1, 2);
            for (int c = 0; c < 2; ++c) {
                q0(0, c) = q_dag_b00(s, c);
                q1(0, c) = 0;
            }
            const Mat w_conj = conjugate(rows[s]);
            q1 = w_conj * bl.b11;
            out.k_prime[ri][s] = embed_rows(q0, q1) * b_inv;
        }
    }

    // Construction sanity: the two instruments must be complete.
    Mat sum_m(4, 4), sum_k(4, 4);
    for (int ri = 0; ri < 2; ++ri) sum_m = sum_m + dagger(out.m_prime[ri]) * out.m_prime[ri];
    bump(out.ws.residuals, "mprime_complete", max_abs_diff(sum_m, Mat::identity(4)));
    for (int ri = 0; ri < 2; ++ri) {
        Mat sk(4, 4);
        for (int s = 0; s < 2; ++s) sk = sk + dagger(out.k_prime[ri][s]) * out.k_prime[ri][s];
        bump(out.ws.residuals, "kprime_complete", max_abs_diff(sk, Mat::identity(4)));
    }

    case_c_diagnostics(p, t, prefix, bl, theta, out.ws);
    return out;
}

// ---------------------------------------------------------------------------
// Cases a and b: one party's blocks are rank one, so that party's measurement
// near the end only rescales its accumulated operator. The weight moves to
// the other party's operators and the turn disappears.
// ---------------------------------------------------------------------------

struct CaseAData {
    // Per (bob outcome i, alice outcome j): weight p_ij and Alice's final op.
    std::vector<std::vector<double>> p;
    std::vector<std::vector<Mat>> final_op;
    Mat completion;  // extra final outcome when Alice's register is rank-deficient
    bool has_completion = false;
    double prob_residual = 0;
    double prop_residual = 0;
};

CaseAData build_case_a(const LoccProtocol& p, const TailIdx& t, const History& prefix,
                       const Tolerance& tol) {
    CaseAData d;
    const auto acc = accumulated_prefix(p, prefix);
    const Mat& a_pref = acc.acc_a;
    const Mat ga = dagger(a_pref) * a_pref;
    const double tr_a = trace(ga).real();
    const Mat a_pinv = pinv(a_pref, tol);
    const int dim_a = a_pref.rows();

    const Mat range_rows = svd_frame_rows(a_pref, 0, 2);
    if (dim_a > 2) {
        d.completion = svd_frame_rows(a_pref, 2, dim_a);
        d.has_completion = true;
    }

    const int ni = arity_at(p, t.bob1, prefix);
    d.p.resize(static_cast<size_t>(ni));
    d.final_op.resize(static_cast<size_t>(ni));
    for (int i = 0; i < ni; ++i) {
        const History hb = extend(prefix, {i});
        const int nj = arity_at(p, t.alice2, hb);
        double psum = 0;
        for (int j = 0; j < nj; ++j) {
            const auto leaf = accumulated_prefix(p, extend(prefix, {i, j}));
            const Mat gl = dagger(leaf.acc_a) * leaf.acc_a;
            const double pij = tr_a > kDeadWeight ? trace(gl).real() / tr_a : 1.0 / nj;
            psum += pij;
            d.p[static_cast<size_t>(i)].push_back(pij);
            if (tr_a > kDeadWeight)
                d.prop_residual = std::max(d.prop_residual, max_abs_diff(gl, ga * cplx(pij, 0.0)));
            if (pij > kDeadWeight) {
                d.final_op[static_cast<size_t>(i)].push_back(leaf.acc_a * a_pinv *
                                                             cplx(1.0 / std::sqrt(pij), 0.0));
            } else {
                d.final_op[static_cast<size_t>(i)].push_back(range_rows);
            }
        }
        d.prob_residual = std::max(d.prob_residual, std::abs(psum - 1.0));
    }
    return d;
}

struct CaseBData {
    std::vector<double> q;  // per bob outcome i
    Mat b_pinv;
    Mat completion;
    Mat range_rows;
    bool has_completion = false;
    double prob_residual = 0;
    double prop_residual = 0;
    double tr_b = 0;
};

CaseBData build_case_b(const LoccProtocol& p, const TailIdx& t, const History& prefix,
                       const Tolerance& tol) {
    CaseBData d;
    const auto acc = accumulated_prefix(p, prefix);
    const Mat& b_pref = acc.acc_b;
    const Mat gb = dagger(b_pref) * b_pref;
    d.tr_b = trace(gb).real();
    d.b_pinv = pinv(b_pref, tol);
    d.range_rows = svd_frame_rows(b_pref, 0, 2);
    if (b_pref.rows() > 2) {
        d.completion = svd_frame_rows(b_pref, 2, b_pref.rows());
        d.has_completion = true;
    }

    const int ni = arity_at(p, t.bob1, prefix);
    double qsum = 0;
    for (int i = 0; i < ni; ++i) {
        const History hj = extend(prefix, {i, 0});
        const int nk = arity_at(p, t.bob2, hj);
        Mat g(b_pref.cols(), b_pref.cols());
        for (int k = 0; k < nk; ++k) {
            const auto leaf = accumulated_prefix(p, extend(prefix, {i, 0, k}));
            g = g + dagger(leaf.acc_b) * leaf.acc_b;
        }
        const double qi = d.tr_b > kDeadWeight ? trace(g).real() / d.tr_b : 1.0 / ni;
        qsum += qi;
        d.q.push_back(qi);
        if (d.tr_b > kDeadWeight)
            d.prop_residual = std::max(d.prop_residual, max_abs_diff(g, gb * cplx(qi, 0.0)));
    }
    d.prob_residual = std::abs(qsum - 1.0);
    return d;
}

// ---------------------------------------------------------------------------

std::map<History, ReductionCase> classify_all(const LoccProtocol& p, const TailIdx& t,
                                              const Tolerance& tol) {
    std::map<History, ReductionCase> cases;
    for (const auto& h : histories_at(p, t.alice1 + 1)) {
        const BlockElements bl = blocks_from_gram(p, h, tol);
        if (bl.rank_a00 == 0 && bl.rank_a11 == 0) {
            cases[h] = ReductionCase::A;  // dead subtree, any route works
            continue;
        }
        cases[h] = classify_case(bl, tol);
    }
    return cases;
}

LoccProtocol apply_surgery_ac(const LoccProtocol& p, const TailIdx& t,
                              const std::map<History, ReductionCase>& cases, double theta,
                              const Tolerance& tol, ReductionStep& rec) {
    LoccProtocol out;
    out.resource = p.resource;
    out.res_dim_a = p.res_dim_a;
    out.res_dim_b = p.res_dim_b;
    for (int k = 0; k < t.alice1; ++k) out.turns.push_back(p.turns[static_cast<size_t>(k)]);

    Turn ta, tb, tc;
    ta.party = Party::Alice;
    tb.party = Party::Bob;
    tc.party = Party::Alice;

    bool saw_c = false;
    for (const auto& hp : histories_at(p, t.alice1)) {
        const Instrument& m_old = p.turns[static_cast<size_t>(t.alice1)].instruments.at(hp);
        Instrument ta_ins;
        for (int r0 = 0; r0 < static_cast<int>(m_old.ops.size()); ++r0) {
            const History h = extend(hp, {r0});
            if (cases.at(h) == ReductionCase::C) {
                CaseCBuild cb = build_case_c(p, t, h, theta, tol);
                if (!saw_c || cb.ws.mu != 1.0) {
                    rec.lambda = cb.ws.lambda;
                    rec.mu = cb.ws.mu;
                    rec.delta_prime = cb.ws.delta_prime;
                }
                saw_c = true;
                for (const auto& [key, val] : cb.ws.residuals) bump(rec.residuals, key, val);
                for (int r = 0; r < 2; ++r) {
                    const int lbl = static_cast<int>(ta_ins.ops.size());
                    ta_ins.ops.push_back(cb.m_prime[r] * m_old.ops[static_cast<size_t>(r0)]);
                    const History hb = extend(hp, {lbl});
                    Instrument tb_ins;
                    tb_ins.ops.push_back(cb.k_prime[r][0]);
                    tb_ins.ops.push_back(cb.k_prime[r][1]);
                    tb.instruments[hb] = std::move(tb_ins);
                    for (int s = 0; s < 2; ++s) {
                        Instrument tc_ins;
                        tc_ins.ops.push_back(s == 0 ? Mat::identity(2)
                                                    : Mat::diag({1.0, cb.phase_dp}));
                        tc.instruments[extend(hb, {s})] = std::move(tc_ins);
                    }
                }
            } else {
                CaseAData ad = build_case_a(p, t, h, tol);
                bump(rec.residuals, "prob_sum", ad.prob_residual);
                bump(rec.residuals, "case_a_proportionality", ad.prop_residual);
                const int lbl = static_cast<int>(ta_ins.ops.size());
                ta_ins.ops.push_back(m_old.ops[static_cast<size_t>(r0)]);
                const History hb = extend(hp, {lbl});
                Instrument tb_ins;
                int triple = 0;
                const int ni = arity_at(p, t.bob1, h);
                for (int i = 0; i < ni; ++i) {
                    const History hi = extend(h, {i});
                    const int nj = arity_at(p, t.alice2, hi);
                    for (int j = 0; j < nj; ++j) {
                        const History hij = extend(hi, {j});
                        const int nk = arity_at(p, t.bob2, hij);
                        const double pij = ad.p[static_cast<size_t>(i)][static_cast<size_t>(j)];
                        for (int k = 0; k < nk; ++k) {
                            tb_ins.ops.push_back(op_at(p, t.bob2, hij, k) *
                                                 op_at(p, t.bob1, h, i) *
                                                 cplx(std::sqrt(std::max(0.0, pij)), 0.0));
                            Instrument tc_ins;
                            tc_ins.ops.push_back(
                                ad.final_op[static_cast<size_t>(i)][static_cast<size_t>(j)]);
                            if (ad.has_completion) tc_ins.ops.push_back(ad.completion);
                            tc.instruments[extend(hb, {triple})] = std::move(tc_ins);
                            ++triple;
                        }
                    }
                }
                tb.instruments[hb] = std::move(tb_ins);
            }
        }
        ta.instruments[hp] = std::move(ta_ins);
    }
    out.turns.push_back(std::move(ta));
    out.turns.push_back(std::move(tb));
    out.turns.push_back(std::move(tc));
    return out;
}

LoccProtocol apply_surgery_b(const LoccProtocol& p, const TailIdx& t, const Tolerance& tol,
                             ReductionStep& rec) {
    LoccProtocol out;
    out.resource = p.resource;
    out.res_dim_a = p.res_dim_a;
    out.res_dim_b = p.res_dim_b;
    for (int k = 0; k < t.alice1; ++k) out.turns.push_back(p.turns[static_cast<size_t>(k)]);

    Turn ta, tmid, tbob;
    ta.party = Party::Alice;
    tmid.party = Party::Alice;
    tbob.party = Party::Bob;

    for (const auto& hp : histories_at(p, t.alice1)) {
        const Instrument& m_old = p.turns[static_cast<size_t>(t.alice1)].instruments.at(hp);
        Instrument ta_ins;
        for (int r0 = 0; r0 < static_cast<int>(m_old.ops.size()); ++r0) {
            const History h = extend(hp, {r0});
            CaseBData bd = build_case_b(p, t, h, tol);
            bump(rec.residuals, "prob_sum", bd.prob_residual);
            bump(rec.residuals, "case_b_proportionality", bd.prop_residual);
            const int ni = arity_at(p, t.bob1, h);
            for (int i = 0; i < ni; ++i) {
                const double qi = bd.q[static_cast<size_t>(i)];
                const int lbl = static_cast<int>(ta_ins.ops.size());
                ta_ins.ops.push_back(m_old.ops[static_cast<size_t>(r0)] *
                                     cplx(std::sqrt(std::max(0.0, qi)), 0.0));
                const History hb = extend(hp, {lbl});
                const History hi = extend(h, {i});
                tmid.instruments[hb] = p.turns[static_cast<size_t>(t.alice2)].instruments.at(hi);
                const int nj = arity_at(p, t.alice2, hi);
                for (int j = 0; j < nj; ++j) {
                    const History hij = extend(hi, {j});
                    const int nk = arity_at(p, t.bob2, hij);
                    Instrument bob_ins;
                    for (int k = 0; k < nk; ++k) {
                        const auto leaf = accumulated_prefix(p, extend(hij, {k}));
                        if (qi > kDeadWeight)
                            bob_ins.ops.push_back(leaf.acc_b * bd.b_pinv *
                                                  cplx(1.0 / std::sqrt(qi), 0.0));
                        else
                            bob_ins.ops.push_back(bd.range_rows);
                    }
                    if (bd.has_completion) bob_ins.ops.push_back(bd.completion);
                    tbob.instruments[extend(hb, {j})] = std::move(bob_ins);
                }
            }
        }
        ta.instruments[hp] = std::move(ta_ins);
    }
    out.turns.push_back(std::move(ta));
    out.turns.push_back(std::move(tmid));
    out.turns.push_back(std::move(tbob));
    return out;
}

int find_last_same_party_pair(const LoccProtocol& p) {
    for (int k = p.n_turns() - 2; k >= 0; --k)
        if (p.turns[static_cast<size_t>(k)].party == p.turns[static_cast<size_t>(k + 1)].party)
            return k;
    return -1;
}

LoccProtocol single_case_reduce(const LoccProtocol& p, const ControlledUnitary& target,
                                const Tolerance& tol, ReductionCase want) {
    if (target.degenerate)
        throw std::invalid_argument("reducer: the gate is local (theta == 0), nothing to reduce");
    FrameInfo f = to_working_frame(p, tol);
    require_alternating_tail(f.p);
    const TailIdx t = tail_of(f.p.n_turns());
    const auto cases = classify_all(f.p, t, tol);
    for (const auto& [h, c] : cases)
        if (c != want)
            throw std::invalid_argument("reduce_case_" + to_string(want) + ": prefix " +
                                        history_to_string(h) + " classifies as case " +
                                        to_string(c));
    ReductionStep rec;
    LoccProtocol q = want == ReductionCase::B
                         ? apply_surgery_b(f.p, t, tol, rec)
                         : apply_surgery_ac(f.p, t, cases, target.theta, tol, rec);
    if (f.swapped) q = swap_parties(q);
    return pad_to_uniform_depth(q);
}

}  // namespace

std::string to_string(ReductionCase c) {
    switch (c) {
        case ReductionCase::A: return "a";
        case ReductionCase::B: return "b";
        default: return "c";
    }
}

BlockElements compute_block_elements(const LoccProtocol& p, const Tolerance& tol) {
    FrameInfo f = to_working_frame(p, tol);
    const int n = f.p.n_turns();
    if (n < 3) throw std::invalid_argument("compute_block_elements: need at least three turns");
    const TailIdx t = tail_of(n);
    if (f.p.turns[static_cast<size_t>(t.bob2)].party != Party::Bob ||
        f.p.turns[static_cast<size_t>(t.alice2)].party != Party::Alice ||
        f.p.turns[static_cast<size_t>(t.bob1)].party != Party::Bob)
        throw std::invalid_argument("compute_block_elements: tail turns must alternate");
    const History prefix(static_cast<size_t>(n - 3), 0);
    std::map<std::string, double> res;
    return blocks_from_leaves(f.p, t, prefix, tol, &res);
}

ReductionCase classify_case(const BlockElements& bl, const Tolerance&) {
    if (bl.rank_a00 != bl.rank_a11)
        throw InvariantViolation("rank(A00) = " + std::to_string(bl.rank_a00) +
                                 " differs from rank(A11) = " + std::to_string(bl.rank_a11) +
                                 "; tolerance or verification inconsistency");
    if (bl.rank_a00 <= 1) return ReductionCase::A;
    if (bl.rank_b00 != bl.rank_b11)
        throw InvariantViolation("rank(B00) = " + std::to_string(bl.rank_b00) +
                                 " differs from rank(B11) = " + std::to_string(bl.rank_b11) +
                                 "; tolerance or verification inconsistency");
    return bl.rank_b00 == 1 ? ReductionCase::B : ReductionCase::C;
}

LoccProtocol reduce_case_a(const LoccProtocol& p, const ControlledUnitary& target,
                           const Tolerance& tol) {
    return single_case_reduce(p, target, tol, ReductionCase::A);
}

LoccProtocol reduce_case_b(const LoccProtocol& p, const ControlledUnitary& target,
                           const Tolerance& tol) {
    return single_case_reduce(p, target, tol, ReductionCase::B);
}

LoccProtocol reduce_case_c(const LoccProtocol& p, const ControlledUnitary& target,
                           const Tolerance& tol) {
    return single_case_reduce(p, target, tol, ReductionCase::C);
}

ReductionResult reduce_to_three_turns(const LoccProtocol& p, const ControlledUnitary& target,
                                      const Tolerance& tol) {
    if (target.degenerate)
        throw std::invalid_argument("reducer: the gate is local (theta == 0), nothing to reduce");
    FrameInfo f = to_working_frame(p, tol);

    Tolerance budget = tol;
    budget.eps_eq = std::max(tol.eps_eq, 1e-7);
    {
        const auto rep = verify(f.p, target, budget);
        if (!rep.pass)
            throw std::invalid_argument(
                "reduce_to_three_turns: input does not implement the target (max deviation " +
                std::to_string(rep.max_deviation) + ")");
    }

    ReductionResult out;
    int guard = 0;
    while (f.p.n_turns() > 3) {
        if (++guard > 64) throw std::runtime_error("reduce_to_three_turns: no progress");
        ReductionStep rec;
        rec.step = static_cast<int>(out.trace.steps.size());

        const int seam = find_last_same_party_pair(f.p);
        if (seam >= 0) {
            f.p = pad_to_uniform_depth(merge_adjacent_turns(f.p, seam));
            rec.kind = "merge";
        } else {
            const bool flip = f.p.turns.back().party == Party::Alice;
            LoccProtocol w = flip ? swap_parties(f.p) : f.p;
            require_alternating_tail(w);
            const TailIdx t = tail_of(w.n_turns());
            const auto cases = classify_all(w, t, tol);
            bool any_b = false, all_b = true;
            for (const auto& [h, c] : cases) {
                any_b = any_b || c == ReductionCase::B;
                all_b = all_b && c == ReductionCase::B;
            }
            LoccProtocol next;
            if (all_b && !cases.empty()) {
                next = apply_surgery_b(w, t, tol, rec);
                rec.kind = "b";
            } else if (!any_b) {
                next = apply_surgery_ac(w, t, cases, target.theta, tol, rec);
                bool has_a = false, has_c = false;
                for (const auto& [h, c] : cases) {
                    has_a = has_a || c == ReductionCase::A;
                    has_c = has_c || c == ReductionCase::C;
                }
                rec.kind = has_a && has_c ? "a+c" : (has_c ? "c" : "a");
            } else {
                throw InvariantViolation(
                    "reduce_to_three_turns: prefixes mix case b with other cases; this tree "
                    "shape is not supported");
            }
            f.p = pad_to_uniform_depth(flip ? swap_parties(next) : next);
        }

        const auto rep = verify(f.p, target, budget);
        bump(rec.residuals, "verify_deviation", rep.max_deviation);
        bump(rec.residuals, "verify_prob", std::abs(rep.prob_sum - 1.0));
        if (!rep.pass)
            throw InvariantViolation("reduce_to_three_turns: step " + std::to_string(rec.step) +
                                     " (" + rec.kind + ") broke the implementation, deviation " +
                                     std::to_string(rep.max_deviation));
        out.trace.steps.push_back(std::move(rec));
    }
    if (f.swapped) f.p = swap_parties(f.p);
    out.protocol = std::move(f.p);
    return out;
}

Lemma4Report lemma4_functional(const Mat& a00, const Mat& b00, const Mat& b11, const Mat& choi) {
    Mat f(2, 2);
    for (const Mat* bll : {&b00, &b11}) {
        const Mat m = a00 * choi * conjugate(*bll);
        f = f + m * dagger(m);
    }
    Lemma4Report rep;
    const double half_tr = trace(f).real() / 2.0;
    Mat target = Mat::identity(2) * cplx(half_tr, 0.0);
    rep.proportionality_residual = max_abs_diff(f, target);
    const double f00 = f(0, 0).real(), f11 = f(1, 1).real();
    rep.inferred_mu = f00 + f11 > 0 ? f00 / (f00 + f11) : 0.5;
    return rep;
}

Lemma4Report check_lemma4(const LoccProtocol& p, const ControlledUnitary& target,
                          const Tolerance& tol) {
    FrameInfo f = to_working_frame(p, tol);
    if (f.p.n_turns() != 3)
        throw std::invalid_argument("check_lemma4: protocol must have exactly three turns");
    const auto rep = verify(f.p, target, tol);
    if (!rep.pass)
        throw std::invalid_argument("check_lemma4: protocol does not implement the target");
    const TailIdx t = tail_of(3);
    std::map<std::string, double> res;
    const BlockElements bl = blocks_from_leaves(f.p, t, History{}, tol, &res);
    return lemma4_functional(bl.a00, bl.b00, bl.b11, f.p.resource.choi());
}

std::vector<Mat> split_measurement(const Mat& t, const std::vector<Mat>& grams,
                                   const Tolerance& tol) {
    if (grams.empty()) throw std::invalid_argument("split_measurement: no target grams");
    Mat sum(t.cols(), t.cols());
    for (const Mat& g : grams) {
        if (g.rows() != t.cols() || g.cols() != t.cols())
            throw std::invalid_argument("split_measurement: gram dimension mismatch");
        sum = sum + g;
    }
    const Mat gt = dagger(t) * t;
    if (max_abs_diff(sum, gt) > std::max(tol.eps_eq, 1e-10) * 100)
        throw std::invalid_argument("split_measurement: grams do not sum to T^dag T");

    const Mat tp = pinv(t, tol);
    std::vector<Mat> out;
    for (const Mat& g : grams) out.push_back(sqrt_psd(g, 1e-9) * tp);

    const int rank = rank_tol(t, tol);
    if (rank < t.rows()) {
        // Isometric tail on the unreachable part of the output space.
        out.push_back(svd_frame_rows(t, rank, t.rows()));
    }
    return out;
}

LoccProtocol insert_identity_turn(const LoccProtocol& p, int position, Party party) {
    if (position < 0 || position > p.n_turns())
        throw std::invalid_argument("insert_identity_turn: bad position");
    LoccProtocol padded = pad_to_uniform_depth(p);
    LoccProtocol out;
    out.resource = padded.resource;
    out.res_dim_a = padded.res_dim_a;
    out.res_dim_b = padded.res_dim_b;

    // Register dimension of the acting party at each history of depth `position`.
    Turn fill;
    fill.party = party;
    fill.identity_fill = true;
    for (const auto& h : histories_at(padded, position)) {
        const auto acc = accumulated_prefix(padded, h);
        const int dim = party == Party::Alice ? acc.acc_a.rows() : acc.acc_b.rows();
        Instrument ins;
        ins.ops.push_back(Mat::identity(dim));
        fill.instruments[h] = std::move(ins);
    }

    for (int k = 0; k < position; ++k) out.turns.push_back(padded.turns[static_cast<size_t>(k)]);
    out.turns.push_back(std::move(fill));
    for (int k = position; k < padded.n_turns(); ++k) {
        const Turn& t = padded.turns[static_cast<size_t>(k)];
        Turn shifted;
        shifted.party = t.party;
        shifted.identity_fill = t.identity_fill;
        for (const auto& [h, ins] : t.instruments) {
            History nh(h.begin(), h.begin() + position);
            nh.push_back(0);
            nh.insert(nh.end(), h.begin() + position, h.end());
            shifted.instruments[std::move(nh)] = ins;
        }
        out.turns.push_back(std::move(shifted));
    }
    return out;
}

LoccProtocol insert_dressed_identity(const LoccProtocol& p, int position, Party party, const Mat& v) {
    if (!approx_equal(dagger(v) * v, Mat::identity(v.rows()), 1e-10))
        throw std::invalid_argument("insert_dressed_identity: dressing must be unitary");
    LoccProtocol out = insert_identity_turn(p, position, party);
    Turn& turn = out.turns[static_cast<size_t>(position)];
    turn.identity_fill = false;
    for (auto& [h, ins] : turn.instruments) {
        if (ins.ops[0].rows() != v.rows())
            throw std::invalid_argument("insert_dressed_identity: dressing dimension mismatch");
        ins.ops[0] = v;
    }
    // The same party's next turn undoes it.
    const Mat vd = dagger(v);
    for (int k = position + 1; k < out.n_turns(); ++k) {
        Turn& t = out.turns[static_cast<size_t>(k)];
        if (t.party != party) continue;
        for (auto& [h, ins] : t.instruments)
            for (auto& op : ins.ops) {
                if (op.cols() != vd.rows())
                    throw std::invalid_argument(
                        "insert_dressed_identity: register dimension changed before the undo");
                op = op * vd;
            }
        return out;
    }
    throw std::invalid_argument("insert_dressed_identity: the party never acts again");
}

}  // namespace locclab
