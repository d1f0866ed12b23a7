#include "locclab/reference.hpp"

#include <cmath>

#include "locclab/rng.hpp"

namespace locclab {

namespace {

constexpr double kPi = 3.14159265358979323846;

// CNOT from the input qubit onto the resource qubit, basis |i>|y> -> |i>|y^i>.
Mat cnot_in_to_res() {
    Mat m(4, 4);
    for (int i = 0; i < 2; ++i)
        for (int y = 0; y < 2; ++y) m(i * 2 + (y ^ i), i * 2 + y) = 1.0;
    return m;
}

// Controlled-u with the resource qubit as control and the input as target,
// basis |j>|y|: applies u^y to |j>.
Mat controlled_u_res_on_in(const Mat& u) {
    Mat m(4, 4);
    for (int y = 0; y < 2; ++y)
        for (int j = 0; j < 2; ++j)
            for (int j2 = 0; j2 < 2; ++j2) m(j2 * 2 + y, j * 2 + y) = y ? u(j2, j) : cplx(j == j2 ? 1.0 : 0.0);
    return m;
}

// (I (x) <v|): 2x4 readout of the resource qubit onto nothing.
Mat readout(const std::vector<cplx>& bra) {
    Mat m(2, 4);
    for (int i = 0; i < 2; ++i)
        for (int s = 0; s < 2; ++s) m(i, i * 2 + s) = bra[static_cast<size_t>(s)];
    return m;
}

}  // namespace

LoccProtocol build_eisert(const ControlledUnitary& target) {
    const double theta = target.theta;
    const Mat u = Mat::diag({1.0, std::polar(1.0, theta)});

    LoccProtocol p;
    p.resource = ResourceState::canonical(0.5);
    p.res_dim_a = 2;
    p.res_dim_b = 2;

    // Alice: CNOT onto her resource half, then Z-readout of it.
    Turn t1;
    t1.party = Party::Alice;
    {
        Instrument ins;
        const Mat cnot = cnot_in_to_res();
        ins.ops.push_back(readout({1.0, 0.0}) * cnot);
        ins.ops.push_back(readout({0.0, 1.0}) * cnot);
        t1.instruments[{}] = std::move(ins);
    }

    // Bob: conditional bit-flip, controlled-u, X-basis readout.
    Turn t2;
    t2.party = Party::Bob;
    {
        const Mat cu = controlled_u_res_on_in(u);
        Mat flip(2, 2);
        flip(0, 1) = flip(1, 0) = 1.0;
        const double s = 1.0 / std::sqrt(2.0);
        for (int a = 0; a < 2; ++a) {
            const Mat pre = a ? cu * kron(Mat::identity(2), flip) : cu;
            Instrument ins;
            ins.ops.push_back(readout({s, s}) * pre);
            ins.ops.push_back(readout({s, -s}) * pre);
            t2.instruments[{a}] = std::move(ins);
        }
    }

    // Alice: phase correction Z^b.
    Turn t3;
    t3.party = Party::Alice;
    {
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                Instrument ins;
                Mat z = Mat::identity(2);
                if (b) z(1, 1) = -1.0;
                ins.ops.push_back(z);
                t3.instruments[{a, b}] = std::move(ins);
            }
    }

    p.turns = {std::move(t1), std::move(t2), std::move(t3)};
    return p;
}

namespace {

// Entropy of U_theta (|alpha> (x) |beta>) as a function of the four Bloch
// angles; the two relative phases drop out of the singular values, but the
// full four-angle objective is kept for the public parameterization.
double output_entropy(double theta, double ta, double pa, double tb, double pb) {
    const cplx a0 = std::cos(ta / 2), a1 = std::polar(std::sin(ta / 2), pa);
    const cplx b0 = std::cos(tb / 2), b1 = std::polar(std::sin(tb / 2), pb);
    Mat m(2, 2);
    m(0, 0) = a0 * b0;
    m(0, 1) = a0 * b1;
    m(1, 0) = a1 * b0;
    m(1, 1) = a1 * b1 * std::polar(1.0, theta);
    // Squared Schmidt coefficients from the 2x2 Gram.
    const double t = std::norm(m(0, 0)) + std::norm(m(0, 1)) + std::norm(m(1, 0)) + std::norm(m(1, 1));
    const cplx d = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = std::sqrt(std::max(0.0, t * t - 4.0 * std::norm(d)));
    const double l1 = std::max(0.0, std::min(1.0, (t + disc) / 2));
    const double l2 = std::max(0.0, 1.0 - l1);
    double e = 0;
    if (l1 > 1e-15) e -= l1 * std::log2(l1);
    if (l2 > 1e-15) e -= l2 * std::log2(l2);
    return e;
}

}  // namespace

double entangling_power(const ControlledUnitary& target, long budget) {
    const double theta = target.theta;
    if (target.degenerate) return 0.0;

    long evals = 0;
    auto f = [&](const std::array<double, 4>& x) {
        ++evals;
        return output_entropy(theta, x[0], x[1], x[2], x[3]);
    };

    const int n_starts = 16;
    double best = 0;
    for (int start = 0; start < n_starts; ++start) {
        Rng rng(0xE15E27u, static_cast<uint64_t>(start));
        std::array<double, 4> x;
        for (auto& v : x) v = rng.uniform(0.0, kPi);
        double fx = f(x);
        for (int sweep = 0; sweep < 64 && evals < budget; ++sweep) {
            const double before = fx;
            for (int k = 0; k < 4 && evals < budget; ++k) {
                // Golden-section maximization on [x_k - pi, x_k + pi].
                const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
                double lo = x[static_cast<size_t>(k)] - kPi, hi = x[static_cast<size_t>(k)] + kPi;
                double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
                auto eval_at = [&](double v) {
                    auto y = x;
                    y[static_cast<size_t>(k)] = v;
                    return f(y);
                };
                double fc = eval_at(c), fd = eval_at(d);
                for (int it = 0; it < 40 && evals < budget; ++it) {
                    if (fc > fd) {
                        hi = d;
                        d = c;
                        fd = fc;
                        c = hi - gr * (hi - lo);
                        fc = eval_at(c);
                    } else {
                        lo = c;
                        c = d;
                        fc = fd;
                        d = lo + gr * (hi - lo);
                        fd = eval_at(d);
                    }
                }
                const double xm = (lo + hi) / 2, fm = eval_at(xm);
                if (fm > fx) {
                    x[static_cast<size_t>(k)] = xm;
                    fx = fm;
                }
            }
            if (fx - before < 1e-13) break;
        }
        if (fx > best) best = fx;
    }
    return std::min(1.0, best);
}

FeasibilityReport known_input_feasible(const ConvertibilityQuery& q, const Tolerance& tol) {
    if (q.input.dim_a != 2 || q.input.dim_b != 2)
        throw std::invalid_argument("known_input_feasible: input must be a two-qubit state");
    if (entanglement_entropy(q.input) > 1e-9)
        throw std::invalid_argument("known_input_feasible: input state is not a product state");

    const Mat u = q.target_gate.canonical_matrix();
    std::vector<cplx> out(4);
    for (int m = 0; m < 4; ++m)
        for (int x = 0; x < 4; ++x) out[static_cast<size_t>(m)] += u(m, x) * q.input.amplitudes[static_cast<size_t>(x)];
    const PureState target_state(out, 2, 2);
    const auto sd = schmidt_decompose(target_state);
    const auto rd = schmidt_decompose(q.resource.state);

    FeasibilityReport rep;
    rep.target_coeffs = {sd.coeffs[0], sd.coeffs.size() > 1 ? sd.coeffs[1] : 0.0};
    rep.resource_coeffs = {rd.coeffs[0], rd.coeffs.size() > 1 ? rd.coeffs[1] : 0.0};
    rep.required_entropy = entanglement_entropy(target_state);
    // 2x2 majorization: the resource converts to the target state iff its
    // larger squared coefficient does not exceed the target's.
    rep.feasible = rd.coeffs[0] * rd.coeffs[0] <=
                   sd.coeffs[0] * sd.coeffs[0] + std::max(tol.eps_eq, 1e-12);
    return rep;
}

}  // namespace locclab
