#include "locclab/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace locclab {

std::string history_to_string(const History& h) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < h.size(); ++i) os << (i ? "," : "") << h[i];
    os << ")";
    return os.str();
}

bool is_identity(const Mat& m, double eps) {
    return m.is_square() && approx_equal(m, Mat::identity(m.rows()), eps);
}

namespace {

struct NodeDims {
    int dim_a;  // Alice's full register dimension (2 * resource part)
    int dim_b;
};

const Instrument* find_instrument(const Turn& t, const History& h) {
    auto it = t.instruments.find(h);
    return it == t.instruments.end() ? nullptr : &it->second;
}

Instrument identity_instrument(int dim) {
    Instrument ins;
    ins.ops.push_back(Mat::identity(dim));
    return ins;
}

// Walks the tree, invoking f(history, dims, turn_index, instrument) for every
// reachable node; missing instruments are treated as implicit identities.
template <typename F>
void walk(const LoccProtocol& p, F&& f) {
    struct Node {
        History h;
        NodeDims d;
    };
    std::vector<Node> level{{History{}, {2 * p.res_dim_a, 2 * p.res_dim_b}}};
    for (int k = 0; k < p.n_turns(); ++k) {
        const Turn& t = p.turns[static_cast<size_t>(k)];
        std::vector<Node> next;
        for (const auto& node : level) {
            const int acting = t.party == Party::Alice ? node.d.dim_a : node.d.dim_b;
            const Instrument* ins = find_instrument(t, node.h);
            Instrument fallback;
            if (!ins) {
                fallback = identity_instrument(acting);
                ins = &fallback;
            }
            f(node.h, node.d, k, *ins);
            for (size_t r = 0; r < ins->ops.size(); ++r) {
                NodeDims nd = node.d;
                const int rows = ins->ops[r].rows();
                if (t.party == Party::Alice)
                    nd.dim_a = rows;
                else
                    nd.dim_b = rows;
                History h2 = node.h;
                h2.push_back(static_cast<int>(r));
                next.push_back({std::move(h2), nd});
            }
        }
        level = std::move(next);
    }
}

}  // namespace

std::vector<std::string> validate(const LoccProtocol& p, const Tolerance& tol) {
    std::vector<std::string> out;

    // Structural pass: every instrument key must be a reachable history.
    for (int k = 0; k < p.n_turns(); ++k) {
        std::vector<History> reachable;
        // Recompute reachable histories at depth k (cheap at these sizes).
        std::vector<History> level{History{}};
        for (int j = 0; j < k; ++j) {
            std::vector<History> next;
            for (const auto& h : level) {
                const Turn& t = p.turns[static_cast<size_t>(j)];
                const Instrument* ins = find_instrument(t, h);
                const size_t arity = ins ? ins->ops.size() : 1;
                for (size_t r = 0; r < arity; ++r) {
                    History h2 = h;
                    h2.push_back(static_cast<int>(r));
                    next.push_back(std::move(h2));
                }
            }
            level = std::move(next);
        }
        for (const auto& [h, ins] : p.turns[static_cast<size_t>(k)].instruments) {
            if (static_cast<int>(h.size()) != k ||
                std::find(level.begin(), level.end(), h) == level.end())
                throw ProtocolStructureError("turn " + std::to_string(k) +
                                             " references unreachable history " + history_to_string(h));
            if (ins.ops.empty())
                throw ProtocolStructureError("turn " + std::to_string(k) + " history " +
                                             history_to_string(h) + " has no operators");
        }
    }

    if (std::abs(p.resource.state.norm() - 1.0) > 1e-6)
        out.push_back("resource state is not normalized");
    if (p.resource.state.dim_a != p.res_dim_a || p.resource.state.dim_b != p.res_dim_b)
        out.push_back("resource dimensions do not match protocol registers");

    walk(p, [&](const History& h, const NodeDims& d, int k, const Instrument& ins) {
        const Turn& t = p.turns[static_cast<size_t>(k)];
        const int acting = t.party == Party::Alice ? d.dim_a : d.dim_b;
        Mat sum = Mat::zero(acting, acting);
        bool shapes_ok = true;
        for (const Mat& m : ins.ops) {
            if (!m.finite()) {
                out.push_back("turn " + std::to_string(k) + " history " + history_to_string(h) +
                              ": non-finite operator");
                shapes_ok = false;
                break;
            }
            if (m.cols() != acting) {
                out.push_back("turn " + std::to_string(k) + " history " + history_to_string(h) +
                              ": operator acts on dimension " + std::to_string(m.cols()) +
                              ", register has " + std::to_string(acting));
                shapes_ok = false;
                break;
            }
            if (m.rows() % 2 != 0 || m.rows() < 2) {
                out.push_back("turn " + std::to_string(k) + " history " + history_to_string(h) +
                              ": output dimension must be a positive multiple of the input qubit");
                shapes_ok = false;
                break;
            }
            sum = sum + dagger(m) * m;
        }
        if (shapes_ok && !approx_equal(sum, Mat::identity(acting), std::max(tol.eps_eq, 1e-10) * 10))
            out.push_back("turn " + std::to_string(k) + " history " + history_to_string(h) +
                          ": completeness violated, max deviation " +
                          std::to_string(max_abs_diff(sum, Mat::identity(acting))));
    });
    return out;
}

LoccProtocol pad_to_uniform_depth(const LoccProtocol& p) {
    LoccProtocol q = p;
    walk(p, [&](const History& h, const NodeDims& d, int k, const Instrument&) {
        Turn& t = q.turns[static_cast<size_t>(k)];
        if (!find_instrument(t, h)) {
            const int acting = t.party == Party::Alice ? d.dim_a : d.dim_b;
            t.instruments[h] = identity_instrument(acting);
        }
    });
    return q;
}

std::vector<Branch> accumulated_operators(const LoccProtocol& p) {
    struct Node {
        History h;
        Mat a, b;
    };
    std::vector<Node> level{{History{}, Mat::identity(2 * p.res_dim_a), Mat::identity(2 * p.res_dim_b)}};
    for (int k = 0; k < p.n_turns(); ++k) {
        const Turn& t = p.turns[static_cast<size_t>(k)];
        std::vector<Node> next;
        for (const auto& node : level) {
            const Instrument* ins = find_instrument(t, node.h);
            if (!ins)
                throw ProtocolStructureError("accumulated_operators: missing instrument at turn " +
                                             std::to_string(k) + " history " + history_to_string(node.h) +
                                             " (pad_to_uniform_depth first)");
            for (size_t r = 0; r < ins->ops.size(); ++r) {
                Node n2;
                n2.h = node.h;
                n2.h.push_back(static_cast<int>(r));
                if (t.party == Party::Alice) {
                    n2.a = ins->ops[r] * node.a;
                    n2.b = node.b;
                } else {
                    n2.a = node.a;
                    n2.b = ins->ops[r] * node.b;
                }
                next.push_back(std::move(n2));
            }
        }
        level = std::move(next);
    }
    std::vector<Branch> out;
    out.reserve(level.size());
    for (auto& n : level) out.push_back({std::move(n.h), std::move(n.a), std::move(n.b)});
    return out;
}

PrefixOps accumulated_prefix(const LoccProtocol& p, const History& prefix) {
    Mat a = Mat::identity(2 * p.res_dim_a);
    Mat b = Mat::identity(2 * p.res_dim_b);
    History h;
    for (size_t k = 0; k < prefix.size(); ++k) {
        const Turn& t = p.turns.at(k);
        const Instrument* ins = find_instrument(t, h);
        Instrument fallback;
        if (!ins) {
            fallback = identity_instrument(t.party == Party::Alice ? a.rows() : b.rows());
            ins = &fallback;
        }
        const int r = prefix[k];
        if (r < 0 || r >= static_cast<int>(ins->ops.size()))
            throw ProtocolStructureError("accumulated_prefix: outcome out of range at turn " +
                                         std::to_string(k));
        if (t.party == Party::Alice)
            a = ins->ops[static_cast<size_t>(r)] * a;
        else
            b = ins->ops[static_cast<size_t>(r)] * b;
        h.push_back(r);
    }
    return {a, b};
}

std::vector<cplx> branch_apply(const Mat& acc_a, const Mat& acc_b, const std::vector<cplx>& in4,
                               const std::vector<cplx>& res, int res_dim_a, int res_dim_b) {
    if (static_cast<int>(in4.size()) != 4) throw std::invalid_argument("branch_apply: input must be 2x2");
    if (static_cast<int>(res.size()) != res_dim_a * res_dim_b)
        throw std::invalid_argument("branch_apply: resource dimension mismatch");
    // Joint vector on (A_in, A_r, B_in, B_r) ordering.
    const int da = 2 * res_dim_a, db = 2 * res_dim_b;
    std::vector<cplx> joint(static_cast<size_t>(da * db));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int s = 0; s < res_dim_a; ++s)
                for (int t = 0; t < res_dim_b; ++t)
                    joint[static_cast<size_t>((i * res_dim_a + s) * db + (j * res_dim_b + t))] =
                        in4[static_cast<size_t>(i * 2 + j)] * res[static_cast<size_t>(s * res_dim_b + t)];
    if (acc_a.cols() != da || acc_b.cols() != db)
        throw std::invalid_argument("branch_apply: accumulated operator shape mismatch");
    // (A (x) B) |joint>
    const int ra = acc_a.rows(), rb = acc_b.rows();
    std::vector<cplx> out(static_cast<size_t>(ra * rb));
    std::vector<cplx> tmp(static_cast<size_t>(ra * db));
    for (int i = 0; i < ra; ++i)
        for (int c = 0; c < da; ++c) {
            const cplx a = acc_a(i, c);
            if (a == cplx{}) continue;
            for (int j = 0; j < db; ++j)
                tmp[static_cast<size_t>(i * db + j)] += a * joint[static_cast<size_t>(c * db + j)];
        }
    for (int j = 0; j < rb; ++j)
        for (int c = 0; c < db; ++c) {
            const cplx b = acc_b(j, c);
            if (b == cplx{}) continue;
            for (int i = 0; i < ra; ++i)
                out[static_cast<size_t>(i * rb + j)] += b * tmp[static_cast<size_t>(i * db + c)];
        }
    return out;
}

Mat apply_channel(const LoccProtocol& p, const Mat& rho_in) {
    if (rho_in.rows() != 4 || rho_in.cols() != 4)
        throw std::invalid_argument("apply_channel: input density matrix must be 4x4");
    if (!rho_in.finite() || std::abs(trace(rho_in).real() - 1.0) > 1e-6 ||
        std::abs(trace(rho_in).imag()) > 1e-9 || max_abs_diff(rho_in, dagger(rho_in)) > 1e-8)
        throw std::invalid_argument("apply_channel: input is not a unit-trace Hermitian matrix");

    // Decompose rho_in over its eigenvectors and push the pure pieces through.
    HermEigResult eig = hermitian_eig(rho_in);
    for (double lam : eig.evals)
        if (lam < -1e-8) throw std::invalid_argument("apply_channel: input is not positive semidefinite");

    const auto branches = accumulated_operators(p);
    const auto& res = p.resource.state.amplitudes;
    Mat out(4, 4);
    for (int e = 0; e < 4; ++e) {
        const double lam = std::max(0.0, eig.evals[static_cast<size_t>(e)]);
        if (lam < 1e-15) continue;
        std::vector<cplx> in4(4);
        for (int i = 0; i < 4; ++i) in4[static_cast<size_t>(i)] = eig.evecs(i, e);
        for (const auto& br : branches) {
            const auto v = branch_apply(br.acc_a, br.acc_b, in4, res, p.res_dim_a, p.res_dim_b);
            const int sa = br.acc_a.rows() / 2, sb = br.acc_b.rows() / 2;
            // Trace out the leftover resource registers of the output.
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int i2 = 0; i2 < 2; ++i2)
                        for (int j2 = 0; j2 < 2; ++j2) {
                            cplx acc = 0;
                            for (int s = 0; s < sa; ++s)
                                for (int t = 0; t < sb; ++t)
                                    acc += v[static_cast<size_t>((i * sa + s) * (2 * sb) + (j * sb + t))] *
                                           std::conj(v[static_cast<size_t>((i2 * sa + s) * (2 * sb) +
                                                                           (j2 * sb + t))]);
                            out(i * 2 + j, i2 * 2 + j2) += lam * acc;
                        }
        }
    }
    return out;
}

LoccProtocol merge_adjacent_turns(const LoccProtocol& p, int k) {
    if (k < 0 || k + 1 >= p.n_turns()) throw std::invalid_argument("merge_adjacent_turns: bad index");
    const Turn& t1 = p.turns[static_cast<size_t>(k)];
    const Turn& t2 = p.turns[static_cast<size_t>(k + 1)];
    if (t1.party != t2.party)
        throw std::invalid_argument("merge_adjacent_turns: turns belong to different parties");

    LoccProtocol padded = pad_to_uniform_depth(p);
    const Turn& p1 = padded.turns[static_cast<size_t>(k)];
    const Turn& p2 = padded.turns[static_cast<size_t>(k + 1)];

    // Flattened joint outcomes (r_k, r_{k+1}) -> new label, per history.
    std::map<History, std::vector<std::pair<int, int>>> layout;
    Turn merged;
    merged.party = t1.party;
    for (const auto& [h, ins1] : p1.instruments) {
        Instrument joint;
        auto& lay = layout[h];
        for (size_t i = 0; i < ins1.ops.size(); ++i) {
            History child = h;
            child.push_back(static_cast<int>(i));
            const Instrument& ins2 = p2.instruments.at(child);
            for (size_t j = 0; j < ins2.ops.size(); ++j) {
                joint.ops.push_back(ins2.ops[j] * ins1.ops[i]);
                lay.emplace_back(static_cast<int>(i), static_cast<int>(j));
            }
        }
        merged.instruments[h] = std::move(joint);
    }

    LoccProtocol out;
    out.resource = padded.resource;
    out.res_dim_a = padded.res_dim_a;
    out.res_dim_b = padded.res_dim_b;
    for (int j = 0; j < k; ++j) out.turns.push_back(padded.turns[static_cast<size_t>(j)]);
    out.turns.push_back(std::move(merged));
    for (int j = k + 2; j < padded.n_turns(); ++j) {
        const Turn& t = padded.turns[static_cast<size_t>(j)];
        Turn relabeled;
        relabeled.party = t.party;
        relabeled.identity_fill = t.identity_fill;
        for (const auto& [h, ins] : t.instruments) {
            History h2(h.begin(), h.begin() + k);
            const auto& lay = layout.at(h2);
            const std::pair<int, int> key{h[static_cast<size_t>(k)], h[static_cast<size_t>(k + 1)]};
            const auto it = std::find(lay.begin(), lay.end(), key);
            if (it == lay.end())
                throw ProtocolStructureError("merge_adjacent_turns: inconsistent downstream history");
            History nh = h2;
            nh.push_back(static_cast<int>(it - lay.begin()));
            nh.insert(nh.end(), h.begin() + k + 2, h.end());
            relabeled.instruments[std::move(nh)] = ins;
        }
        out.turns.push_back(std::move(relabeled));
    }
    return out;
}

LoccProtocol swap_parties(const LoccProtocol& p) {
    LoccProtocol out = p;
    out.res_dim_a = p.res_dim_b;
    out.res_dim_b = p.res_dim_a;
    for (auto& t : out.turns) t.party = other(t.party);
    // Swap the resource's two sides.
    const auto& amps = p.resource.state.amplitudes;
    std::vector<cplx> swapped(amps.size());
    for (int a = 0; a < p.resource.state.dim_a; ++a)
        for (int b = 0; b < p.resource.state.dim_b; ++b)
            swapped[static_cast<size_t>(b * p.resource.state.dim_a + a)] =
                amps[static_cast<size_t>(a * p.resource.state.dim_b + b)];
    out.resource.state = PureState(std::move(swapped), p.resource.state.dim_b, p.resource.state.dim_a);
    std::swap(out.resource.local_a, out.resource.local_b);
    return out;
}

LoccProtocol canonicalize_resource_frame(const LoccProtocol& p, const Tolerance& tol) {
    ResourceState canon = canonical_resource(p.resource.state, tol);
    LoccProtocol out = p;
    out.res_dim_a = 2;
    out.res_dim_b = 2;
    out.resource = ResourceState::canonical(canon.mu);

    // The dressings map the canonical frame to the lab frame, so each party's
    // first instrument absorbs its dressing on the resource register.
    auto fold = [&](Party party, const Mat& local, int res_dim) {
        Mat dress(res_dim, 2);
        for (int r = 0; r < res_dim; ++r)
            for (int c = 0; c < 2; ++c) dress(r, c) = local(r, c);
        const Mat lift = kron(Mat::identity(2), dress);  // (2*res_dim) x 4
        for (auto& t : out.turns) {
            if (t.party != party) continue;
            for (auto& [h, ins] : t.instruments)
                for (auto& op : ins.ops) op = op * lift;
            return true;
        }
        return false;
    };
    const bool a_done = fold(Party::Alice, canon.local_a, p.res_dim_a);
    const bool b_done = fold(Party::Bob, canon.local_b, p.res_dim_b);

    // A party that never acts still needs its dressing applied somewhere;
    // give it a trailing deterministic turn.
    auto append_dressing_turn = [&](Party party, const Mat& local, int res_dim) {
        Mat dress(res_dim, 2);
        for (int r = 0; r < res_dim; ++r)
            for (int c = 0; c < 2; ++c) dress(r, c) = local(r, c);
        Turn t;
        t.party = party;
        LoccProtocol padded = pad_to_uniform_depth(out);
        for (const auto& br : accumulated_operators(padded)) {
            Instrument ins;
            ins.ops.push_back(kron(Mat::identity(2), dress));
            t.instruments[br.outcomes] = std::move(ins);
        }
        out.turns.push_back(std::move(t));
    };
    if (!a_done) append_dressing_turn(Party::Alice, canon.local_a, p.res_dim_a);
    if (!b_done) append_dressing_turn(Party::Bob, canon.local_b, p.res_dim_b);
    return out;
}

}  // namespace locclab
