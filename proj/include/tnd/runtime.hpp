#pragma once

#include "tnd/compiler.hpp"
#include "tnd/imps.hpp"

#include <map>

namespace tnd {

// ---------------------------------------------------------------------------
// Compiled model
//
// Every channel acts on the bond register through Kraus blocks of the dense
// circuit unitaries. With the physical qubit as the most significant index,
// block (p, i) of a (2 chi) x (2 chi) unitary is rows [p chi, (p+1) chi) and
// columns [i chi, (i+1) chi).

struct CompiledModel {
    ParamCircuit R, G, D, C;
    /// one parameter vector per conditioning site, all for the circuit shape D
    std::vector<Vec> theta_D;
    DiscriminatorHyper hyper;

    void validate() const {
        const int nb = log2_exact(hyper.chi);
        require(R.n_qubits == nb && G.n_qubits == nb + 1 && D.n_qubits == nb + 1 && C.n_qubits == nb + 1,
                "compiled model: register sizes do not match chi");
        require(static_cast<int>(theta_D.size()) == hyper.L, "compiled model: need one D parameter slice per site");
        for (const auto* c : {&R, &G, &D, &C}) c->validate();
        for (const auto& th : theta_D) require(th.size() == D.params.size(), "compiled model: D slice length mismatch");
    }

    Eigen::Index n_params() const {
        return R.params.size() + G.params.size() + C.params.size() + hyper.L * D.params.size();
    }

    /// theta_R, theta_G, theta_D per site, theta_C.
    Vec flat() const {
        Vec out(n_params());
        Eigen::Index k = 0;
        auto put = [&](const Vec& v) {
            out.segment(k, v.size()) = v;
            k += v.size();
        };
        put(R.params);
        put(G.params);
        for (const auto& th : theta_D) put(th);
        put(C.params);
        return out;
    }

    void set_flat(const Vec& v) {
        require(v.size() == n_params(), "compiled model: parameter vector length mismatch");
        Eigen::Index k = 0;
        auto take = [&](Vec& dst) {
            dst = v.segment(k, dst.size());
            k += dst.size();
        };
        take(R.params);
        take(G.params);
        for (auto& th : theta_D) take(th);
        take(C.params);
    }
};

struct ModelCompilation {
    CompiledModel model;
    std::map<Role, CompileResult> roles;
};

/// Compiles the four embeddings; every conditioning site starts from the same
/// compiled D angles.
inline ModelCompilation compile_model(const DiscriminatorTensors& t, const CompileConfig& cfg = {}) {
    t.validate();
    ModelCompilation out;
    for (Role role : {Role::R, Role::G, Role::D, Role::C}) {
        CompileConfig rc = cfg;
        rc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(role));
        out.roles[role] = greedy_compile(embed_isometry(t, role), rc);
    }
    auto& m = out.model;
    m.R = out.roles[Role::R].circuit;
    m.G = out.roles[Role::G].circuit;
    m.D = out.roles[Role::D].circuit;
    m.C = out.roles[Role::C].circuit;
    m.theta_D.assign(static_cast<std::size_t>(t.hyper.L), m.D.params);
    m.hyper = t.hyper;
    return out;
}

/// Dense unitaries of a compiled model.
struct ModelUnitaries {
    Mat UR, UG, UC;
    std::vector<Mat> UD;

    explicit ModelUnitaries(const CompiledModel& m)
        : UR(circuit_unitary(m.R)), UG(circuit_unitary(m.G)), UC(circuit_unitary(m.C)) {
        for (const auto& th : m.theta_D) UD.push_back(circuit_unitary(m.D, th));
    }
};

/// Largest trace deviation and most negative eigenvalue seen over channel
/// applications; filled only when requested.
struct ChannelAudit {
    double max_trace_error = 0.0;
    double min_eigenvalue = 0.0;

    void record(const Mat& rho) {
        max_trace_error = std::max(max_trace_error, std::abs(rho.trace() - 1.0));
        Eigen::SelfAdjointEigenSolver<Mat> es(sym(rho), Eigen::EigenvaluesOnly);
        min_eigenvalue = std::min(min_eigenvalue, es.eigenvalues().minCoeff());
    }
};

namespace detail {

inline void check_trace(const Mat& rho, const char* where) {
    const double err = std::abs(rho.trace() - 1.0);
    if (!(err <= 1e-8)) throw ChannelIntegrity(std::string(where) + ": trace deviates from 1 by " + std::to_string(err));
}

inline Mat block(const Mat& U, Eigen::Index chi, int p, int i) { return U.block(p * chi, i * chi, chi, chi); }

/// Burn-in channel with the physical qubit reset to |0> and traced out; the
/// returned history holds the state before each application and the result.
inline std::vector<Mat> burn_in_history(const Mat& UR, const Mat& UG, Eigen::Index chi, int nb, ChannelAudit* audit) {
    std::vector<Mat> hist{UR.col(0) * UR.col(0).transpose()};
    const Mat K0 = block(UG, chi, 0, 0), K1 = block(UG, chi, 1, 0);
    for (int n = 0; n < nb; ++n) {
        const Mat& V = hist.back();
        hist.push_back(K0 * V * K0.transpose() + K1 * V * K1.transpose());
        check_trace(hist.back(), "burn-in");
        if (audit) audit->record(hist.back());
    }
    return hist;
}

/// Conditioning Kraus operator for output p of the physical qubit.
inline Mat conditioning_kraus(const Mat& UD, Eigen::Index chi, int p, const Eigen::Vector2d& x) {
    return x(0) * block(UD, chi, p, 0) + x(1) * block(UD, chi, p, 1);
}

/// Class-register probabilities from the bond state. The class occupies the
/// top log2(nc) qubits of the readout unitary; the rest is traced out, or
/// projected onto |0> when `postselect` is set.
inline Vec readout(const Mat& UC, const Mat& W, int nc, bool postselect) {
    const Eigen::Index chi = W.rows(), stride = 2 * chi / nc;
    const Mat M = UC.leftCols(chi);
    Vec rho = Vec::Zero(nc);
    for (int l = 0; l < nc; ++l)
        for (Eigen::Index g = 0; g < (postselect ? 1 : stride); ++g) {
            const auto r = M.row(l * stride + g);
            rho(l) += r * W * r.transpose();
        }
    return rho;
}

}  // namespace detail

/// Bond state after conditioning on one product sample, starting from `prior`.
inline Mat condition_product(const ModelUnitaries& u, const Mat& prior, const ProductSample& s, bool postselect,
                             ChannelAudit* audit = nullptr) {
    const Eigen::Index chi = prior.rows();
    const int L = static_cast<int>(s.x.size());
    require(static_cast<int>(u.UD.size()) == L, "runtime: sample length does not match L");
    Mat W = prior;
    for (int j = L - 1; j >= 0; --j) {
        const auto& x = s.x[static_cast<std::size_t>(j)];
        Mat next = Mat::Zero(chi, chi);
        for (int p = 0; p < (postselect ? 1 : kPhys); ++p) {
            const Mat K = detail::conditioning_kraus(u.UD[static_cast<std::size_t>(j)], chi, p, x);
            next += K * W * K.transpose();
        }
        W = std::move(next);
        if (!postselect) {
            detail::check_trace(W, "conditioning");
            if (audit) audit->record(W);
        }
    }
    return W;
}

/// Class distribution for one product sample. Without postselection the
/// circuit is a channel and the distribution is normalized by construction;
/// with postselection it is renormalized as the tensor-level model is.
inline ClassDistribution infer_product(const CompiledModel& m, const ProductSample& s, bool postselect = false,
                                       ChannelAudit* audit = nullptr) {
    const ModelUnitaries u(m);
    const Eigen::Index chi = m.hyper.chi;
    const Mat prior = detail::burn_in_history(u.UR, u.UG, chi, m.hyper.nb, audit).back();
    const Mat W = condition_product(u, prior, s, postselect, audit);
    Vec rho = detail::readout(u.UC, W, m.hyper.nc, postselect);
    if (postselect) {
        if (!(rho.sum() >= 1e-14)) throw DegenerateReadout(0);
        return {rho / rho.sum(), true};
    }
    detail::check_trace(Mat(rho.asDiagonal()), "readout");
    return {rho, true};
}

// ---------------------------------------------------------------------------
// Cost without postselection

struct RegularizedCost {
    double lambda = 0.9;
    double eta = 2.0;
};

namespace detail {

/// Gradient of tr(Ubar^T U(theta)) with respect to the circuit angles.
inline Vec circuit_param_gradient(const ParamCircuit& c, const Vec& theta, const Mat& Ubar) {
    const int n = c.n_qubits;
    const Eigen::Index dim = Eigen::Index{1} << n;
    std::vector<Mat> states;
    states.reserve(c.gates.size());
    Mat phi = Mat::Identity(dim, dim);
    for (const auto& g : c.gates) {
        states.push_back(phi);
        apply_gate(phi, n, g, g.kind == Gate::Kind::Ry ? theta(g.b) : 0.0);
    }
    Vec grad = Vec::Zero(theta.size());
    Mat lambda = Ubar;
    for (std::size_t j = c.gates.size(); j-- > 0;) {
        const Gate& g = c.gates[j];
        const double th = g.kind == Gate::Kind::Ry ? theta(g.b) : 0.0;
        if (g.kind == Gate::Kind::Ry) grad(g.b) = ry_derivative_overlap(lambda, states[j], n, g.a, th);
        apply_gate(lambda, n, g, th, true);
    }
    return grad;
}

/// Most probable wrong class, ties toward the lower index.
inline int strongest_wrong(const Vec& rho, int label) {
    int best = -1;
    for (int l = 0; l < rho.size(); ++l)
        if (l != label && (best < 0 || rho(l) > rho(best))) best = l;
    return best;
}

struct UnitaryGrads {
    Mat UR, UG, UC;
    std::vector<Mat> UD;
};

}  // namespace detail

/// Per-sample max(rho_wrong - rho_label + lambda, 0)^eta.
inline double regularized_sample_cost(const Vec& rho, int label, const RegularizedCost& rc) {
    const double z = rho(detail::strongest_wrong(rho, label)) - rho(label) + rc.lambda;
    return z > 0 ? std::pow(z, rc.eta) : 0.0;
}

/// Batch mean of the regularized cost for the circuit run as a channel, and
/// optionally its gradient with respect to the flat parameter vector.
inline double cost_no_postselection(const CompiledModel& m, const std::vector<ProductSample>& batch,
                                    const RegularizedCost& rc = {}, Vec* grad = nullptr, ChannelAudit* audit = nullptr) {
    require(!batch.empty(), "cost_no_postselection: empty batch");
    require(rc.lambda > 0 && rc.lambda <= 1 && rc.eta > 0, "cost_no_postselection: need lambda in (0,1] and eta > 0");
    const ModelUnitaries u(m);
    const Eigen::Index chi = m.hyper.chi;
    const int L = m.hyper.L, nc = m.hyper.nc;
    const Eigen::Index stride = 2 * chi / nc;
    const auto hist = detail::burn_in_history(u.UR, u.UG, chi, m.hyper.nb, audit);
    const Mat& prior = hist.back();
    const Mat M = u.UC.leftCols(chi);

    struct Partial {
        double cost = 0.0;
        Mat prior_bar, UC_bar;
        std::vector<Mat> UD_bar;
        ChannelAudit audit;
    };
    constexpr std::size_t chunk = 64;
    std::vector<Partial> parts((batch.size() + chunk - 1) / chunk);
    parallel_chunks(batch.size(), chunk, [&](std::size_t ci, std::size_t b, std::size_t e) {
        Partial& p = parts[ci];
        if (grad) {
            p.prior_bar = Mat::Zero(chi, chi);
            p.UC_bar = Mat::Zero(2 * chi, 2 * chi);
            p.UD_bar.assign(static_cast<std::size_t>(L), Mat::Zero(2 * chi, 2 * chi));
        }
        std::vector<Mat> W(static_cast<std::size_t>(L + 1));
        for (std::size_t mi = b; mi < e; ++mi) {
            const auto& s = batch[mi];
            require(static_cast<int>(s.x.size()) == L, "cost_no_postselection: sample length does not match L");
            require(s.label >= 0 && s.label < nc, "cost_no_postselection: label out of range");
            W[static_cast<std::size_t>(L)] = prior;
            for (int j = L - 1; j >= 0; --j) {
                const auto& UD = u.UD[static_cast<std::size_t>(j)];
                const auto& x = s.x[static_cast<std::size_t>(j)];
                Mat next = Mat::Zero(chi, chi);
                for (int q = 0; q < kPhys; ++q) {
                    const Mat K = detail::conditioning_kraus(UD, chi, q, x);
                    next += K * W[static_cast<std::size_t>(j + 1)] * K.transpose();
                }
                detail::check_trace(next, "conditioning");
                if (audit) p.audit.record(next);
                W[static_cast<std::size_t>(j)] = std::move(next);
            }
            const Vec rho = detail::readout(u.UC, W[0], nc, false);
            if (!(std::abs(rho.sum() - 1.0) <= 1e-8)) throw ChannelIntegrity("readout: class probabilities do not sum to 1");
            const int wrong = detail::strongest_wrong(rho, s.label);
            const double z = rho(wrong) - rho(s.label) + rc.lambda;
            if (z <= 0) continue;
            p.cost += std::pow(z, rc.eta);
            if (!grad) continue;

            const double dz = rc.eta * std::pow(z, rc.eta - 1.0);
            Vec a = Vec::Zero(2 * chi);
            a.segment(wrong * stride, stride).setConstant(dz);
            a.segment(s.label * stride, stride).setConstant(-dz);
            p.UC_bar.leftCols(chi) += 2.0 * a.asDiagonal() * M * W[0];
            Mat Wbar = M.transpose() * a.asDiagonal() * M;
            for (int j = 0; j < L; ++j) {
                const auto& UD = u.UD[static_cast<std::size_t>(j)];
                const auto& x = s.x[static_cast<std::size_t>(j)];
                Mat& Ubar = p.UD_bar[static_cast<std::size_t>(j)];
                Mat prev = Mat::Zero(chi, chi);
                for (int q = 0; q < kPhys; ++q) {
                    const Mat K = detail::conditioning_kraus(UD, chi, q, x);
                    const Mat Kbar = 2.0 * Wbar * K * W[static_cast<std::size_t>(j + 1)];
                    Ubar.block(q * chi, 0, chi, chi) += x(0) * Kbar;
                    Ubar.block(q * chi, chi, chi, chi) += x(1) * Kbar;
                    prev += K.transpose() * Wbar * K;
                }
                Wbar = std::move(prev);
            }
            p.prior_bar += Wbar;
        }
    });
    double cost = 0.0;
    for (const auto& p : parts) {
        cost += p.cost;
        if (audit) {
            audit->max_trace_error = std::max(audit->max_trace_error, p.audit.max_trace_error);
            audit->min_eigenvalue = std::min(audit->min_eigenvalue, p.audit.min_eigenvalue);
        }
    }
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    if (!grad) return cost * inv_m;

    Mat Vbar = Mat::Zero(chi, chi), UC_bar = Mat::Zero(2 * chi, 2 * chi);
    std::vector<Mat> UD_bar(static_cast<std::size_t>(L), Mat::Zero(2 * chi, 2 * chi));
    for (const auto& p : parts) {
        Vbar += p.prior_bar;
        UC_bar += p.UC_bar;
        for (int j = 0; j < L; ++j) UD_bar[static_cast<std::size_t>(j)] += p.UD_bar[static_cast<std::size_t>(j)];
    }
    Vbar *= inv_m;
    UC_bar *= inv_m;
    for (auto& b : UD_bar) b *= inv_m;

    Mat UG_bar = Mat::Zero(2 * chi, 2 * chi);
    const Mat K0 = detail::block(u.UG, chi, 0, 0), K1 = detail::block(u.UG, chi, 1, 0);
    for (int k = m.hyper.nb; k >= 1; --k) {
        const Mat& prev = hist[static_cast<std::size_t>(k - 1)];
        UG_bar.block(0, 0, chi, chi) += 2.0 * Vbar * K0 * prev;
        UG_bar.block(chi, 0, chi, chi) += 2.0 * Vbar * K1 * prev;
        Vbar = K0.transpose() * Vbar * K0 + K1.transpose() * Vbar * K1;
    }
    Mat UR_bar = Mat::Zero(chi, chi);
    UR_bar.col(0) = 2.0 * Vbar * u.UR.col(0);

    Vec g(m.n_params());
    Eigen::Index k = 0;
    auto put = [&](const Vec& v) {
        g.segment(k, v.size()) = v;
        k += v.size();
    };
    put(detail::circuit_param_gradient(m.R, m.R.params, UR_bar));
    put(detail::circuit_param_gradient(m.G, m.G.params, UG_bar));
    for (int j = 0; j < L; ++j)
        put(detail::circuit_param_gradient(m.D, m.theta_D[static_cast<std::size_t>(j)], UD_bar[static_cast<std::size_t>(j)]));
    put(detail::circuit_param_gradient(m.C, m.C.params, UC_bar));
    *grad = g;
    return cost * inv_m;
}

/// Class-averaged F1 of the circuit run with or without postselection.
inline F1Report evaluate_compiled_f1(const CompiledModel& m, const std::vector<ProductSample>& data, bool postselect = false) {
    const ModelUnitaries u(m);
    const Eigen::Index chi = m.hyper.chi;
    const Mat prior = detail::burn_in_history(u.UR, u.UG, chi, m.hyper.nb, nullptr).back();
    std::vector<int> truth(data.size()), pred(data.size());
    parallel_for(data.size(), [&](std::size_t k) {
        const Mat W = condition_product(u, prior, data[k], postselect);
        Vec rho = detail::readout(u.UC, W, m.hyper.nc, postselect);
        truth[k] = data[k].label;
        pred[k] = ClassDistribution{rho, postselect}.label();
    });
    return f1_scores(confusion_matrix(truth, pred, m.hyper.nc));
}

/// Mean probability of the correct label in one circuit run.
inline double mean_success_probability(const CompiledModel& m, const std::vector<ProductSample>& data) {
    const ModelUnitaries u(m);
    const Mat prior = detail::burn_in_history(u.UR, u.UG, m.hyper.chi, m.hyper.nb, nullptr).back();
    std::vector<double> p(data.size());
    parallel_for(data.size(), [&](std::size_t k) {
        const Mat W = condition_product(u, prior, data[k], false);
        p[k] = detail::readout(u.UC, W, m.hyper.nc, false)(data[k].label);
    });
    double s = 0.0;
    for (double v : p) s += v;
    return s / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Fine-tuning

struct FinetuneConfig {
    RegularizedCost cost;
    int epochs = 30;
    /// quasi-Newton iterations per epoch
    int iters_per_epoch = 20;
    int max_restarts = 3;
};

struct FinetuneResult {
    CompiledModel model;
    double cost_before = 0.0;
    double cost_after = 0.0;
    double f1_before = 0.0;
    double f1_after = 0.0;
    /// cost at the start of each epoch, then the final cost
    std::vector<double> epoch_costs;
    int restarts = 0;
};

/// L-BFGS on the channel cost. A failed line search restarts from the best
/// parameters with half the initial step, at most `max_restarts` times.
inline FinetuneResult finetune_parameters(const CompiledModel& start, const std::vector<ProductSample>& batch,
                                          const FinetuneConfig& cfg = {}) {
    start.validate();
    FinetuneResult out;
    out.model = start;
    CompiledModel work = start;
    ValueGrad fg = [&](const Vec& x, Vec& g) {
        work.set_flat(x);
        return cost_no_postselection(work, batch, cfg.cost, &g);
    };
    Vec x = start.flat();
    out.cost_before = cost_no_postselection(start, batch, cfg.cost);
    out.f1_before = evaluate_compiled_f1(start, batch).average;
    double f = out.cost_before;
    LbfgsConfig lc;
    lc.max_iters = cfg.iters_per_epoch;
    lc.grad_tol = 1e-10;
    lc.f_tol = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        out.epoch_costs.push_back(f);
        const auto r = lbfgs_minimize(fg, x, lc);
        if (r.f <= f) {
            x = r.x;
            f = r.f;
        }
        if (r.line_search_failed) {
            if (out.restarts >= cfg.max_restarts) break;
            ++out.restarts;
            lc.initial_step *= 0.5;
        }
        if (r.converged) break;
    }
    out.epoch_costs.push_back(f);
    out.model.set_flat(x);
    out.cost_after = f;
    out.f1_after = evaluate_compiled_f1(out.model, batch).average;
    return out;
}

// ---------------------------------------------------------------------------
// Entangled inference

/// Dense circuits preparing an iMPS test state: U_R' on its bond register and
/// U_G' on (physical, bond).
struct TestStateUnitaries {
    Mat UR, UG;
    int chi = 1;
    int nb_prime = 1;
};

/// Orthogonal matrix whose leading columns are the given orthonormal columns.
inline Mat complete_isometry(const Mat& Q) {
    Eigen::HouseholderQR<Mat> qr(Q);
    Mat U = qr.householderQ();
    U.leftCols(Q.cols()) = Q;
    return U;
}

/// Exact unitary embeddings of an iMPS, without compiling to gates.
inline TestStateUnitaries embed_imps_exact(const IMPSModel& model) {
    TestStateUnitaries t;
    t.chi = model.chi;
    t.nb_prime = model.nb_prime;
    t.UR = complete_isometry(model.V.normalized());
    t.UG = complete_isometry(stack_rows(model.A));
    return t;
}

/// Test-state unitaries from compiled circuits for the R and G embeddings.
inline TestStateUnitaries test_state_from_circuits(const ParamCircuit& R, const ParamCircuit& G, int chi, int nb_prime) {
    return {circuit_unitary(R), circuit_unitary(G), chi, nb_prime};
}

struct RuntimeLimits {
    int max_qubits = 14;
};

/// Runs the joint circuit: independent burn-ins of both bond registers, then
/// L rounds in which U_G' writes one qubit that U_D reads before the physical
/// qubit is reset; the test bond is discarded before readout.
inline ClassDistribution infer_entangled(const CompiledModel& m, const TestStateUnitaries& test,
                                         const RuntimeLimits& limits = {}, ChannelAudit* audit = nullptr) {
    m.validate();
    require(is_power_of_two(test.chi) && test.nb_prime >= 1, "infer_entangled: invalid test state");
    const Eigen::Index chi = m.hyper.chi, ct = test.chi;
    require(test.UR.rows() == ct && test.UR.cols() == ct && test.UG.rows() == 2 * ct && test.UG.cols() == 2 * ct,
            "infer_entangled: test unitaries do not match chi_i");
    const int qubits = log2_exact(chi) + log2_exact(ct) + 1;
    if (qubits > limits.max_qubits)
        throw ResourceLimit("infer_entangled: joint register of " + std::to_string(qubits) + " qubits exceeds cap of " +
                            std::to_string(limits.max_qubits));
    const ModelUnitaries u(m);
    const Mat prior = detail::burn_in_history(u.UR, u.UG, chi, m.hyper.nb, audit).back();
    const Mat test_prior = detail::burn_in_history(test.UR, test.UG, ct, test.nb_prime, audit).back();

    // joint index a * ct + b for discriminator bond a, test bond b
    Mat W = kron(prior, test_prior);
    const Mat T0 = detail::block(test.UG, ct, 0, 0), T1 = detail::block(test.UG, ct, 1, 0);
    for (int step = 1; step <= m.hyper.L; ++step) {
        const Mat& UD = u.UD[static_cast<std::size_t>(m.hyper.L - step)];
        Mat next = Mat::Zero(W.rows(), W.cols());
        for (int p = 0; p < kPhys; ++p) {
            const Mat K = kron(detail::block(UD, chi, p, 0), T0) + kron(detail::block(UD, chi, p, 1), T1);
            next += K * W * K.transpose();
        }
        W = std::move(next);
        detail::check_trace(W, "entangled conditioning");
        if (audit) audit->record(W);
    }
    Mat disc = Mat::Zero(chi, chi);
    for (Eigen::Index a = 0; a < chi; ++a)
        for (Eigen::Index b = 0; b < chi; ++b)
            for (Eigen::Index k = 0; k < ct; ++k) disc(a, b) += W(a * ct + k, b * ct + k);
    const Vec rho = detail::readout(u.UC, disc, m.hyper.nc, false);
    if (!(std::abs(rho.sum() - 1.0) <= 1e-8)) throw ChannelIntegrity("entangled readout: probabilities do not sum to 1");
    return {rho, true};
}

// ---------------------------------------------------------------------------
// Label sampling

inline std::vector<int> sample_label(const ClassDistribution& dist, int n_shots, std::uint64_t seed) {
    require(n_shots >= 0, "sample_label: negative shot count");
    require(std::abs(dist.diag.sum() - 1.0) < 1e-8 && dist.diag.minCoeff() >= -1e-12,
            "sample_label: distribution is not normalized");
    Rng rng(seed);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n_shots));
    for (int k = 0; k < n_shots; ++k) {
        const double u = rng.uniform();
        double acc = 0.0;
        int l = 0;
        for (; l < dist.diag.size() - 1; ++l) {
            acc += dist.diag(l);
            if (u < acc) break;
        }
        out.push_back(l);
    }
    return out;
}

}  // namespace tnd
