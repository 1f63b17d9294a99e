#pragma once

#include "tnd/discriminator.hpp"

#include <string>

namespace tnd {

// ---------------------------------------------------------------------------
// CNOT + Ry circuits on real amplitudes
//
// Qubit q addresses bit (n - 1 - q) of a basis index, so qubit 0 is the most
// significant. In the discriminator registers qubit 0 is the physical qubit and
// qubits 1.. are the bond qubits, most significant first.

struct Gate {
    enum class Kind { Ry, Cnot };
    Kind kind = Kind::Ry;
    int a = 0;  // Ry: qubit; CNOT: control
    int b = 0;  // Ry: parameter slot; CNOT: target

    static Gate ry(int qubit, int slot) { return {Kind::Ry, qubit, slot}; }
    static Gate cnot(int control, int target) { return {Kind::Cnot, control, target}; }
    bool operator==(const Gate&) const = default;
};

struct ParamCircuit {
    int n_qubits = 0;
    std::vector<Gate> gates;
    Vec params;

    int cnot_count() const {
        int n = 0;
        for (const auto& g : gates) n += g.kind == Gate::Kind::Cnot;
        return n;
    }

    /// Appends Ry on `qubit` with a fresh parameter slot.
    void add_ry(int qubit, double theta = 0.0) {
        gates.push_back(Gate::ry(qubit, static_cast<int>(params.size())));
        params.conservativeResize(params.size() + 1);
        params(params.size() - 1) = theta;
    }

    void validate() const {
        require(n_qubits >= 0 && n_qubits <= 20, "circuit: unsupported qubit count");
        std::vector<int> uses(static_cast<std::size_t>(params.size()), 0);
        for (const auto& g : gates) {
            require(g.a >= 0 && g.a < n_qubits, "circuit: qubit index out of range");
            if (g.kind == Gate::Kind::Cnot) {
                require(g.b >= 0 && g.b < n_qubits && g.a != g.b, "circuit: invalid CNOT");
            } else {
                require(g.b >= 0 && g.b < params.size(), "circuit: parameter slot out of range");
                ++uses[static_cast<std::size_t>(g.b)];
            }
        }
        for (int u : uses) require(u == 1, "circuit: every parameter slot must be used exactly once");
    }

    /// Hash of the gate sequence, ignoring angles.
    std::uint64_t structure_hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&](std::uint64_t v) {
            for (int k = 0; k < 8; ++k) {
                h ^= (v >> (8 * k)) & 0xff;
                h *= 1099511628211ULL;
            }
        };
        mix(static_cast<std::uint64_t>(n_qubits));
        for (const auto& g : gates) {
            mix(g.kind == Gate::Kind::Cnot ? 1 : 2);
            mix(static_cast<std::uint64_t>(g.a));
            if (g.kind == Gate::Kind::Cnot) mix(static_cast<std::uint64_t>(g.b));
        }
        return h;
    }
};

inline Eigen::Matrix2d ry_matrix(double theta) {
    const double c = std::cos(theta / 2), s = std::sin(theta / 2);
    Eigen::Matrix2d m;
    m << c, -s, s, c;
    return m;
}

namespace detail {

inline Eigen::Index qubit_mask(int n, int q) { return Eigen::Index{1} << (n - 1 - q); }

/// M <- [[a, b], [c, d]] acting on qubit q, applied to the rows of M.
inline void apply_single(Mat& M, int n, int q, double a, double b, double c, double d) {
    const Eigen::Index mask = qubit_mask(n, q);
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        if (r & mask) continue;
        const Eigen::Index r1 = r | mask;
        for (Eigen::Index j = 0; j < M.cols(); ++j) {
            const double x0 = M(r, j), x1 = M(r1, j);
            M(r, j) = a * x0 + b * x1;
            M(r1, j) = c * x0 + d * x1;
        }
    }
}

inline void apply_cnot(Mat& M, int n, int control, int target) {
    const Eigen::Index cm = qubit_mask(n, control), tm = qubit_mask(n, target);
    for (Eigen::Index r = 0; r < M.rows(); ++r)
        if ((r & cm) && !(r & tm)) M.row(r).swap(M.row(r | tm));
}

/// M <- g M, or g^T M when `transpose` is set.
inline void apply_gate(Mat& M, int n, const Gate& g, double theta, bool transpose = false) {
    if (g.kind == Gate::Kind::Cnot) {
        apply_cnot(M, n, g.a, g.b);
        return;
    }
    const double c = std::cos(theta / 2), s = std::sin(theta / 2);
    if (transpose)
        apply_single(M, n, g.a, c, s, -s, c);
    else
        apply_single(M, n, g.a, c, -s, s, c);
}

/// tr(Lambda^T Ry'(theta) Phi) for Ry on qubit q.
inline double ry_derivative_overlap(const Mat& Lambda, const Mat& Phi, int n, int q, double theta) {
    const double c = 0.5 * std::cos(theta / 2), s = 0.5 * std::sin(theta / 2);
    const Eigen::Index mask = qubit_mask(n, q);
    double acc = 0.0;
    for (Eigen::Index r = 0; r < Phi.rows(); ++r) {
        if (r & mask) continue;
        const Eigen::Index r1 = r | mask;
        for (Eigen::Index j = 0; j < Phi.cols(); ++j) {
            const double p0 = Phi(r, j), p1 = Phi(r1, j);
            acc += Lambda(r, j) * (-s * p0 - c * p1) + Lambda(r1, j) * (c * p0 - s * p1);
        }
    }
    return acc;
}

}  // namespace detail

/// U(theta) M for a matrix M with 2^n rows.
inline Mat circuit_apply(const ParamCircuit& c, const Vec& theta, Mat M) {
    require(theta.size() == c.params.size(), "circuit: parameter vector length mismatch");
    require(M.rows() == (Eigen::Index{1} << c.n_qubits), "circuit: operand row count mismatch");
    for (const auto& g : c.gates) detail::apply_gate(M, c.n_qubits, g, g.kind == Gate::Kind::Ry ? theta(g.b) : 0.0);
    return M;
}

inline Mat circuit_unitary(const ParamCircuit& c, const Vec& theta) {
    const Eigen::Index dim = Eigen::Index{1} << c.n_qubits;
    return circuit_apply(c, theta, Mat::Identity(dim, dim));
}

inline Mat circuit_unitary(const ParamCircuit& c) { return circuit_unitary(c, c.params); }

/// Circuit for U^T = U^{-1}: gates reversed, angles negated.
inline ParamCircuit inverse(const ParamCircuit& c) {
    ParamCircuit out;
    out.n_qubits = c.n_qubits;
    out.gates.assign(c.gates.rbegin(), c.gates.rend());
    out.params = -c.params;
    return out;
}

// ---------------------------------------------------------------------------
// Unitary embeddings of the discriminator tensors

enum class Role { R, G, D, C };

inline std::string role_name(Role r) {
    switch (r) {
        case Role::R: return "R";
        case Role::G: return "G";
        case Role::D: return "D";
        case Role::C: return "C";
    }
    return "?";
}

inline Role parse_role(const std::string& s) {
    if (s == "R") return Role::R;
    if (s == "G") return Role::G;
    if (s == "D") return Role::D;
    if (s == "C") return Role::C;
    throw InvalidArgument("unknown role '" + s + "'");
}

/// The constrained columns of a unitary to be compiled. When `transposed` is
/// set the compiled circuit realizes U^T and the embedding is its inverse.
struct IsometryTarget {
    int n_qubits = 0;
    Mat target;
    std::vector<Eigen::Index> columns;
    bool transposed = false;
    Role role = Role::G;

    void validate() const {
        const Eigen::Index dim = Eigen::Index{1} << n_qubits;
        require(target.rows() == dim && target.cols() == static_cast<Eigen::Index>(columns.size()),
                "isometry target: shape mismatch");
        require(is_power_of_two(target.cols()), "isometry target: column count must be a power of two");
        for (auto c : columns) require(c >= 0 && c < dim, "isometry target: column index out of range");
        const Eigen::Index k = target.cols();
        require((target.transpose() * target - Mat::Identity(k, k)).norm() < 1e-10,
                "isometry target: columns are not orthonormal");
    }

    /// The constrained columns of a candidate circuit unitary.
    Mat restrict(const Mat& U) const {
        Mat out(U.rows(), static_cast<Eigen::Index>(columns.size()));
        for (std::size_t j = 0; j < columns.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = U.col(columns[j]);
        return out;
    }

    /// min over s in {+1, -1} of |s U|_cols - target|_F^2
    double distance(const Mat& U) const {
        const Mat r = restrict(U);
        return std::min((r - target).squaredNorm(), (r + target).squaredNorm());
    }
};

/// Constrained columns for one tensor. R: |0> -> R on the bond qubits. G:
/// physical input |0> gives G. D: U_D^T with physical input |0> gives the
/// stored D. C: U_C^T maps |l> on the top qubits to sum_a C_al |0, a>.
inline IsometryTarget embed_isometry(const DiscriminatorTensors& t, Role role) {
    const int chi = t.hyper.chi;
    require(chi >= 2, "embed_isometry: chi must be at least 2");
    require(t.invariant_residual() < 1e-8, "embed_isometry: tensors off their manifolds");
    const int nb = log2_exact(chi);
    IsometryTarget out;
    out.role = role;
    switch (role) {
        case Role::R:
            out.n_qubits = nb;
            out.target = t.R;
            out.columns = {0};
            break;
        case Role::G:
        case Role::D:
            out.n_qubits = nb + 1;
            out.target = role == Role::G ? t.G : t.D;
            for (Eigen::Index a = 0; a < chi; ++a) out.columns.push_back(a);
            out.transposed = role == Role::D;
            break;
        case Role::C: {
            const int nc = t.hyper.nc;
            out.n_qubits = nb + 1;
            out.target = Mat::Zero(2 * chi, nc);
            out.target.topRows(chi) = t.C;
            for (Eigen::Index l = 0; l < nc; ++l) out.columns.push_back(l * (2 * chi / nc));
            out.transposed = true;
            break;
        }
    }
    out.validate();
    return out;
}

/// Tensor entries realized by a full unitary under the embedding of `role`;
/// the inverse of embed_isometry for a unitary that meets its target exactly.
inline Mat tensor_from_unitary(const Mat& U, Role role, int chi, int nc = 2) {
    const Eigen::Index c = chi;
    switch (role) {
        case Role::R: return U.col(0);
        case Role::G: return U.leftCols(c);
        case Role::D: return U.transpose().leftCols(c);
        case Role::C: {
            Mat C(c, nc);
            for (Eigen::Index l = 0; l < nc; ++l) C.col(l) = U.row(l * (2 * c / nc)).head(c).transpose();
            return C;
        }
    }
    return {};
}

}  // namespace tnd
