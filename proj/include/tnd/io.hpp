#pragma once

#include "tnd/dataset.hpp"
#include "tnd/imps.hpp"
#include "tnd/runtime.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace tnd {

using json = nlohmann::ordered_json;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a sibling temporary and renames it over the target.
inline void write_atomic(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const auto tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out << text;
        if (!out) throw IoError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, p);
}

inline json read_json(const std::filesystem::path& p) {
    try {
        return json::parse(read_text(p));
    } catch (const json::exception& e) {
        throw IoError(p.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_atomic(p, j.dump(2) + "\n"); }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ---------------------------------------------------------------------------
// Matrices: {"dims": [rows, cols], "data": row-major}

inline json matrix_json(const Mat& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"dims", {m.rows(), m.cols()}}, {"data", data}};
}

inline Mat matrix_from_json(const json& j) {
    const auto dims = j.at("dims").get<std::vector<Eigen::Index>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (dims.size() != 2 || static_cast<Eigen::Index>(data.size()) != dims[0] * dims[1])
        throw IoError("matrix: dims do not match data length");
    Mat m(dims[0], dims[1]);
    for (Eigen::Index i = 0; i < dims[0]; ++i)
        for (Eigen::Index j = 0; j < dims[1]; ++j) m(i, j) = data[static_cast<std::size_t>(i * dims[1] + j)];
    return m;
}

inline json vector_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec vector_from_json(const json& j) {
    const auto d = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(d.data(), static_cast<Eigen::Index>(d.size()));
}

// ---------------------------------------------------------------------------
// Shot blocks

inline json shot_block_json(const ShotBlock& b) {
    json shots = json::array();
    for (const auto& s : b.shots) shots.push_back(s.outcomes);
    return {{"L", b.L}, {"h", b.h}, {"basis", basis_name(b.basis)}, {"seed", b.seed}, {"shots", shots}, {"label", b.label}};
}

inline ShotBlock shot_block_from_json(const json& j) {
    ShotBlock b;
    b.L = j.at("L").get<int>();
    b.h = j.at("h").get<double>();
    b.basis = parse_basis(j.at("basis").get<std::string>());
    b.seed = j.at("seed").get<std::uint64_t>();
    b.label = j.at("label").get<int>();
    for (const auto& row : j.at("shots")) {
        ShotRecord s;
        s.basis = b.basis;
        s.label = b.label;
        s.h_source = b.h;
        s.outcomes = row.get<std::vector<int>>();
        if (static_cast<int>(s.outcomes.size()) != b.L) throw IoError("shot block: outcome string length differs from L");
        for (int mu : s.outcomes)
            if (mu != 0 && mu != 1) throw IoError("shot block: outcomes must be 0 or 1");
        b.shots.push_back(std::move(s));
    }
    return b;
}

inline std::string shot_block_filename(const ShotBlock& b) {
    std::ostringstream ss;
    ss << "shots_h" << b.h << "_" << basis_name(b.basis) << ".json";
    return ss.str();
}

/// One file per (h, basis) plus split.json holding the train/test indices
/// into the concatenation of the listed files.
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    json files = json::array();
    for (const auto& b : ds.blocks) {
        write_json(dir / shot_block_filename(b), shot_block_json(b));
        files.push_back(shot_block_filename(b));
    }
    json gs = json::array();
    for (const auto& g : ds.ground_states)
        gs.push_back({{"h", g.h}, {"energy", g.energy}, {"converged", g.converged}, {"sweeps", g.sweeps}, {"max_bond", g.max_bond}});
    write_json(dir / "split.json",
               {{"files", files}, {"ground_states", gs}, {"train", ds.train_index}, {"test", ds.test_index}});
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    const json split = read_json(dir / "split.json");
    Dataset ds;
    for (const auto& f : split.at("files")) ds.blocks.push_back(shot_block_from_json(read_json(dir / f.get<std::string>())));
    for (const auto& g : split.at("ground_states"))
        ds.ground_states.push_back({g.at("h").get<double>(), g.at("energy").get<double>(), g.at("converged").get<bool>(),
                                    g.at("sweeps").get<int>(), g.at("max_bond").get<int>()});
    ds.train_index = split.at("train").get<std::vector<std::size_t>>();
    ds.test_index = split.at("test").get<std::vector<std::size_t>>();
    std::size_t n = 0;
    for (const auto& b : ds.blocks) n += b.shots.size();
    for (const auto* idx : {&ds.train_index, &ds.test_index})
        for (std::size_t i : *idx)
            if (i >= n) throw IoError("split: index out of range");
    return ds;
}

inline std::vector<ProductSample> to_samples(const std::vector<ShotRecord>& shots) {
    std::vector<ProductSample> out;
    out.reserve(shots.size());
    for (const auto& s : shots) out.push_back(to_sample(s));
    return out;
}

// ---------------------------------------------------------------------------
// Discriminator tensors

inline json model_json(const DiscriminatorTensors& t, const json& metrics = json::object()) {
    return {{"chi", t.hyper.chi}, {"nb", t.hyper.nb},       {"L", t.hyper.L},          {"nc", t.hyper.nc},
            {"R", vector_json(t.R)},  {"G", matrix_json(t.G)}, {"D", matrix_json(t.D)}, {"C", matrix_json(t.C)},
            {"metrics", metrics}};
}

inline DiscriminatorTensors model_from_json(const json& j) {
    DiscriminatorTensors t;
    t.hyper = {j.at("chi").get<int>(), j.at("L").get<int>(), j.at("nb").get<int>(), j.at("nc").get<int>()};
    t.R = vector_from_json(j.at("R"));
    t.G = matrix_from_json(j.at("G"));
    t.D = matrix_from_json(j.at("D"));
    t.C = matrix_from_json(j.at("C"));
    t.validate();
    return t;
}

// ---------------------------------------------------------------------------
// Circuits

inline json circuit_json(const ParamCircuit& c, const std::string& role, double tol_achieved) {
    json gates = json::array();
    for (const auto& g : c.gates) {
        if (g.kind == Gate::Kind::Ry)
            gates.push_back({{"ry", {{"q", g.a}, {"slot", g.b}}}});
        else
            gates.push_back({{"cnot", {{"c", g.a}, {"t", g.b}}}});
    }
    return {{"n_qubits", c.n_qubits}, {"gates", gates}, {"params", vector_json(c.params)}, {"role", role},
            {"tol_achieved", tol_achieved}};
}

inline ParamCircuit circuit_from_json(const json& j) {
    ParamCircuit c;
    c.n_qubits = j.at("n_qubits").get<int>();
    for (const auto& g : j.at("gates")) {
        if (g.contains("ry"))
            c.gates.push_back(Gate::ry(g["ry"].at("q").get<int>(), g["ry"].at("slot").get<int>()));
        else if (g.contains("cnot"))
            c.gates.push_back(Gate::cnot(g["cnot"].at("c").get<int>(), g["cnot"].at("t").get<int>()));
        else
            throw IoError("circuit: unknown gate");
    }
    c.params = vector_from_json(j.at("params"));
    c.validate();
    return c;
}

/// Compiled model: the four circuit files plus one D angle vector per site.
inline json compiled_model_json(const CompiledModel& m, const std::map<Role, double>& tol = {}) {
    auto t = [&](Role r) { return tol.count(r) ? tol.at(r) : 0.0; };
    json th = json::array();
    for (const auto& v : m.theta_D) th.push_back(vector_json(v));
    return {{"chi", m.hyper.chi},
            {"nb", m.hyper.nb},
            {"L", m.hyper.L},
            {"nc", m.hyper.nc},
            {"circuits",
             {{"R", circuit_json(m.R, "R", t(Role::R))},
              {"G", circuit_json(m.G, "G", t(Role::G))},
              {"D", circuit_json(m.D, "D", t(Role::D))},
              {"C", circuit_json(m.C, "C", t(Role::C))}}},
            {"theta_D", th}};
}

inline CompiledModel compiled_model_from_json(const json& j) {
    CompiledModel m;
    m.hyper = {j.at("chi").get<int>(), j.at("L").get<int>(), j.at("nb").get<int>(), j.at("nc").get<int>()};
    const auto& c = j.at("circuits");
    m.R = circuit_from_json(c.at("R"));
    m.G = circuit_from_json(c.at("G"));
    m.D = circuit_from_json(c.at("D"));
    m.C = circuit_from_json(c.at("C"));
    for (const auto& v : j.at("theta_D")) m.theta_D.push_back(vector_from_json(v));
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// iMPS: A as a row-major (chi, 2, chi) array

inline json imps_json(const IMPSModel& m) {
    json data = json::array();
    for (int a = 0; a < m.chi; ++a)
        for (int i = 0; i < kPhys; ++i)
            for (int b = 0; b < m.chi; ++b) data.push_back(m.A[static_cast<std::size_t>(i)](a, b));
    return {{"chi", m.chi},
            {"h", m.h_source},
            {"A", {{"dims", {m.chi, kPhys, m.chi}}, {"data", data}}},
            {"V", vector_json(m.V)},
            {"nb_prime", m.nb_prime},
            {"e0", m.e0}};
}

inline IMPSModel imps_from_json(const json& j) {
    IMPSModel m;
    m.chi = j.at("chi").get<int>();
    m.h_source = j.at("h").get<double>();
    m.nb_prime = j.at("nb_prime").get<int>();
    m.e0 = j.value("e0", 0.0);
    const auto dims = j.at("A").at("dims").get<std::vector<int>>();
    const auto data = j.at("A").at("data").get<std::vector<double>>();
    if (dims != std::vector<int>{m.chi, kPhys, m.chi} || data.size() != static_cast<std::size_t>(2 * m.chi * m.chi))
        throw IoError("imps: A dims must be (chi, 2, chi)");
    for (int i = 0; i < kPhys; ++i) m.A[static_cast<std::size_t>(i)] = Mat(m.chi, m.chi);
    std::size_t k = 0;
    for (int a = 0; a < m.chi; ++a)
        for (int i = 0; i < kPhys; ++i)
            for (int b = 0; b < m.chi; ++b) m.A[static_cast<std::size_t>(i)](a, b) = data[k++];
    m.V = vector_from_json(j.at("V"));
    if (m.V.size() != m.chi) throw IoError("imps: V length must equal chi");
    if (left_canonical_residual(m.A) > 1e-8) throw IoError("imps: A is not left-canonical");
    return m;
}

}  // namespace tnd
