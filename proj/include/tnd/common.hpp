#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tnd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Physical dimension of every site. Only qubits are supported.
inline constexpr int kPhys = 2;

/// Site tensor (chi_left, d, chi_right) stored as one chi_left x chi_right
/// matrix per physical index.
using SiteTensor = std::array<Mat, kPhys>;

// ---------------------------------------------------------------------------
// Errors

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

struct DegenerateTransfer : std::runtime_error {
    explicit DegenerateTransfer(double gap_)
        : std::runtime_error("degenerate transfer fixed point: spectral gap " + std::to_string(gap_)),
          gap(gap_) {}
    double gap;
};

struct DegenerateReadout : std::runtime_error {
    explicit DegenerateReadout(std::size_t sample_)
        : std::runtime_error("degenerate readout for sample " + std::to_string(sample_)), sample(sample_) {}
    std::size_t sample;
};

struct ChannelIntegrity : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RetractionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ResourceLimit : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BudgetExceeded : std::runtime_error {
    BudgetExceeded(const std::string& what, double best)
        : std::runtime_error(what + " (best distance " + std::to_string(best) + ")"), best_distance(best) {}
    double best_distance;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

inline bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

inline int log2_exact(long n) {
    require(is_power_of_two(n), "expected a power of two, got " + std::to_string(n));
    int k = 0;
    while ((1L << k) < n) ++k;
    return k;
}

// ---------------------------------------------------------------------------
// Random numbers
//
// xoshiro256** seeded through splitmix64. Doubles are built from the top 53
// bits so streams are bit-identical across standard libraries.

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t z = seed;
        for (auto& s : state_) s = splitmix(z);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (no cached second value).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

    Mat normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Mat m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    static std::uint64_t splitmix(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    std::array<std::uint64_t, 4> state_{};
};

/// Independent seed for substream k of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
    std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * (k + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// n x p matrix with orthonormal columns from the QR factor of a Gaussian
/// matrix, with diag(R) > 0.
inline Mat random_isometry(Rng& rng, Eigen::Index n, Eigen::Index p) {
    Mat g = rng.normal_matrix(n, p);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(n, p);
    Mat r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < p; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    return q;
}

// ---------------------------------------------------------------------------
// Deterministic parallel loops
//
// Work is cut into chunks whose boundaries depend only on the problem size, and
// partial results are combined in chunk order, so sums are bit-identical for
// any thread count.

inline unsigned thread_count() {
    if (const char* env = std::getenv("TND_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Calls body(chunk_index, begin, end) for each chunk of [0, n).
template <class Body>
void parallel_chunks(std::size_t n, std::size_t chunk, Body&& body) {
    if (n == 0) return;
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    const unsigned nthreads = std::min<std::size_t>(thread_count(), nchunks);
    auto run = [&](std::size_t c) { body(c, c * chunk, std::min(n, (c + 1) * chunk)); };
    if (nthreads <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) run(c);
        return;
    }
    // the exception from the lowest failing chunk is rethrown after the join
    std::vector<std::exception_ptr> errors(nchunks);
    {
        std::vector<std::jthread> pool;
        pool.reserve(nthreads);
        for (unsigned t = 0; t < nthreads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t c = t; c < nchunks; c += nthreads) {
                    try {
                        run(c);
                    } catch (...) {
                        errors[c] = std::current_exception();
                    }
                }
            });
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Calls body(i) for i in [0, n) across threads; no reduction.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    parallel_chunks(n, 1, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) body(i);
    });
}

inline double frob2(const Mat& m) { return m.squaredNorm(); }

inline Mat sym(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Kronecker product with the first factor as the most significant index.
inline Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

}  // namespace tnd
