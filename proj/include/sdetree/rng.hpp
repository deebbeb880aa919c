#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace sdetree {

/// Deterministic random stream. mt19937_64 with explicit output mappings, so
/// two runs with the same seed produce identical draws (std distributions are
/// not guaranteed reproducible across standard libraries and are avoided).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform draw in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal draw (polar Marsaglia method).
    double gauss() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    Eigen::VectorXd gauss_vector(Eigen::Index n) {
        Eigen::VectorXd out(n);
        for (Eigen::Index i = 0; i < n; ++i) out(i) = gauss();
        return out;
    }

    Eigen::MatrixXd gauss_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd out(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = gauss();
        return out;
    }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        return engine_() % bound;
    }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sdetree
