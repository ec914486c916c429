#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "hamflow/types.hpp"

namespace hamflow {

/// Counter-based generator: the i-th output is a bijective mix of (key, i), so
/// a stream is fully determined by its seed and the number of draws taken.
/// `split` derives independent streams for workers without sharing state.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next_u64(); }

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    /// Index drawn from a discrete distribution given by non-negative weights.
    std::size_t categorical(const std::vector<double>& weights);

    Mat normal_matrix(Eigen::Index rows, Eigen::Index cols);
    Vec uniform_vector(Eigen::Index n, double lo, double hi);

    Rng split(std::uint64_t stream) const;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hamflow
