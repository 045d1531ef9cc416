#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace effope {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Independent child seed for replication / episode `index` under `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/**
 * Counter-based stream: draw k is mix64(key + k * golden) with key derived from
 * (seed, stream). Any substream can be materialized without touching the
 * others, so parallel generation is independent of scheduling.
 */
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double exponential();
    /// Index drawn from nonnegative weights summing to one (linear scan of the cumulative sum).
    int categorical(const double* probs, int n);
    int categorical(const Eigen::VectorXd& probs);
    /// Uniform integer in [0, n).
    int below(int n);

    [[nodiscard]] std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Flat Dirichlet(1, ..., 1) draw of length n.
Eigen::VectorXd dirichlet_uniform(RngStream& rng, int n);

} // namespace effope
