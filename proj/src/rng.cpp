#include "effope/rng.hpp"

#include "effope/error.hpp"

#include <cmath>

namespace effope {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

} // namespace

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(mix64(seed + kGolden) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : key_(derive_seed(seed, stream)) {}

std::uint64_t RngStream::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::exponential() {
    return -std::log1p(-uniform());
}

int RngStream::categorical(const double* probs, int n) {
    if (n <= 0) {
        throw DimensionError("categorical: empty distribution");
    }
    const double u = uniform();
    double cum = 0.0;
    int last_positive = -1;
    for (int i = 0; i < n; ++i) {
        if (probs[i] > 0.0) {
            last_positive = i;
        }
        cum += probs[i];
        if (u < cum && probs[i] > 0.0) {
            return i;
        }
    }
    if (last_positive < 0) {
        throw ValidationError("categorical: all weights are zero");
    }
    // Rounding left the cumulative sum a hair below one.
    return last_positive;
}

int RngStream::categorical(const Eigen::VectorXd& probs) {
    return categorical(probs.data(), static_cast<int>(probs.size()));
}

int RngStream::below(int n) {
    if (n <= 0) {
        throw DimensionError("below: n must be positive");
    }
    return static_cast<int>(uniform() * n);
}

Eigen::VectorXd dirichlet_uniform(RngStream& rng, int n) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) {
        x(i) = rng.exponential();
    }
    return x / x.sum();
}

} // namespace effope
