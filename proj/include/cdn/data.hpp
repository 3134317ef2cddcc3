#pragma once

#include "cdn/matrix.hpp"
#include "cdn/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cdn {

/// In-memory dataset. Classification datasets carry integer labels in
/// [0, num_classes); regression datasets carry real targets (N x dim).
struct Dataset {
    Matrix inputs; // N x d
    std::vector<std::size_t> labels;
    Matrix targets;
    bool classification = false;
    std::size_t num_classes = 0;
    std::string source;
    std::string split_tag = "full";

    std::size_t size() const { return inputs.rows(); }
    std::size_t input_dim() const { return inputs.cols(); }
};

enum class ToyVariant { homoscedastic, heteroscedastic };

/// Cubic toy regression spec: y = x^3 + eps on x ~ U[lo, hi].
/// homoscedastic: n = 20, eps ~ N(0, 3^2) everywhere.
/// heteroscedastic: n = 100, eps ~ N(0, 3^2) for x >= 0, N(0, 15^2) otherwise.
/// noise_scale multiplies the noise standard deviation (0 gives y = x^3).
struct ToySpec {
    ToyVariant variant = ToyVariant::homoscedastic;
    std::size_t n = 0; // 0 = variant default (20 or 100)
    double lo = -4.0;
    double hi = 4.0;
    double noise_scale = 1.0;
    std::uint64_t seed = 0;
};

Dataset gen_toy(const ToySpec& spec);

/// Reads an IDX image/label file pair (gzip accepted transparently).
/// Images: big-endian magic 0x00000803, dims (N, rows, cols), one byte per
/// pixel, scaled to [0,1] by /255 and flattened to N x rows*cols.
/// Labels: magic 0x00000801, dim (N).
/// Malformed input raises DataError with the offending byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Deterministic shuffled split; fraction is the validation share.
/// The two halves are disjoint and exhaustive.
std::pair<Dataset, Dataset> split(const Dataset& d, double fraction, std::uint64_t seed);

/// Row subset in the given order.
Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx);

/// Epoch-shuffled minibatch index stream, deterministic per seed. The final
/// short batch of an epoch is kept.
class BatchStream {
public:
    BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed);

    /// Indices of the next minibatch; reshuffles when an epoch ends.
    std::vector<std::size_t> next();

    std::size_t batches_per_epoch() const;

private:
    std::size_t n_;
    std::size_t batch_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

} // namespace cdn
