#pragma once

#include "cdn/rng.hpp"
#include "cdn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cdn::testing {

/// Central finite differences against reverse-mode gradients over every
/// entry of every given leaf (optionally subsampled). The loss function is
/// re-evaluated around the current parameter values; any stochastic parts
/// must be frozen by the caller (fixed noise seeds).
/// rel err := |ad - fd| / max(1, |ad|, |fd|).
struct GradCheck {
    double max_rel_err = 0.0;
    std::string worst;
};

GradCheck check_gradients(const std::function<Tensor()>& loss_fn,
                          const std::vector<std::pair<std::string, Tensor>>& params,
                          double h = 1e-5, std::size_t stride = 1);

/// IDX fixture writers (optionally gzip-compressed).
void write_idx_images(const std::string& path,
                      const std::vector<std::vector<std::uint8_t>>& images,
                      std::uint32_t rows, std::uint32_t cols, bool gzip = false);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels,
                      bool gzip = false);

/// Deterministic 28x28 ten-class glyph corpus in IDX format: shifted, noisy
/// renderings of digit-like strokes; `alphabet` selects a disjoint glyph set
/// (the out-of-distribution counterpart). Stands in for the real image
/// datasets when they are not on disk.
void make_synth_corpus(const std::string& images_path, const std::string& labels_path,
                       std::size_t n, std::uint64_t seed, bool alphabet = false);

} // namespace cdn::testing
