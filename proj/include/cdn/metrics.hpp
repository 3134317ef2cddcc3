#pragma once

#include "cdn/matrix.hpp"

#include <vector>

namespace cdn {

/// Shannon entropy -sum p ln p per row (0 ln 0 := 0). Rows must sum to 1
/// within 1e-6 or a ContractError is raised. Results lie in [0, ln K].
std::vector<double> predictive_entropy(const Matrix& probs);

/// Empirical CDF points of the given values: unique sorted values paired
/// with the fraction of entries <= that value. The last fraction is 1.
struct EmpiricalCdf {
    std::vector<double> values;
    std::vector<double> fractions;
};
EmpiricalCdf entropy_cdf(const std::vector<double>& entropies);

/// Mean maximal confidence: mean over rows of max_k p_k.
double mmc(const Matrix& probs);

/// Rank-based (Mann-Whitney) AUROC with midrank tie handling. scores_in are
/// the positives; higher scores should indicate in-distribution.
double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out);

/// Per-row max probability, the default in/out score.
std::vector<double> max_prob_scores(const Matrix& probs);

struct OodReport {
    double mmc_in = 0.0;
    double mmc_out = 0.0;
    double auroc = 0.0;
};

} // namespace cdn
