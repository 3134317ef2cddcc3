#include "cdn/metrics.hpp"

#include "cdn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cdn {

std::vector<double> predictive_entropy(const Matrix& probs) {
    std::vector<double> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        double total = 0.0, h = 0.0;
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            const double p = probs(r, c);
            if (p < 0.0)
                throw ContractError("predictive_entropy: negative probability at row " +
                                    std::to_string(r));
            total += p;
            if (p > 0.0) h -= p * std::log(p);
        }
        if (std::fabs(total - 1.0) > 1e-6)
            throw ContractError("predictive_entropy: row " + std::to_string(r) +
                                " sums to " + std::to_string(total));
        out[r] = h;
    }
    return out;
}

EmpiricalCdf entropy_cdf(const std::vector<double>& entropies) {
    if (entropies.empty()) throw ContractError("entropy_cdf: empty input");
    std::vector<double> sorted = entropies;
    std::sort(sorted.begin(), sorted.end());
    EmpiricalCdf cdf;
    const double n = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const bool last_of_run = i + 1 == sorted.size() || sorted[i + 1] != sorted[i];
        if (last_of_run) {
            cdf.values.push_back(sorted[i]);
            cdf.fractions.push_back(static_cast<double>(i + 1) / n);
        }
    }
    return cdf;
}

double mmc(const Matrix& probs) {
    if (probs.rows() == 0) throw ContractError("mmc: empty input");
    double acc = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        double mx = probs(r, 0);
        for (std::size_t c = 1; c < probs.cols(); ++c) mx = std::max(mx, probs(r, c));
        acc += mx;
    }
    return acc / static_cast<double>(probs.rows());
}

double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out) {
    if (scores_in.empty() || scores_out.empty())
        throw ContractError("auroc: both score sets must be non-empty");
    // midranks over the pooled sample; AUROC = (R_in - n_in(n_in+1)/2) / (n_in n_out)
    struct Entry {
        double score;
        bool is_in;
    };
    std::vector<Entry> pool;
    pool.reserve(scores_in.size() + scores_out.size());
    for (double s : scores_in) pool.push_back({s, true});
    for (double s : scores_out) pool.push_back({s, false});
    std::sort(pool.begin(), pool.end(),
              [](const Entry& a, const Entry& b) { return a.score < b.score; });
    const double n_in = static_cast<double>(scores_in.size());
    const double n_out = static_cast<double>(scores_out.size());
    double rank_sum_in = 0.0;
    std::size_t i = 0;
    while (i < pool.size()) {
        std::size_t j = i;
        while (j + 1 < pool.size() && pool[j + 1].score == pool[i].score) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k)
            if (pool[k].is_in) rank_sum_in += midrank;
        i = j + 1;
    }
    return (rank_sum_in - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out);
}

std::vector<double> max_prob_scores(const Matrix& probs) {
    std::vector<double> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        double mx = probs(r, 0);
        for (std::size_t c = 1; c < probs.cols(); ++c) mx = std::max(mx, probs(r, c));
        out[r] = mx;
    }
    return out;
}

} // namespace cdn
