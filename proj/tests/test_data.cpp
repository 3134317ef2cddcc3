#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdn/data.hpp"
#include "cdn/errors.hpp"
#include "support/test_helpers.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

using namespace cdn;
namespace ct = cdn::testing;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("toy homoscedastic defaults") {
    ToySpec spec;
    spec.seed = 1;
    Dataset d = gen_toy(spec);
    CHECK(d.size() == 20);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d.inputs(i, 0) >= -4.0);
        CHECK(d.inputs(i, 0) <= 4.0);
    }
}

TEST_CASE("toy heteroscedastic defaults") {
    ToySpec spec;
    spec.variant = ToyVariant::heteroscedastic;
    spec.seed = 2;
    CHECK(gen_toy(spec).size() == 100);
}

TEST_CASE("toy zero-noise override gives the exact cubic") {
    ToySpec spec;
    spec.noise_scale = 0.0;
    spec.seed = 3;
    Dataset d = gen_toy(spec);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = d.inputs(i, 0);
        CHECK(d.targets(i, 0) == doctest::Approx(x * x * x).epsilon(1e-12));
    }
}

TEST_CASE("toy seeding is bit reproducible") {
    ToySpec spec;
    spec.seed = 9;
    Dataset a = gen_toy(spec);
    Dataset b = gen_toy(spec);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.inputs(i, 0) == b.inputs(i, 0));
        CHECK(a.targets(i, 0) == b.targets(i, 0));
    }
}

TEST_CASE("toy noise std windows") {
    ToySpec spec;
    spec.n = 100000;
    spec.seed = 4;
    Dataset d = gen_toy(spec);
    double sq = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = d.inputs(i, 0);
        const double eps = d.targets(i, 0) - x * x * x;
        sq += eps * eps;
    }
    const double sd = std::sqrt(sq / static_cast<double>(d.size()));
    CHECK(sd > 2.97);
    CHECK(sd < 3.03);

    ToySpec hs;
    hs.variant = ToyVariant::heteroscedastic;
    hs.n = 100000;
    hs.seed = 5;
    Dataset h = gen_toy(hs);
    double sq_neg = 0.0;
    std::size_t n_neg = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double x = h.inputs(i, 0);
        if (x < 0.0) {
            const double eps = h.targets(i, 0) - x * x * x;
            sq_neg += eps * eps;
            ++n_neg;
        }
    }
    const double sd_neg = std::sqrt(sq_neg / static_cast<double>(n_neg));
    CHECK(sd_neg > 14.85);
    CHECK(sd_neg < 15.15);
}

TEST_CASE("idx round trip on a byte-built fixture") {
    // 2 images of 3x3, bytes chosen by hand
    std::vector<std::vector<std::uint8_t>> images = {
        {0, 255, 10, 20, 30, 40, 50, 60, 70},
        {255, 0, 1, 2, 3, 4, 5, 6, 7},
    };
    std::vector<std::uint8_t> labels = {7, 2};
    const std::string ip = tmp_path("fixture-images.idx");
    const std::string lp = tmp_path("fixture-labels.idx");
    ct::write_idx_images(ip, images, 3, 3);
    ct::write_idx_labels(lp, labels);
    Dataset d = load_idx(ip, lp);
    CHECK(d.size() == 2);
    CHECK(d.input_dim() == 9);
    CHECK(d.inputs(0, 0) == 0.0);
    CHECK(d.inputs(0, 1) == 1.0); // byte 255 -> 1.0
    CHECK(d.inputs(0, 2) == doctest::Approx(10.0 / 255.0).epsilon(1e-15));
    CHECK(d.inputs(1, 0) == 1.0);
    CHECK(d.labels[0] == 7);
    CHECK(d.labels[1] == 2);
}

TEST_CASE("idx gzip transparency") {
    std::vector<std::vector<std::uint8_t>> images = {{1, 2, 3, 4}};
    std::vector<std::uint8_t> labels = {5};
    const std::string ip = tmp_path("fixture-images.idx.gz");
    const std::string lp = tmp_path("fixture-labels.idx.gz");
    ct::write_idx_images(ip, images, 2, 2, /*gzip=*/true);
    ct::write_idx_labels(lp, labels, /*gzip=*/true);
    Dataset d = load_idx(ip, lp);
    CHECK(d.size() == 1);
    CHECK(d.inputs(0, 3) == doctest::Approx(4.0 / 255.0));
    CHECK(d.labels[0] == 5);
}

TEST_CASE("idx count mismatch raises") {
    std::vector<std::vector<std::uint8_t>> images(10, std::vector<std::uint8_t>(4, 0));
    std::vector<std::uint8_t> labels(9, 0);
    const std::string ip = tmp_path("mismatch-images.idx");
    const std::string lp = tmp_path("mismatch-labels.idx");
    ct::write_idx_images(ip, images, 2, 2);
    ct::write_idx_labels(lp, labels);
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("count mismatch"),
                         DataError);
}

TEST_CASE("idx bad magic and truncation carry byte offsets") {
    const std::string ip = tmp_path("bad-images.idx");
    const std::string lp = tmp_path("good-labels.idx");
    ct::write_idx_labels(lp, {1});
    {
        FILE* f = std::fopen(ip.c_str(), "wb");
        const unsigned char bad[] = {0, 0, 8, 9, 0, 0, 0, 1};
        std::fwrite(bad, 1, sizeof bad, f);
        std::fclose(f);
    }
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("bad image magic"),
                         DataError);

    // valid header claiming 2 images of 3x3 but payload cut short
    {
        FILE* f = std::fopen(ip.c_str(), "wb");
        const unsigned char hdr[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 3, 42};
        std::fwrite(hdr, 1, sizeof hdr, f);
        std::fclose(f);
    }
    ct::write_idx_labels(lp, {1, 2});
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("byte offset"), DataError);
}

TEST_CASE("split is deterministic, disjoint and exhaustive") {
    ToySpec spec;
    spec.n = 100;
    spec.seed = 11;
    Dataset d = gen_toy(spec);
    auto [train1, val1] = split(d, 0.1, 99);
    auto [train2, val2] = split(d, 0.1, 99);
    CHECK(train1.size() == 90);
    CHECK(val1.size() == 10);
    for (std::size_t i = 0; i < val1.size(); ++i)
        CHECK(val1.inputs(i, 0) == val2.inputs(i, 0));

    std::multiset<double> original, rejoined;
    for (std::size_t i = 0; i < d.size(); ++i) original.insert(d.inputs(i, 0));
    for (std::size_t i = 0; i < train1.size(); ++i) rejoined.insert(train1.inputs(i, 0));
    for (std::size_t i = 0; i < val1.size(); ++i) rejoined.insert(val1.inputs(i, 0));
    CHECK(original == rejoined);

    CHECK_THROWS_AS(split(d, 0.0, 1), DataError);
    CHECK_THROWS_AS(split(d, 1.0, 1), DataError);
}

TEST_CASE("batch stream covers an epoch exactly once and keeps short batches") {
    BatchStream bs(10, 3, 17);
    std::vector<std::size_t> sizes;
    std::multiset<std::size_t> seen;
    for (int b = 0; b < 4; ++b) {
        auto idx = bs.next();
        sizes.push_back(idx.size());
        for (std::size_t i : idx) seen.insert(i);
    }
    CHECK(sizes == std::vector<std::size_t>{3, 3, 3, 1});
    CHECK(seen.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(seen.count(i) == 1);

    // deterministic per seed
    BatchStream bs2(10, 3, 17);
    CHECK(bs2.next() == BatchStream(10, 3, 17).next());
}
