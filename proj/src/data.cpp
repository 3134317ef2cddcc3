#include "cdn/data.hpp"

#include "cdn/errors.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace cdn {

Dataset gen_toy(const ToySpec& spec) {
    const bool hetero = spec.variant == ToyVariant::heteroscedastic;
    const std::size_t n = spec.n > 0 ? spec.n : (hetero ? 100u : 20u);
    if (!(spec.lo < spec.hi)) throw DataError("gen_toy: empty input range");
    Rng rng(spec.seed);
    Dataset d;
    d.inputs = Matrix(n, 1);
    d.targets = Matrix(n, 1);
    d.classification = false;
    d.source = hetero ? "toy-heteroscedastic" : "toy-homoscedastic";
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform(spec.lo, spec.hi);
        const double sigma = hetero ? (x >= 0.0 ? 3.0 : 15.0) : 3.0;
        const double eps = rng.normal() * sigma * spec.noise_scale;
        d.inputs(i, 0) = x;
        d.targets(i, 0) = x * x * x + eps;
    }
    return d;
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                     std::istreambuf_iterator<char>());
}

bool is_gzip(const std::vector<std::uint8_t>& buf) {
    return buf.size() >= 2 && buf[0] == 0x1f && buf[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in,
                                 const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
        throw DataError("gunzip init failed for " + path);
    std::vector<std::uint8_t> out;
    out.resize(in.size() * 4 + 1024);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int ret = Z_OK;
    std::size_t written = 0;
    while (ret != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw DataError("gunzip failed for " + path + " (zlib code " +
                            std::to_string(ret) + ")");
        }
        written = out.size() - zs.avail_out;
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

struct IdxReader {
    std::vector<std::uint8_t> buf;
    std::string path;
    std::size_t pos = 0;

    std::uint32_t read_u32() {
        if (pos + 4 > buf.size())
            throw DataError(path + ": truncated at byte offset " + std::to_string(pos) +
                            " (need 4 bytes)");
        const std::uint32_t v = (std::uint32_t(buf[pos]) << 24) |
                                (std::uint32_t(buf[pos + 1]) << 16) |
                                (std::uint32_t(buf[pos + 2]) << 8) |
                                std::uint32_t(buf[pos + 3]);
        pos += 4;
        return v;
    }

    const std::uint8_t* read_bytes(std::size_t n) {
        if (pos + n > buf.size())
            throw DataError(path + ": truncated payload at byte offset " +
                            std::to_string(pos) + " (need " + std::to_string(n) +
                            " bytes, have " + std::to_string(buf.size() - pos) + ")");
        const std::uint8_t* p = buf.data() + pos;
        pos += n;
        return p;
    }
};

IdxReader open_idx(const std::string& path) {
    IdxReader r;
    r.buf = read_file(path);
    if (is_gzip(r.buf)) r.buf = gunzip(r.buf, path);
    r.path = path;
    return r;
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    IdxReader img = open_idx(images_path);
    const std::uint32_t img_magic = img.read_u32();
    if (img_magic != 0x00000803u)
        throw DataError(images_path + ": bad image magic 0x" +
                        [&] {
                            char b[16];
                            std::snprintf(b, sizeof b, "%08x", img_magic);
                            return std::string(b);
                        }() +
                        " at byte offset 0 (want 0x00000803)");
    const std::uint32_t n_images = img.read_u32();
    const std::uint32_t rows = img.read_u32();
    const std::uint32_t cols = img.read_u32();

    IdxReader lab = open_idx(labels_path);
    const std::uint32_t lab_magic = lab.read_u32();
    if (lab_magic != 0x00000801u)
        throw DataError(labels_path + ": bad label magic 0x" +
                        [&] {
                            char b[16];
                            std::snprintf(b, sizeof b, "%08x", lab_magic);
                            return std::string(b);
                        }() +
                        " at byte offset 0 (want 0x00000801)");
    const std::uint32_t n_labels = lab.read_u32();
    if (n_images != n_labels)
        throw DataError("IDX count mismatch: " + images_path + " has " +
                        std::to_string(n_images) + " images but " + labels_path +
                        " has " + std::to_string(n_labels) + " labels");

    const std::size_t dim = std::size_t(rows) * std::size_t(cols);
    const std::uint8_t* pixels = img.read_bytes(std::size_t(n_images) * dim);
    const std::uint8_t* labels = lab.read_bytes(n_labels);

    Dataset d;
    d.classification = true;
    d.num_classes = 10;
    d.inputs = Matrix(n_images, dim);
    d.labels.resize(n_labels);
    for (std::size_t i = 0; i < n_images; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            d.inputs(i, j) = static_cast<double>(pixels[i * dim + j]) / 255.0;
    for (std::size_t i = 0; i < n_labels; ++i) {
        d.labels[i] = labels[i];
        if (d.labels[i] >= d.num_classes)
            throw DataError(labels_path + ": label " + std::to_string(d.labels[i]) +
                            " out of range at item " + std::to_string(i));
    }
    d.source = images_path;
    return d;
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.classification = d.classification;
    out.num_classes = d.num_classes;
    out.source = d.source;
    out.split_tag = d.split_tag;
    out.inputs = Matrix(idx.size(), d.inputs.cols());
    if (d.classification) {
        out.labels.resize(idx.size());
    } else {
        out.targets = Matrix(idx.size(), d.targets.cols());
    }
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::size_t r = idx[i];
        if (r >= d.size()) throw DataError("subset: index out of range");
        for (std::size_t j = 0; j < d.inputs.cols(); ++j)
            out.inputs(i, j) = d.inputs(r, j);
        if (d.classification)
            out.labels[i] = d.labels[r];
        else
            for (std::size_t j = 0; j < d.targets.cols(); ++j)
                out.targets(i, j) = d.targets(r, j);
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw DataError("split: fraction must lie strictly between 0 and 1, got " +
                        std::to_string(fraction));
    Rng rng(seed);
    std::vector<std::size_t> perm = rng.permutation(d.size());
    const std::size_t n_val = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(d.size())));
    std::vector<std::size_t> val_idx(perm.begin(), perm.begin() + n_val);
    std::vector<std::size_t> train_idx(perm.begin() + n_val, perm.end());
    Dataset train = subset(d, train_idx);
    Dataset val = subset(d, val_idx);
    train.split_tag = "train";
    val.split_tag = "validation";
    return {std::move(train), std::move(val)};
}

BatchStream::BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_(batch_size), rng_(seed) {
    if (batch_ == 0 || batch_ > n_)
        throw DataError("BatchStream: batch size " + std::to_string(batch_) +
                        " for dataset of " + std::to_string(n_));
    order_ = rng_.permutation(n_);
}

std::vector<std::size_t> BatchStream::next() {
    if (pos_ >= n_) {
        order_ = rng_.permutation(n_);
        pos_ = 0;
    }
    const std::size_t end = std::min(pos_ + batch_, n_);
    std::vector<std::size_t> out(order_.begin() + pos_, order_.begin() + end);
    pos_ = end;
    return out;
}

std::size_t BatchStream::batches_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

} // namespace cdn
