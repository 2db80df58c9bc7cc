#include "nr/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "nr/errors.hpp"

namespace nr {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw TruncatedFileError(path + ": truncated while reading header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<char*>(b), 4);
}

std::uintmax_t file_size_or_throw(const std::string& path) {
    std::error_code ec;
    auto n = std::filesystem::file_size(path, ec);
    if (ec) throw InputError(path + ": " + ec.message());
    return n;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw InputError("cannot open " + images_path);
    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw InputError("cannot open " + labels_path);

    const std::uint32_t im = read_be32(fi, images_path);
    if (im != kImagesMagic) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "expected 0x%08x, got 0x%08x", kImagesMagic, im);
        throw BadMagicError(images_path + ": bad images magic (" + buf + ")");
    }
    const std::uint32_t lm = read_be32(fl, labels_path);
    if (lm != kLabelsMagic) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "expected 0x%08x, got 0x%08x", kLabelsMagic, lm);
        throw BadMagicError(labels_path + ": bad labels magic (" + buf + ")");
    }

    const std::uint32_t n_img = read_be32(fi, images_path);
    const std::uint32_t rows = read_be32(fi, images_path);
    const std::uint32_t cols = read_be32(fi, images_path);
    const std::uint32_t n_lab = read_be32(fl, labels_path);
    if (n_img != n_lab)
        throw CountMismatchError("image count " + std::to_string(n_img) + " != label count " + std::to_string(n_lab));

    const std::uintmax_t want_img = 16 + std::uintmax_t(n_img) * rows * cols;
    const std::uintmax_t have_img = file_size_or_throw(images_path);
    if (have_img < want_img)
        throw TruncatedFileError(images_path + ": expected " + std::to_string(want_img) + " bytes, found " +
                                 std::to_string(have_img));
    const std::uintmax_t want_lab = 8 + std::uintmax_t(n_lab);
    const std::uintmax_t have_lab = file_size_or_throw(labels_path);
    if (have_lab < want_lab)
        throw TruncatedFileError(labels_path + ": expected " + std::to_string(want_lab) + " bytes, found " +
                                 std::to_string(have_lab));

    Dataset ds;
    ds.rows = static_cast<int>(rows);
    ds.cols = static_cast<int>(cols);
    ds.images.resize(std::size_t(n_img) * rows * cols);
    fi.read(reinterpret_cast<char*>(ds.images.data()), static_cast<std::streamsize>(ds.images.size()));
    if (!fi) throw TruncatedFileError(images_path + ": truncated pixel payload");

    std::vector<std::uint8_t> raw(n_lab);
    fl.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!fl) throw TruncatedFileError(labels_path + ": truncated label payload");
    ds.labels.resize(n_lab);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ds.labels[i] = raw[i];
        if (ds.labels[i] > 9) throw InputError(labels_path + ": label out of range at index " + std::to_string(i));
    }
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw InputError("cannot write " + images_path);
    write_be32(fi, kImagesMagic);
    write_be32(fi, static_cast<std::uint32_t>(ds.size()));
    write_be32(fi, static_cast<std::uint32_t>(ds.rows));
    write_be32(fi, static_cast<std::uint32_t>(ds.cols));
    fi.write(reinterpret_cast<const char*>(ds.images.data()), static_cast<std::streamsize>(ds.images.size()));

    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw InputError("cannot write " + labels_path);
    write_be32(fl, kLabelsMagic);
    write_be32(fl, static_cast<std::uint32_t>(ds.size()));
    std::vector<std::uint8_t> raw(ds.labels.begin(), ds.labels.end());
    fl.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

SplitIndices split_indices(const Dataset& ds, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw InputError("val_fraction must be in (0,1), got " + std::to_string(val_fraction));

    std::vector<std::vector<std::int64_t>> by_class(10);
    for (std::int64_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

    // Largest-remainder apportionment of the validation quota across classes.
    const std::int64_t total_val = std::llround(static_cast<double>(ds.size()) * val_fraction);
    std::vector<std::int64_t> take(10, 0);
    std::vector<std::pair<double, int>> rema;
    std::int64_t assigned = 0;
    for (int c = 0; c < 10; ++c) {
        const double exact = static_cast<double>(by_class[static_cast<std::size_t>(c)].size()) * val_fraction;
        take[static_cast<std::size_t>(c)] = static_cast<std::int64_t>(exact);
        assigned += take[static_cast<std::size_t>(c)];
        rema.push_back({exact - static_cast<double>(take[static_cast<std::size_t>(c)]), c});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total_val && i < rema.size(); ++i, ++assigned) ++take[static_cast<std::size_t>(rema[i].second)];

    std::mt19937_64 rng(seed);
    SplitIndices out;
    for (int c = 0; c < 10; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::int64_t t = take[static_cast<std::size_t>(c)];
        out.val.insert(out.val.end(), idx.begin(), idx.begin() + t);
        out.train.insert(out.train.end(), idx.begin() + t, idx.end());
    }
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.train.begin(), out.train.end());
    return out;
}

Tensor<float> DataSource::make_batch(const std::vector<std::int64_t>& idx) const {
    std::vector<int> shape{static_cast<int>(idx.size())};
    for (int d : sample_shape()) shape.push_back(d);
    Tensor<float> out(shape);
    fill(idx.data(), static_cast<int>(idx.size()), out);
    return out;
}

std::vector<int> DataSource::gather_labels(const std::vector<std::int64_t>& idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = label(idx[i]);
    return out;
}

ImageSource::ImageSource(const Dataset& ds, std::vector<std::int64_t> indices) : ds_(&ds), indices_(std::move(indices)) {}

ImageSource::ImageSource(const Dataset& ds) : ds_(&ds) {
    indices_.resize(static_cast<std::size_t>(ds.size()));
    std::iota(indices_.begin(), indices_.end(), 0);
}

void ImageSource::fill(const std::int64_t* idx, int n, Tensor<float>& out) const {
    const std::int64_t px = static_cast<std::int64_t>(ds_->rows) * ds_->cols;
    float* o = out.ptr();
    for (int i = 0; i < n; ++i) {
        const std::uint8_t* src = ds_->images.data() + indices_[static_cast<std::size_t>(idx[i])] * px;
        for (std::int64_t j = 0; j < px; ++j) o[i * px + j] = static_cast<float>(src[j]) * (1.0f / 255.0f);
    }
}

int ImageSource::label(std::int64_t i) const {
    return ds_->labels[static_cast<std::size_t>(indices_[static_cast<std::size_t>(i)])];
}

TensorSource::TensorSource(Tensor<float> inputs, std::vector<int> labels)
    : inputs_(std::move(inputs)), labels_(std::move(labels)) {
    if (inputs_.dim(0) != static_cast<int>(labels_.size()))
        throw ShapeError("TensorSource: input/label count mismatch");
}

std::vector<int> TensorSource::sample_shape() const {
    return std::vector<int>(inputs_.shape.begin() + 1, inputs_.shape.end());
}

void TensorSource::fill(const std::int64_t* idx, int n, Tensor<float>& out) const {
    const std::int64_t per = inputs_.numel() / inputs_.dim(0);
    for (int i = 0; i < n; ++i)
        std::copy_n(inputs_.ptr() + idx[i] * per, per, out.ptr() + i * per);
}

IdxPaths idx_paths(const std::string& data_dir) {
    return IdxPaths{data_dir + "/train-images-idx3-ubyte", data_dir + "/train-labels-idx1-ubyte",
                    data_dir + "/t10k-images-idx3-ubyte", data_dir + "/t10k-labels-idx1-ubyte"};
}

}  // namespace nr
