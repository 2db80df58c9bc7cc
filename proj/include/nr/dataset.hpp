#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nr/tensor.hpp"

namespace nr {

// Raw image dataset: uint8 pixels, labels in [0, 9]. Pixels stay as stored
// in the IDX files; normalization to [0,1] happens when batches are built.
struct Dataset {
    std::vector<std::uint8_t> images;  // count * rows * cols
    std::vector<int> labels;
    int rows = 28, cols = 28;
    std::string name;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

// IDX readers/writers (big-endian headers, magic 0x803 images / 0x801 labels).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// Deterministic stratified split. Validation gets round(size * val_fraction)
// samples, apportioned per class by largest remainder (within +/-1 of the
// exact per-class share).
struct SplitIndices {
    std::vector<std::int64_t> train, val;
};
SplitIndices split_indices(const Dataset& ds, double val_fraction, std::uint64_t seed);

// Uniform batch interface used by training/evaluation. Implementations are
// immutable after construction and safe for concurrent readers.
class DataSource {
  public:
    virtual ~DataSource() = default;
    virtual std::int64_t size() const = 0;
    virtual std::vector<int> sample_shape() const = 0;
    // out must be preshaped [n, ...sample_shape]
    virtual void fill(const std::int64_t* idx, int n, Tensor<float>& out) const = 0;
    virtual int label(std::int64_t i) const = 0;

    Tensor<float> make_batch(const std::vector<std::int64_t>& idx) const;
    std::vector<int> gather_labels(const std::vector<std::int64_t>& idx) const;
};

// View over a Dataset restricted to an index subset; emits pixels / 255.
class ImageSource : public DataSource {
  public:
    ImageSource(const Dataset& ds, std::vector<std::int64_t> indices);
    explicit ImageSource(const Dataset& ds);  // whole dataset

    std::int64_t size() const override { return static_cast<std::int64_t>(indices_.size()); }
    std::vector<int> sample_shape() const override { return {1, ds_->rows, ds_->cols}; }
    void fill(const std::int64_t* idx, int n, Tensor<float>& out) const override;
    int label(std::int64_t i) const override;

    const std::vector<std::int64_t>& indices() const { return indices_; }

  private:
    const Dataset* ds_;
    std::vector<std::int64_t> indices_;
};

// In-memory float samples (synthetic tasks).
class TensorSource : public DataSource {
  public:
    TensorSource(Tensor<float> inputs, std::vector<int> labels);

    std::int64_t size() const override { return static_cast<std::int64_t>(labels_.size()); }
    std::vector<int> sample_shape() const override;
    void fill(const std::int64_t* idx, int n, Tensor<float>& out) const override;
    int label(std::int64_t i) const override { return labels_[static_cast<std::size_t>(i)]; }

  private:
    Tensor<float> inputs_;
    std::vector<int> labels_;
};

// Standard file names inside a data directory.
struct IdxPaths {
    std::string train_images, train_labels, test_images, test_labels;
};
IdxPaths idx_paths(const std::string& data_dir);

}  // namespace nr
