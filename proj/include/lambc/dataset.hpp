#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lambc/tasks.hpp"
#include "lambc/tensor.hpp"

namespace lambc {

// Immutable sample store. labels holds class indices [N] for
// classification, targets [N, out] for regression, and may be empty for an
// IDX image file loaded on its own.
struct Dataset {
    Tensor features;  // [N, d]
    Tensor labels;
    std::string split;  // "train" | "test"
    std::string provenance;

    std::size_t size() const { return features.shape.empty() ? 0 : features.shape[0]; }
    std::size_t feature_width() const {
        return features.shape.size() == 2 ? features.shape[1] : 0;
    }
};

struct BatchPlan {
    std::size_t batch_size = 0;  // 0 means full batch
    std::size_t epochs = 1;
    std::uint64_t shuffle_seed = 0;
    bool drop_last = false;

    std::size_t effective_batch_size(std::size_t n) const {
        return batch_size == 0 ? n : batch_size;
    }
    void validate(std::size_t n) const;
};

struct DataSpec {
    std::string source = "planted";  // planted | two-gaussians
    std::size_t train_n = 2048;
    std::size_t test_n = 512;
    double margin = 0.1;   // planted hyperplane separation
    double overlap = 0.0;  // two-gaussians: 0 = disjoint supports, 1 = coincident
    double noise = 0.0;    // regression target noise

    bool operator==(const DataSpec&) const = default;
};

// Deterministic train/test pair for a task. Classification labels are
// balanced within one sample; train and test are drawn disjointly from one
// stream.
std::pair<Dataset, Dataset> synth_dataset(const TaskSpec& task, const DataSpec& data,
                                          std::uint64_t seed);

// CSV: one sample per row, features then the label in the last column.
Dataset load_csv(const std::string& path, bool has_header);
void write_csv(const Dataset& dataset, const std::string& path);

// IDX (big-endian): magic 0x00000803 for images (pixels scaled to [0,1],
// rows flattened), 0x00000801 for labels.
Dataset load_idx(const std::string& path);
Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path);

// Permutation of {0..n-1} for one epoch; the per-epoch seed is
// mix64(shuffle_seed, epoch).
std::vector<std::size_t> epoch_indices(std::size_t n, std::uint64_t shuffle_seed,
                                       std::size_t epoch);

// Seeded minibatch access: each epoch is a fresh permutation partitioned
// into batches of plan.batch_size; without drop_last the final short batch
// is emitted.
class BatchStream {
public:
    BatchStream(const Dataset& dataset, const BatchPlan& plan);

    std::size_t batches_per_epoch() const { return batches_per_epoch_; }

    // 0-based epoch and batch index within the epoch.
    Batch get(std::size_t epoch, std::size_t batch_index) const;

private:
    const Dataset& dataset_;
    BatchPlan plan_;
    std::size_t batches_per_epoch_;
    mutable std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
    mutable std::vector<std::size_t> cached_perm_;
};

}  // namespace lambc
