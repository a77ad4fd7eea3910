#pragma once

#include "olearn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

namespace olearn {

enum class SampleRole { NewClass, OldObservation };

std::string_view role_name(SampleRole role);

struct LabeledSample {
    std::vector<double> x;
    int label = 0;
    SampleRole role = SampleRole::NewClass;
    std::size_t id = 0;  // index in the source dataset

    friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// Samples with contiguous 0-based labels. `label_values[k]` is the label
/// that id k had in the source file.
struct Dataset {
    std::vector<LabeledSample> samples;
    std::vector<long long> label_values;

    std::size_t dim() const { return samples.empty() ? 0 : samples.front().x.size(); }
    std::size_t num_classes() const { return label_values.size(); }
};

enum class DataFormat { Delimited, Idx };

/// "csv" (also "delimited", "txt") or "idx".
DataFormat parse_format(std::string_view name);

/// Delimited text: one sample per line, integer label first, then features.
/// Commas, semicolons, tabs and spaces all separate fields; blank lines and
/// lines starting with '#' are skipped.
Dataset load_delimited(const std::filesystem::path& path);

void write_delimited(const Dataset& data, const std::filesystem::path& path);

/// IDX image file (ubyte, >= 2 dims) paired with an IDX label file (ubyte,
/// 1 dim). Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Label file next to an IDX image file: "images" -> "labels", "idx3" -> "idx1".
std::filesystem::path idx_label_path_for(const std::filesystem::path& images);

/// For Idx, `path` is the image file; the label file is derived from it
/// unless `labels` is given.
Dataset load_dataset(const std::filesystem::path& path, DataFormat format,
                     const std::optional<std::filesystem::path>& labels = std::nullopt);

/// Isotropic Gaussian classes with means drawn from N(0, separation^2 I).
/// The last `nuisance_dims` coordinates carry no class signal and have
/// standard deviation `nuisance_sd`.
struct BlobSpec {
    std::size_t classes = 10;
    std::size_t dim = 10;
    std::size_t per_class = 100;
    double separation = 3.0;
    double noise_sd = 1.0;
    std::size_t nuisance_dims = 0;
    double nuisance_sd = 1.0;
    std::uint64_t seed = 0;
};

Dataset make_blobs(const BlobSpec& spec);

/// Root of the mean per-feature within-class variance.
double within_class_sd(const Dataset& data);

/// Additive feature shift for old-class observations of selected classes,
/// starting at block `onset_block`.
struct DriftSpec {
    std::map<int, std::vector<double>> shifts;
    std::size_t onset_block = 0;
};

/// Adds the class shift to every OldObservation sample at stream position
/// >= onset_block * block_size. Labels are untouched.
std::vector<LabeledSample> inject_drift(std::vector<LabeledSample> stream, const DriftSpec& drift,
                                        std::size_t block_size);

/// Drift applied inside every incremental phase: each old class moves by
/// `magnitude` within-class standard deviations along a random direction,
/// starting `onset_fraction` of the way through the phase.
struct DriftSettings {
    double magnitude = 1.0;
    double onset_fraction = 0.5;
};

struct ScenarioSpec {
    std::uint64_t seed = 0;
    std::vector<std::size_t> splits{5, 5};
    double new_fraction = 0.4;
    double old_fraction = 0.4;
    double test_fraction = 0.2;
    std::size_t block_size = 8;
    bool shuffle_classes = true;
    std::optional<DriftSettings> drift;

    void validate() const;
};

bool is_valid_block_size(std::size_t p);

struct Phase {
    std::vector<int> new_classes;
    std::vector<int> old_classes;
    std::vector<LabeledSample> stream;
};

/// Labels inside a scenario are positions in the class order, so phase k
/// introduces a contiguous id range after all earlier phases' classes.
struct Scenario {
    std::vector<int> class_order;  // class_order[label] = dataset class id
    std::vector<Phase> phases;
    std::vector<LabeledSample> test;

    /// Test samples whose label is below `trained_classes`.
    std::vector<LabeledSample> test_for(std::size_t trained_classes) const;
};

/// Phase 0 holds the first split's new-class samples in random order. Each
/// later phase interleaves its split's new-class samples uniformly at random
/// with old observations of earlier classes; a class's observations are
/// divided evenly over the phases after the one that introduced it.
Scenario make_scenario(const Dataset& data, const ScenarioSpec& spec);

struct DataBlock {
    std::vector<LabeledSample> samples;
    std::size_t index = 0;

    std::size_t size() const { return samples.size(); }
    Tensor2D inputs() const;
    std::vector<int> labels() const;
};

/// Single-consumer iterator over a sample sequence.
class SampleStream {
public:
    explicit SampleStream(std::vector<LabeledSample> samples) : samples_(std::move(samples)) {}

    /// Next min(p, remaining) samples, or nullopt at the end.
    std::optional<DataBlock> next_block(std::size_t p);

    std::size_t remaining() const { return samples_.size() - cursor_; }
    std::size_t size() const { return samples_.size(); }

private:
    std::vector<LabeledSample> samples_;
    std::size_t cursor_ = 0;
    std::size_t blocks_ = 0;
};

std::vector<DataBlock> split_blocks(const std::vector<LabeledSample>& samples, std::size_t p);

} // namespace olearn
