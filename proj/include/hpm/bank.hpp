#pragma once

// Feature banks: frozen penultimate-layer features with dense integer labels,
// plus the optional classifier head and logits that travel with them.
//
// On-disk layout (one directory per bank):
//   manifest.json  {"version":1,"n":N,"d":d,"k":K,"dtype":"f32le","order":"row-major","class_names":[...]}
//   features.bin   N*d float32 little-endian, row-major
//   labels.bin     N uint32 little-endian
//   logits.bin     optional, N*K float32
//   head_w.bin     optional, K*d float32 row-major
//   head_b.bin     optional, K float32
// A directory holding only features.csv (d columns plus a trailing label
// column) is accepted as a fallback.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hpm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct ClassifierHead {
    Matrix weights;  // K x d
    Vector bias;     // K

    Index num_classes() const { return weights.rows(); }
    Index dim() const { return weights.cols(); }
};

// Throws ValidationError on shape mismatch or non-finite entries.
void validate_head(const ClassifierHead& head);

// N x K logits W h_i + b for every row of `features`.
Matrix compute_logits(const ClassifierHead& head, const Matrix& features);

struct FeatureBank {
    Matrix features;          // N x d
    std::vector<int> labels;  // N, each in [0, num_classes)
    int num_classes = 0;
    std::vector<std::string> class_names;
    std::optional<Matrix> logits;  // N x K
    std::optional<ClassifierHead> head;
    std::string name;  // bank identifier, the directory name when loaded

    Index size() const { return features.rows(); }
    Index dim() const { return features.cols(); }
};

// Builds a bank and checks labels, shapes and finiteness. Per-class support
// (n_c >= 2, N > K) is a fit-time concern and is not checked here.
FeatureBank make_bank(Matrix features, std::vector<int> labels, int num_classes);

void validate_bank(const FeatureBank& bank);

FeatureBank load_bank(const std::filesystem::path& dir);
void save_bank(const FeatureBank& bank, const std::filesystem::path& dir);

std::vector<std::int64_t> class_counts(const FeatureBank& bank);

struct ClassCount {
    int class_id = 0;
    std::int64_t count = 0;
};

struct GroupSplit {
    std::vector<int> head_classes;  // ascending ids
    std::vector<int> tail_classes;  // ascending ids
    double head_fraction = 0.5;
    std::string rule;

    bool is_head(int c) const;
};

// The ceil(head_fraction * K) most frequent classes form the head (at least
// one, at most K - 1); ties go to the smaller class id.
GroupSplit split_head_tail(std::span<const ClassCount> counts, double head_fraction = 0.5);
GroupSplit split_head_tail(std::span<const std::int64_t> counts, double head_fraction = 0.5);

}  // namespace hpm
