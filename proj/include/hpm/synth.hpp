#pragma once

// Deterministic long-tailed synthetic feature banks.
//
// Class c has n_c = max(2, round(n_max * rho^(-c/(K-1)))) training samples.
// A sample is h = r * u with u = normalize(m_c + spread * Q diag(s) eps):
// m_c is a random unit class direction, Q a random rotation shared by all
// classes and s a decaying scale profile with sum(s^2) = 1. The class radius
// grows linearly in log-frequency from 1 (most frequent class) to
// radius_coupling (least frequent), times a log-normal per-sample jitter.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hpm/bank.hpp"

namespace hpm {

enum class OodKind { shifted_gaussian, uniform_sphere };

std::string ood_kind_name(OodKind kind);
std::optional<OodKind> parse_ood_kind(std::string_view name);

struct SynthSpec {
    int num_classes = 10;
    Index dim = 32;
    int n_max = 100;
    double imbalance_ratio = 10.0;
    double radius_coupling = 1.3;
    double spread = 0.5;          // total within-class noise scale before projection
    double anisotropy = 2.0;      // log-scale decay of the noise profile across dims
    double radius_jitter = 0.1;   // std of log radius within a class
    int n_test_per_class = 50;    // balanced ID evaluation bank
    int n_ood = 500;
    OodKind ood_kind = OodKind::shifted_gaussian;
    double ood_shift = 1.0;       // offset of the OOD centre from its nearest class direction
    double head_scale = 8.0;      // classifier weights are head_scale * m_c
    std::uint64_t seed = 0;
};

// Throws ValidationError when a field is out of range.
void validate_spec(const SynthSpec& spec);

std::vector<std::int64_t> synth_class_counts(const SynthSpec& spec);

// Class radius before jitter.
std::vector<double> synth_class_radii(const SynthSpec& spec);

struct SynthGroundTruth {
    Matrix class_directions;  // K x d unit rows
    Vector class_radii;       // K
    Matrix noise_basis;       // d x d orthogonal
    Vector noise_scales;      // d
    Vector ood_direction;     // d, unused for uniform-sphere
    int ood_anchor_class = -1;
};

struct SynthData {
    FeatureBank train;
    FeatureBank test;
    FeatureBank ood;
    SynthGroundTruth truth;
};

SynthData generate_synthetic(const SynthSpec& spec);

// Draws n fresh samples of class c from the same generative model, using
// its own stream derived from `seed`. Used by oracle tests.
Matrix sample_class(const SynthSpec& spec, const SynthGroundTruth& truth, int c, Index n,
                    std::uint64_t seed);

// Writes <out>/id_train, <out>/id_test, <out>/ood/<kind>, ground_truth.json
// and synth_spec.json.
void write_synthetic(const SynthData& data, const SynthSpec& spec, const std::filesystem::path& out);

}  // namespace hpm
