#include "hpm/bank.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "hpm/error.hpp"
#include "hpm/io.hpp"

namespace hpm {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> row_major_values(const Matrix& m) {
    RowMajor rm = m;
    return {rm.data(), rm.data() + rm.size()};
}

Matrix from_row_major(const std::vector<double>& values, Index rows, Index cols) {
    return Eigen::Map<const RowMajor>(values.data(), rows, cols);
}

void require_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) {
        throw ValidationError("non-finite value in " + what);
    }
}

std::vector<double> read_f32_blob(const fs::path& path, std::size_t expected) {
    auto values = io::decode_f32le(io::read_file(path));
    if (values.size() != expected) {
        throw ValidationError("blob length mismatch in " + path.filename().string() + ": expected " +
                              std::to_string(expected) + " values, found " +
                              std::to_string(values.size()));
    }
    return values;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

bool parse_number(const std::string& text, double& out) {
    std::size_t pos = 0;
    try {
        out = std::stod(text, &pos);
    } catch (const std::exception&) {
        return false;
    }
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    return pos == text.size();
}

FeatureBank load_csv_bank(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) {
        throw IoError("cannot open " + csv_path.string());
    }
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        std::vector<double> values(cells.size());
        bool numeric = true;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            numeric = numeric && parse_number(cells[i], values[i]);
        }
        if (!numeric) {
            if (rows.empty() && labels.empty() && line_no == 1) continue;  // header row
            throw ValidationError("non-numeric value on line " + std::to_string(line_no) +
                                  " of " + csv_path.string());
        }
        if (cells.size() < 2) {
            throw ValidationError("features.csv needs at least one feature column and a label");
        }
        if (width == 0) width = cells.size();
        if (cells.size() != width) {
            throw ValidationError("ragged row on line " + std::to_string(line_no));
        }
        double label = values.back();
        if (!(label >= 0) || label != std::floor(label)) {
            throw ValidationError("label out of range on line " + std::to_string(line_no));
        }
        labels.push_back(static_cast<int>(label));
        values.pop_back();
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw ValidationError("empty bank");
    }
    Matrix features(static_cast<Index>(rows.size()), static_cast<Index>(width - 1));
    for (Index i = 0; i < features.rows(); ++i) {
        for (Index j = 0; j < features.cols(); ++j) {
            // Stored precision is float32 regardless of the text precision.
            features(i, j) = static_cast<double>(static_cast<float>(rows[i][j]));
        }
    }
    int k = *std::max_element(labels.begin(), labels.end()) + 1;
    auto bank = make_bank(std::move(features), std::move(labels), k);
    bank.name = csv_path.parent_path().filename().string();
    return bank;
}

}  // namespace

void validate_head(const ClassifierHead& head) {
    if (head.bias.size() != head.weights.rows()) {
        throw ValidationError("classifier bias length does not match weight rows");
    }
    require_finite(head.weights, "classifier weights");
    require_finite(head.bias, "classifier bias");
}

Matrix compute_logits(const ClassifierHead& head, const Matrix& features) {
    if (features.cols() != head.dim()) {
        throw ValidationError("dimension mismatch: features have d=" +
                              std::to_string(features.cols()) + ", head expects d=" +
                              std::to_string(head.dim()));
    }
    Matrix logits = features * head.weights.transpose();
    logits.rowwise() += head.bias.transpose();
    return logits;
}

bool GroupSplit::is_head(int c) const {
    return std::binary_search(head_classes.begin(), head_classes.end(), c);
}

void validate_bank(const FeatureBank& bank) {
    if (bank.num_classes <= 0) {
        throw ValidationError("class count must be positive");
    }
    if (static_cast<Index>(bank.labels.size()) != bank.size()) {
        throw ValidationError("label count does not match feature rows");
    }
    for (std::size_t i = 0; i < bank.labels.size(); ++i) {
        if (bank.labels[i] < 0 || bank.labels[i] >= bank.num_classes) {
            throw ValidationError("label out of range at row " + std::to_string(i) + ": " +
                                  std::to_string(bank.labels[i]) + " with K=" +
                                  std::to_string(bank.num_classes));
        }
    }
    require_finite(bank.features, "features");
    if (!bank.class_names.empty() &&
        static_cast<int>(bank.class_names.size()) != bank.num_classes) {
        throw ValidationError("class_names length does not match K");
    }
    if (bank.logits) {
        if (bank.logits->rows() != bank.size() || bank.logits->cols() != bank.num_classes) {
            throw ValidationError("logits must be N x K");
        }
        require_finite(*bank.logits, "logits");
    }
    if (bank.head) {
        validate_head(*bank.head);
        if (bank.head->num_classes() != bank.num_classes || bank.head->dim() != bank.dim()) {
            throw ValidationError("classifier head shape does not match bank K x d");
        }
    }
}

FeatureBank make_bank(Matrix features, std::vector<int> labels, int num_classes) {
    FeatureBank bank;
    bank.features = std::move(features);
    bank.labels = std::move(labels);
    bank.num_classes = num_classes;
    validate_bank(bank);
    return bank;
}

FeatureBank load_bank(const fs::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        if (fs::exists(dir / "features.csv")) {
            return load_csv_bank(dir / "features.csv");
        }
        if (!fs::exists(dir)) {
            throw IoError("bank directory not found: " + dir.string());
        }
        throw ValidationError("missing manifest: " + manifest_path.string());
    }
    json manifest;
    try {
        manifest = json::parse(io::read_file(manifest_path));
    } catch (const json::exception& e) {
        throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    FeatureBank bank;
    Index n = 0, d = 0;
    try {
        if (manifest.at("version").get<int>() != 1) {
            throw ValidationError("unsupported manifest version");
        }
        if (manifest.at("dtype").get<std::string>() != "f32le" ||
            manifest.at("order").get<std::string>() != "row-major") {
            throw ValidationError("unsupported dtype/order in manifest");
        }
        n = manifest.at("n").get<Index>();
        d = manifest.at("d").get<Index>();
        bank.num_classes = manifest.at("k").get<int>();
        if (manifest.contains("class_names")) {
            bank.class_names = manifest["class_names"].get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    if (n <= 0 || d <= 0 || bank.num_classes <= 0) {
        throw ValidationError("manifest dimensions must be positive");
    }
    const auto k = static_cast<Index>(bank.num_classes);

    bank.features = from_row_major(
        read_f32_blob(dir / "features.bin", static_cast<std::size_t>(n * d)), n, d);

    auto raw_labels = io::decode_u32le(io::read_file(dir / "labels.bin"));
    if (static_cast<Index>(raw_labels.size()) != n) {
        throw ValidationError("blob length mismatch in labels.bin: expected " +
                              std::to_string(n) + " labels, found " +
                              std::to_string(raw_labels.size()));
    }
    bank.labels.resize(raw_labels.size());
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        if (raw_labels[i] >= static_cast<std::uint32_t>(bank.num_classes)) {
            throw ValidationError("label out of range at row " + std::to_string(i) + ": " +
                                  std::to_string(raw_labels[i]) + " with K=" +
                                  std::to_string(bank.num_classes));
        }
        bank.labels[i] = static_cast<int>(raw_labels[i]);
    }

    if (fs::exists(dir / "logits.bin")) {
        bank.logits =
            from_row_major(read_f32_blob(dir / "logits.bin", static_cast<std::size_t>(n * k)), n, k);
    }
    if (fs::exists(dir / "head_w.bin")) {
        ClassifierHead head;
        head.weights =
            from_row_major(read_f32_blob(dir / "head_w.bin", static_cast<std::size_t>(k * d)), k, d);
        auto b = read_f32_blob(dir / "head_b.bin", static_cast<std::size_t>(k));
        head.bias = Eigen::Map<const Vector>(b.data(), k);
        bank.head = std::move(head);
    }
    bank.name = dir.filename().string();
    if (bank.name.empty()) bank.name = dir.parent_path().filename().string();
    validate_bank(bank);
    return bank;
}

void save_bank(const FeatureBank& bank, const fs::path& dir) {
    if (bank.size() == 0) {
        throw ValidationError("empty bank");
    }
    validate_bank(bank);
    io::ensure_directory(dir);

    json manifest = {
        {"version", 1},
        {"n", bank.size()},
        {"d", bank.dim()},
        {"k", bank.num_classes},
        {"dtype", "f32le"},
        {"order", "row-major"},
    };
    if (!bank.class_names.empty()) {
        manifest["class_names"] = bank.class_names;
    }
    io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    io::write_file_atomic(dir / "features.bin", io::encode_f32le(row_major_values(bank.features)));

    std::vector<std::uint32_t> labels(bank.labels.begin(), bank.labels.end());
    io::write_file_atomic(dir / "labels.bin", io::encode_u32le(labels));

    if (bank.logits) {
        io::write_file_atomic(dir / "logits.bin", io::encode_f32le(row_major_values(*bank.logits)));
    }
    if (bank.head) {
        io::write_file_atomic(dir / "head_w.bin",
                              io::encode_f32le(row_major_values(bank.head->weights)));
        const Vector& b = bank.head->bias;
        io::write_file_atomic(dir / "head_b.bin",
                              io::encode_f32le(std::span<const double>(b.data(), b.size())));
    }
}

std::vector<std::int64_t> class_counts(const FeatureBank& bank) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(bank.num_classes), 0);
    for (int y : bank.labels) {
        ++counts[static_cast<std::size_t>(y)];
    }
    return counts;
}

GroupSplit split_head_tail(std::span<const ClassCount> counts, double head_fraction) {
    if (counts.size() < 2) {
        throw ValidationError("head/tail split needs at least two classes");
    }
    if (!(head_fraction > 0.0 && head_fraction < 1.0)) {
        throw ValidationError("head_fraction must lie in (0, 1)");
    }
    std::vector<ClassCount> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const ClassCount& a, const ClassCount& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.class_id < b.class_id;
    });
    const auto k = order.size();
    // The 1e-9 slack keeps products such as 0.7 * 10 from rounding up to 8.
    auto n_head = static_cast<std::size_t>(std::ceil(head_fraction * static_cast<double>(k) - 1e-9));
    n_head = std::clamp<std::size_t>(n_head, 1, k - 1);

    GroupSplit split;
    split.head_fraction = head_fraction;
    split.rule = "top ceil(" + io::format_double(head_fraction) +
                 " * K) classes by count are head; ties broken by smaller class id";
    for (std::size_t i = 0; i < k; ++i) {
        (i < n_head ? split.head_classes : split.tail_classes).push_back(order[i].class_id);
    }
    std::sort(split.head_classes.begin(), split.head_classes.end());
    std::sort(split.tail_classes.begin(), split.tail_classes.end());
    return split;
}

GroupSplit split_head_tail(std::span<const std::int64_t> counts, double head_fraction) {
    std::vector<ClassCount> pairs(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        pairs[c] = {static_cast<int>(c), counts[c]};
    }
    return split_head_tail(std::span<const ClassCount>(pairs), head_fraction);
}

}  // namespace hpm
