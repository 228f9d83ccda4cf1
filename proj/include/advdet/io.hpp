#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advdet/dataset.hpp"
#include "advdet/detector.hpp"
#include "advdet/model.hpp"
#include "advdet/tensor.hpp"

namespace advdet::io {

// One entry of a tensor container file: payload plus optional label and a
// free-form metadata string (JSON in practice).
struct TensorRecord {
    Tensor tensor;
    std::optional<int> label;
    std::string metadata;
};

struct TensorContainer {
    int num_classes = 0;  // 0 when records carry no labels
    bool test_split = false;
    std::vector<TensorRecord> records;
};

void save_container(const TensorContainer& container, const std::string& path);
TensorContainer load_container(const std::string& path);

void save_dataset(const LabeledDataset& dataset, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

void save_statistics(const ClassStatistics& stats, const std::string& path);
ClassStatistics load_statistics(const std::string& path);

// All writers stage into a temp file in the target directory and rename.
void write_text_file_atomic(const std::string& path, const std::string& content);
void write_bytes_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::string read_text_file(const std::string& path);

}  // namespace advdet::io
