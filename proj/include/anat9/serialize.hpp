#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "anat9/loss.hpp"
#include "anat9/toydetect.hpp"

namespace anat9 {

// Interchange format for every CLI command: image grid plus oriented boxes.
struct BoxSet {
    VolumeMeta image;
    std::vector<Pose9DoF> boxes;
};

nlohmann::json to_json(const VolumeMeta& meta);
VolumeMeta meta_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BoxSet& set);
BoxSet boxset_from_json(const nlohmann::json& j);
BoxSet load_boxset(const std::filesystem::path& path);
void save_boxset(const BoxSet& set, const std::filesystem::path& path);

nlohmann::json to_json(const QueryBank& bank);
QueryBank bank_from_json(const nlohmann::json& j);
QueryBank load_bank(const std::filesystem::path& path);
void save_bank(const QueryBank& bank, const std::filesystem::path& path);

nlohmann::json to_json(const LossBreakdown& loss);

// Training log CSV: epoch, loss parts, space-separated binding permutation.
std::string train_log_csv(const TrainLog& log);

void write_text_file(const std::filesystem::path& path, const std::string& content);
nlohmann::json load_json_file(const std::filesystem::path& path);
void save_json_file(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace anat9
