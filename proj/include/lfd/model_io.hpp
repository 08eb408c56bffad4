#pragma once

#include <filesystem>
#include <string>

#include "lfd/confidence_models.hpp"
#include "lfd/container.hpp"
#include "lfd/pipeline.hpp"

namespace lfd {

void write_kernel_model(ModelContainer& c, const std::string& prefix, const KernelModel& m);
KernelModel read_kernel_model(const ModelContainer& c, const std::string& prefix);

void write_pca(ModelContainer& c, const std::string& prefix, const PcaModel& m);
PcaModel read_pca(const ModelContainer& c, const std::string& prefix);

/// Header "architecture" is individual, joint or cascaded. Throws VersionMismatch,
/// ChecksumMismatch, ParseError.
void save_model(const ConfidenceModel& model, const std::filesystem::path& path);
ConfidenceModel load_model(const std::filesystem::path& path);
ModelContainer to_container(const ConfidenceModel& model);
ConfidenceModel from_container(const ModelContainer& c);

void save_gender_model(const GenderModel& model, const std::filesystem::path& path);
GenderModel load_gender_model(const std::filesystem::path& path);

nlohmann::json grid_table_json(const std::vector<GridCell>& table);

}  // namespace lfd
