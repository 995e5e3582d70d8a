#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ventus {

// Versioned binary container: kind tag, configuration text and named
// float64 matrices. Layout in docs/model_format.md.
struct ModelContainer {
    std::string kind;
    std::string config_text;
    std::vector<std::pair<std::string, Eigen::MatrixXd>> blocks;

    const Eigen::MatrixXd& block(const std::string& name) const;
};

inline constexpr char kModelMagic[8] = {'V', 'N', 'T', 'S', 'M', 'D', 'L', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;

std::string encode_model(const ModelContainer& m);
ModelContainer decode_model(const std::string& bytes);
void write_model(const std::filesystem::path& path, const ModelContainer& m);
ModelContainer read_model(const std::filesystem::path& path);

}  // namespace ventus
