#pragma once

#include "mmblock/block_svd.hpp"
#include "mmblock/factor_model.hpp"

#include <filesystem>
#include <optional>

namespace mmb {

// A model directory holds manifest.json plus one DTEN file per core, mode
// matrix, singular-value vector and mean.

void save_model(const std::filesystem::path& dir, const FactorModel& model);
void save_model(const std::filesystem::path& dir, const BlockFactorModel& model);

struct LoadedModel {
    std::optional<FactorModel> flat;
    std::optional<BlockFactorModel> block;

    [[nodiscard]] bool is_block() const noexcept { return block.has_value(); }
};

/// Throws ConfigError for a missing or malformed manifest.
LoadedModel load_model(const std::filesystem::path& dir);

} // namespace mmb
