#pragma once

#include <filesystem>
#include <optional>

#include "stcap/model.hpp"
#include "stcap/training.hpp"

namespace stcap {

// Versioned binary container: magic, config echo, vocabulary, named
// parameter tensors and (optionally) the optimizer state, all doubles
// little-endian. The exact layout is documented in the README.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const AdamState* optimizer = nullptr);

struct Checkpoint {
    Model model;
    std::optional<AdamState> optimizer;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stcap
