#ifndef TABGPT_CHECKPOINT_HPP
#define TABGPT_CHECKPOINT_HPP

#include <filesystem>

#include "tabgpt/trainer.hpp"

namespace tabgpt {

// Versioned binary container: magic, format version, FNV-1a checksum of the
// payload, then length-prefixed sections for the vocabulary (canonical tuple
// list), the training config, the parameter tensors (shape header +
// row-major little-endian f32 data) and the best-epoch metrics.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace tabgpt

#endif
