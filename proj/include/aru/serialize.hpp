#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aru/data.hpp"
#include "aru/evaluation.hpp"
#include "aru/forecaster.hpp"

namespace aru {

/// Everything the CLI needs to rebuild the pipeline around a trained model:
/// the architecture, the parameters, the feature column names the schema was
/// built from, and the optimizer step counter for resuming.
struct Checkpoint {
  Model model;
  std::vector<std::string> cont_names;
  std::vector<std::string> cat_names;
  std::string time_features = "none";  // granularity name or "none"
  ScaleScope scale_scope = ScaleScope::Series;
  std::uint64_t train_steps = 0;
};

/// Versioned binary format, 64-bit little-endian tensors in declared block
/// order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a over a file's bytes; used to assert a checkpoint is untouched.
std::uint64_t file_hash(const std::string& path);

std::string scalers_to_json(const ScalerState& sc, const Dataset& ds);
/// Re-binds saved scalers onto a dataset by column name and series id.
ScalerState scalers_from_json(const std::string& text, const Dataset& ds);

}  // namespace aru
