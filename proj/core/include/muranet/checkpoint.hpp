#pragma once

#include <memory>
#include <string>

#include "muranet/heads.hpp"

namespace mura {

// Single-file binary checkpoint: magic "MNCK", version, ModelConfig as JSON,
// then each parameter as (path, dims, doubles). Loading validates paths and
// shapes against the receiving model and fails loudly on any mismatch.
void save_checkpoint(const std::string& path, Model& model);

// Reads just the embedded ModelConfig (to rebuild an identical model).
ModelConfig checkpoint_config(const std::string& path);

// Loads weights into an already-built model of matching architecture.
void load_checkpoint(const std::string& path, Model& model);

// Convenience: rebuild the model from the stored config, then load weights.
std::unique_ptr<Model> load_model(const std::string& path);

}  // namespace mura
