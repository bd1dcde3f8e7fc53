#pragma once

// Versioned JSON checkpoints: configuration, every parameter tensor (id,
// shape, row-major values), target scaling, feature statistics and history.
// Doubles are written with round-trip precision, so loading restores the
// exact bits.

#include <string>

#include "dstt/model.hpp"

namespace dstt::model {

inline constexpr int kCheckpointVersion = 1;

std::string checkpoint_to_string(const DsttModel& model);
DsttModel checkpoint_from_string(const std::string& text);

void save_checkpoint(const DsttModel& model, const std::string& path);
DsttModel load_checkpoint(const std::string& path);

}  // namespace dstt::model
