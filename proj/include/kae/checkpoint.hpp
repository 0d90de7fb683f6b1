#pragma once

// JSON checkpoints:
//   { "format": "kae-checkpoint", "version": 1, "variant": "usvd",
//     "dims": {"N": 3, "M": 8, "h": 16},
//     "weights": {"id": .., "f": .., "b": .., "sv": .., "c": ..},
//     "wf": 20, "wb": 20, "train_length": 1500,
//     "normalization": {"shift": [..], "scale": [..]},
//     "parameters": {"enc.W1": [[row], ...], "enc.b1": [..], ..., "op.K": [[..]]} }
// Matrices are arrays of rows; column vectors are flat arrays. Numbers are
// written with round-trip precision.

#include <string>

#include "kae/model.hpp"

namespace kae {

std::string serialize_checkpoint(const KaeModel& model);
/// Throws ArtifactError on a malformed document or a schema mismatch.
KaeModel deserialize_checkpoint(const std::string& text);

void save_checkpoint(const std::string& path, const KaeModel& model);
KaeModel load_checkpoint(const std::string& path);

} // namespace kae
