#pragma once

#include "cdn/model.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace cdn {

/// Checkpoint metadata header. `extra` carries model-kind specific fields
/// (dropout rate, ensemble member count, ...).
struct CheckpointMeta {
    int format_version = 1;
    std::string kind;      // ml-cdn | vb-cdn | mcd | ensemble | vmg
    std::string objective; // ml | vb | none
    std::uint64_t seed = 0;
    Architecture arch;
    nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json arch_to_json(const Architecture& arch);
Architecture arch_from_json(const nlohmann::json& j);

/// Container layout: 8-byte magic "CDNCKPT\x01", u32 header length, JSON
/// header (UTF-8, sorted keys), u32 block count, then per block:
/// u32 name length, name bytes, u8 dtype tag (0 = float64), u8 ndim (2),
/// u32 rows, u32 cols, row-major little-endian float64 payload.
/// Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, Tensor>>& params);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::vector<std::pair<std::string, Matrix>> blocks; // file order
    const Matrix* find(const std::string& name) const;
};

/// Throws FormatError on bad magic / version / truncation.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copies stored blocks into the given parameters; a missing block or a
/// shape disagreement raises ShapeError naming the offending block.
void restore_parameters(const LoadedCheckpoint& ckpt,
                        const std::vector<std::pair<std::string, Tensor>>& params);

} // namespace cdn
