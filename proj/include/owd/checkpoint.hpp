#pragma once

#include <string>

#include <json.hpp>

#include "owd/detector.hpp"
#include "owd/nn.hpp"

namespace owd {

/// Versioned binary container: detector config + named parameter arrays,
/// optionally optimizer momentum (for exact resume). Byte layout in the
/// README; stable across minor versions.
struct Checkpoint {
    DetectorConfig detector;
    ParamDict params;
    ParamDict momentum;      // empty when has_momentum is false
    bool has_momentum = false;
    int epoch = 0;
    nlohmann::json meta;     // config echo and anything else worth keeping
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace owd
