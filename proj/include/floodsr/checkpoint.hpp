#pragma once

#include <filesystem>
#include <optional>

#include "floodsr/srnet.hpp"

namespace floodsr {

/// Layout: "FSRCKPT1\n", u64 LE header length, JSON header (config, seeds,
/// tensor names and shapes), then every tensor as binary32 LE in header order.
void save_checkpoint(const NetParams& params, const std::filesystem::path& path);

/// When `expected` is given, a checkpoint built for a different NetConfig is
/// refused with ConfigMismatch.
NetParams load_checkpoint(const std::filesystem::path& path,
                          const std::optional<NetConfig>& expected = std::nullopt);

}  // namespace floodsr
