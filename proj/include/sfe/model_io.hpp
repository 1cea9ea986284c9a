#pragma once

#include <filesystem>
#include <string>

#include "sfe/density.hpp"

namespace sfe {

/// Format tag and version written into every serialized ensemble.
inline constexpr const char* kEgmmFormat = "sfe-egmm";
inline constexpr int kEgmmFormatVersion = 1;

/// JSON text holding the fit config, standardization and every component at
/// full (round-trip) precision.
std::string egmm_to_string(const EgmmModel& model);
EgmmModel egmm_from_string(const std::string& text);

void save_egmm(const EgmmModel& model, const std::filesystem::path& path);
EgmmModel load_egmm(const std::filesystem::path& path);

} // namespace sfe
