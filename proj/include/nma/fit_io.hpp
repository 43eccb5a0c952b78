#pragma once

#include <string>

#include "nma/sampler.hpp"

namespace nma {

inline constexpr int kFitSchemaMajor = 1;
inline constexpr int kFitSchemaMinor = 0;

// Deterministic serialization: identical fits produce identical bytes.
std::string fit_to_json(const FitResult& fit);
void save_fit_json(const FitResult& fit, const std::string& path);

// Rejects files whose schema major version differs.
FitResult fit_from_json(const std::string& text);
FitResult load_fit_json(const std::string& path);

}  // namespace nma
