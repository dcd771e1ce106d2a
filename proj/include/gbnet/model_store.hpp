#pragma once

#include <string>

#include "gbnet/engine.hpp"

namespace gbnet {

/// Model archive format: a JSON document with a magic string and a
/// format_version at the head. Every float is stored as the hex image
/// of its 64-bit word, so save/load round-trips are bit-exact.
inline constexpr const char* kModelMagic = "gbnet-model";
inline constexpr int kModelFormatVersion = 1;

/// Writes the model (plus an optional training-config fingerprint) to
/// `path`. Throws IoError on failure.
void save_model(const Ensemble& model, const std::string& path,
                const std::string& config_fingerprint = "");

/// Reads a model archive. Unrecognized magic/version or internally
/// inconsistent shapes raise descriptive errors; no partial model is
/// ever returned. `fingerprint_out`, when given, receives the stored
/// training-config fingerprint.
Ensemble load_model(const std::string& path, std::string* fingerprint_out = nullptr);

}  // namespace gbnet
