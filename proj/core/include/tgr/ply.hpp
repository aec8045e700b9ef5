#pragma once

#include "tgr/scene.hpp"

#include <iosfwd>
#include <string>

namespace tgr {

/// Binary little-endian splat point file.
///
/// Written layout per vertex (all float32):
///   x y z  scale_0..2  rot_0..3  opacity  red green blue  f_lang_0..f_lang_63
///
/// The reader matches properties by name, so files from other splat tools
/// load as long as they carry positions, scales, rotations and opacity.
/// Color is read from red/green/blue or, failing that, from the degree-0
/// spherical-harmonic coefficients f_dc_0..2. Missing f_lang_* attributes
/// load as zero vectors; other unknown properties are skipped.
GaussianScene load_scene(const std::string& path);
GaussianScene read_scene(std::istream& in, const std::string& source_name = "<stream>");

/// Validates the scene first; refuses to write an invalid scene.
void save_scene(const GaussianScene& scene, const std::string& path);
void write_scene(const GaussianScene& scene, std::ostream& out);

} // namespace tgr
