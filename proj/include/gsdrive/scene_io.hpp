#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gsdrive/splat.hpp"

namespace gsdrive {

inline constexpr char kSceneVersion[] = "gsscene/1";

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

void save_scene(const std::filesystem::path& path, const Scene& scene);
Scene load_scene(const std::filesystem::path& path);

/// Every *.json scene in `dir`, sorted by file name.
std::vector<std::shared_ptr<const Scene>> load_scene_dir(const std::filesystem::path& dir);

/// Binary PPM of an RGB image in [0, 1].
void write_ppm(const std::filesystem::path& path, const Image& rgb);
/// "GSDEPTH0", u32 width, u32 height, then row-major little-endian f32 depth.
void write_depth(const std::filesystem::path& path, const Image& depth);
Image read_depth(const std::filesystem::path& path);

}  // namespace gsdrive
