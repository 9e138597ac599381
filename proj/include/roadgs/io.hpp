#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "roadgs/camera.hpp"
#include "roadgs/gaussians.hpp"
#include "roadgs/grid.hpp"
#include "roadgs/image.hpp"
#include "roadgs/synth.hpp"

namespace roadgs {

// Little-endian binary formats:
//   .elev  "ELEV" u32 version=1, u32 rows, u32 cols, f64 pitch_m,
//          rows*cols f32 values row-major, rows*cols u8 validity (1=valid)
//   .ggrd  "GGRD" u32 version=1, u32 rows, u32 cols, f64 pitch_m,
//          grid-spec block (f64 roi_width, roi_length, roi_start, interval;
//          u32 nx_g, ny_g, texture_factor, gaussian_factor; f64 h_min,
//          h_max; u32 nz_anchors, nb_bins), then per-Gaussian arrays f32:
//          elevation values + u8 validity, sh (N x 12), scale (3),
//          rotation (N x 4), opacity (N)
//   .fmap  "FMAP" u32 version=1, u32 channels, u32 rows, u32 cols,
//          f32 data channel-major, row-major within a channel

void write_elevation(const std::filesystem::path& path, const ElevationMap& map,
                     double pitch_m);
struct LoadedElevation {
  ElevationMap map;
  double pitch_m = 0.0;
};
LoadedElevation read_elevation(const std::filesystem::path& path);

void write_gaussian_grid(const std::filesystem::path& path, const GaussianGrid& grid);
GaussianGrid read_gaussian_grid(const std::filesystem::path& path);

void write_feature_map(const std::filesystem::path& path,
                       const std::vector<Array2d>& planes);
std::vector<Array2d> read_feature_map(const std::filesystem::path& path);

/// P6 binary PPM, 8-bit.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// Plain-text camera: "fx fy cx cy", "width height", three rotation rows,
/// one translation row. Doubles are printed with 17 significant digits so
/// the round trip is exact.
void write_camera(const std::filesystem::path& path, const CameraModel& cam);
CameraModel read_camera(const std::filesystem::path& path);

std::string recipe_to_json(const SceneRecipe& recipe);
SceneRecipe recipe_from_json(const std::string& text);
void write_recipe(const std::filesystem::path& path, const SceneRecipe& recipe);
SceneRecipe read_recipe(const std::filesystem::path& path);

/// FNV-1a 64-bit over a file's bytes.
std::uint64_t checksum_file(const std::filesystem::path& path);

/// manifest.json: every listed file with byte size and checksum, sorted by
/// path. Timing logs are intentionally not manifest material.
void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::filesystem::path>& files);

/// Dataset directory: scene.json, cam_%04d.txt, img_%04d.ppm,
/// gt_elevation.elev, gt_gaussians.ggrd, manifest.json.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace roadgs
