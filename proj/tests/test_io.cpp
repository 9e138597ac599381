#include <doctest.h>

#include <filesystem>

#include "roadgs/io.hpp"
#include "roadgs/random.hpp"
#include "roadgs/synth.hpp"

using namespace roadgs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("roadgs_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

GaussianGrid sample_grid(Rng& rng) {
  GridSpecOverrides o;
  o.nx_g = 3;
  o.ny_g = 4;
  o.geom_interval_m = 0.1;
  o.texture_factor = 2;
  o.gaussian_factor = 2;
  const GridSpec spec = make_grid_spec(o);
  ElevationMap elev = flat_elevation(spec, GridLevel::gaussian);
  for (int r = 0; r < elev.rows(); ++r)
    for (int c = 0; c < elev.cols(); ++c) elev.values(r, c) = rng.uniform(-0.1, 0.1);
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh(spec.cell_count(GridLevel::gaussian),
                                                      kShCoeffs);
  for (Eigen::Index g = 0; g < sh.rows(); ++g)
    for (int k = 0; k < kShCoeffs; ++k) sh(g, k) = rng.normal();
  GaussianGrid grid = init_gaussian_grid(spec, elev, sh);
  for (Eigen::Index g = 0; g < grid.count(); ++g) {
    Eigen::Vector4d q;
    for (int k = 0; k < 4; ++k) q[k] = rng.normal();
    grid.rotation.row(g) = q.normalized().transpose();
    grid.opacity[g] = rng.uniform(0.0, 1.0);
  }
  return grid;
}

}  // namespace

TEST_CASE("elevation maps round-trip with pitch and validity") {
  TempDir dir;
  Rng rng(1);
  ElevationMap map;
  map.values.resize(5, 3);
  map.valid.resize(5, 3);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 3; ++c) {
      map.values(r, c) = static_cast<float>(rng.uniform(-0.2, 0.2));
      map.valid(r, c) = rng.uniform() < 0.8;
    }
  write_elevation(dir.path / "m.elev", map, 0.03);
  const LoadedElevation loaded = read_elevation(dir.path / "m.elev");
  CHECK(loaded.pitch_m == 0.03);
  CHECK((loaded.map.values == map.values).all());
  CHECK((loaded.map.valid == map.valid).all());
}

TEST_CASE("gaussian grids round-trip exactly after storage quantization") {
  TempDir dir;
  Rng rng(2);
  const GaussianGrid grid = quantize_to_storage(sample_grid(rng));
  write_gaussian_grid(dir.path / "g.ggrd", grid);
  const GaussianGrid loaded = read_gaussian_grid(dir.path / "g.ggrd");
  CHECK(loaded.spec.nx_g == grid.spec.nx_g);
  CHECK(loaded.spec.roi_start_m == grid.spec.roi_start_m);
  CHECK(loaded.spec.h_min_m == grid.spec.h_min_m);
  CHECK((loaded.elevation.values == grid.elevation.values).all());
  CHECK(loaded.sh == grid.sh);
  CHECK(loaded.scale == grid.scale);
  CHECK(loaded.rotation == grid.rotation);
  CHECK(loaded.opacity == grid.opacity);
}

TEST_CASE("quantize_to_storage is idempotent") {
  Rng rng(3);
  const GaussianGrid once = quantize_to_storage(sample_grid(rng));
  const GaussianGrid twice = quantize_to_storage(once);
  CHECK(once.sh == twice.sh);
  CHECK((once.elevation.values == twice.elevation.values).all());
  CHECK(once.rotation == twice.rotation);
}

TEST_CASE("ppm images round-trip at 8-bit precision") {
  TempDir dir;
  Rng rng(4);
  Image image(7, 9);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 9; ++c) image.ch[ch](r, c) = rng.uniform(0.0, 1.0);
  write_ppm(dir.path / "i.ppm", image);
  const Image loaded = read_ppm(dir.path / "i.ppm");
  const Image quantized = quantize_8bit(image);
  for (int ch = 0; ch < 3; ++ch)
    CHECK((loaded.ch[ch] - quantized.ch[ch]).abs().maxCoeff() < 1e-12);
}

TEST_CASE("camera text files round-trip bit-exactly") {
  TempDir dir;
  SceneRecipe recipe;
  recipe.trajectory.pitch_rad = 0.4321;
  const CameraModel cam = make_trajectory(recipe)[1];
  write_camera(dir.path / "cam.txt", cam);
  const CameraModel loaded = read_camera(dir.path / "cam.txt");
  CHECK(loaded.fx == cam.fx);
  CHECK(loaded.cx == cam.cx);
  CHECK(loaded.rotation == cam.rotation);
  CHECK(loaded.translation == cam.translation);
}

TEST_CASE("recipes round-trip through JSON") {
  SceneRecipe recipe;
  recipe.seed = 99;
  recipe.tilt_pitch_rad = 0.01;
  Pothole hole;
  hole.center_x_m = 0.2;
  hole.center_y_m = 1.5;
  hole.radius_m = 0.3;
  hole.depth_m = 0.04;
  recipe.potholes.push_back(hole);
  Crack crack;
  crack.polyline = {{-0.3, 0.5}, {0.4, 2.0}};
  crack.width_m = 0.05;
  crack.depth_m = 0.015;
  recipe.cracks.push_back(crack);
  recipe.trajectory.frame_count = 7;

  const SceneRecipe loaded = recipe_from_json(recipe_to_json(recipe));
  CHECK(loaded.seed == 99);
  CHECK(loaded.tilt_pitch_rad == recipe.tilt_pitch_rad);
  REQUIRE(loaded.potholes.size() == 1);
  CHECK(loaded.potholes[0].depth_m == hole.depth_m);
  REQUIRE(loaded.cracks.size() == 1);
  CHECK(loaded.cracks[0].polyline[1].y() == 2.0);
  CHECK(loaded.trajectory.frame_count == 7);

  CHECK_THROWS_AS(recipe_from_json("{ not json"), std::runtime_error);
  CHECK_THROWS_AS(recipe_from_json("{\"potholes\": [{\"depth_m\": \"deep\"}]}"),
                  std::runtime_error);
}

TEST_CASE("checksums and manifests are reproducible") {
  TempDir dir;
  write_text(dir.path / "a.txt", "hello\n");
  write_text(dir.path / "b.txt", "world\n");
  const std::uint64_t c1 = checksum_file(dir.path / "a.txt");
  const std::uint64_t c2 = checksum_file(dir.path / "a.txt");
  CHECK(c1 == c2);
  CHECK(c1 != checksum_file(dir.path / "b.txt"));

  write_manifest(dir.path, {"a.txt", "b.txt"});
  const std::string m1 = read_text(dir.path / "manifest.json");
  write_manifest(dir.path, {"b.txt", "a.txt"});  // order-insensitive
  const std::string m2 = read_text(dir.path / "manifest.json");
  CHECK(m1 == m2);
  CHECK(m1.find("fnv1a64") != std::string::npos);
}

TEST_CASE("datasets round-trip through a directory") {
  TempDir dir;
  SceneRecipe recipe;
  recipe.seed = 31;
  recipe.trajectory.frame_count = 1;
  recipe.trajectory.image_width = 64;
  recipe.trajectory.image_height = 48;
  recipe.trajectory.focal_px = 60.0;
  recipe.trajectory.camera_height_m = 0.5;
  recipe.trajectory.pitch_rad = 0.5;
  GridSpecOverrides o;
  o.nx_g = 4;
  o.ny_g = 6;
  o.geom_interval_m = 0.1;
  o.texture_factor = 2;
  o.gaussian_factor = 1;
  const Dataset dataset = render_dataset(recipe, make_grid_spec(o));
  write_dataset(dir.path / "ds", dataset);

  CHECK(fs::exists(dir.path / "ds" / "scene.json"));
  CHECK(fs::exists(dir.path / "ds" / "gt_elevation.elev"));
  CHECK(fs::exists(dir.path / "ds" / "gt_gaussians.ggrd"));
  CHECK(fs::exists(dir.path / "ds" / "cam_0000.txt"));
  CHECK(fs::exists(dir.path / "ds" / "img_0000.ppm"));
  CHECK(fs::exists(dir.path / "ds" / "manifest.json"));

  const Dataset loaded = read_dataset(dir.path / "ds");
  CHECK(loaded.spec.nx_g == 4);
  CHECK(loaded.cameras.size() == dataset.cameras.size());
  CHECK(loaded.images.size() == dataset.images.size());
  CHECK((loaded.gt_gaussians.sh == dataset.gt_gaussians.sh));
  CHECK(loaded.recipe.seed == 31);
}
