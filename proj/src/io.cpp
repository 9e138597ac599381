#include "roadgs/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace roadgs {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::ofstream open_out(const std::filesystem::path& path, bool binary = true) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) fail("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary = true) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) fail("cannot open for reading: " + path.string());
  return is;
}

template <class T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) fail("unexpected end of file");
  return value;
}

void put_magic(std::ostream& os, const char magic[5]) { os.write(magic, 4); }

void expect_magic(std::istream& is, const char magic[5], const std::string& what) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0) fail(what + ": bad magic");
}

void put_f32_grid(std::ostream& os, const Array2d& values) {
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      put<float>(os, static_cast<float>(values(r, c)));
}

Array2d get_f32_grid(std::istream& is, int rows, int cols) {
  Array2d values(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) values(r, c) = get<float>(is);
  return values;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_elevation(const std::filesystem::path& path, const ElevationMap& map,
                     double pitch_m) {
  auto os = open_out(path);
  put_magic(os, "ELEV");
  put<std::uint32_t>(os, 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(map.rows()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(map.cols()));
  put<double>(os, pitch_m);
  put_f32_grid(os, map.values);
  for (int r = 0; r < map.rows(); ++r)
    for (int c = 0; c < map.cols(); ++c)
      put<std::uint8_t>(os, map.valid(r, c) ? 1 : 0);
}

LoadedElevation read_elevation(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "ELEV", path.string());
  if (get<std::uint32_t>(is) != 1) fail(path.string() + ": unsupported version");
  const int rows = static_cast<int>(get<std::uint32_t>(is));
  const int cols = static_cast<int>(get<std::uint32_t>(is));
  LoadedElevation out;
  out.pitch_m = get<double>(is);
  out.map.values = get_f32_grid(is, rows, cols);
  out.map.valid.resize(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.map.valid(r, c) = get<std::uint8_t>(is) != 0;
  return out;
}

void write_gaussian_grid(const std::filesystem::path& path, const GaussianGrid& grid) {
  auto os = open_out(path);
  const GridSpec& s = grid.spec;
  put_magic(os, "GGRD");
  put<std::uint32_t>(os, 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(grid.ny()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(grid.nx()));
  put<double>(os, s.interval(GridLevel::gaussian));
  // Grid-spec block, declaration order.
  put<double>(os, s.roi_width_m);
  put<double>(os, s.roi_length_m);
  put<double>(os, s.roi_start_m);
  put<double>(os, s.geom_interval_m);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.nx_g));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.ny_g));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.texture_factor));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.gaussian_factor));
  put<double>(os, s.h_min_m);
  put<double>(os, s.h_max_m);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.nz_anchors));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.nb_bins));
  // Per-field arrays, declaration order, f32.
  put_f32_grid(os, grid.elevation.values);
  for (int r = 0; r < grid.elevation.rows(); ++r)
    for (int c = 0; c < grid.elevation.cols(); ++c)
      put<std::uint8_t>(os, grid.elevation.valid(r, c) ? 1 : 0);
  for (Eigen::Index g = 0; g < grid.sh.rows(); ++g)
    for (int k = 0; k < kShCoeffs; ++k) put<float>(os, static_cast<float>(grid.sh(g, k)));
  for (int k = 0; k < 3; ++k) put<float>(os, static_cast<float>(grid.scale[k]));
  for (Eigen::Index g = 0; g < grid.rotation.rows(); ++g)
    for (int k = 0; k < 4; ++k)
      put<float>(os, static_cast<float>(grid.rotation(g, k)));
  for (Eigen::Index g = 0; g < grid.opacity.size(); ++g)
    put<float>(os, static_cast<float>(grid.opacity[g]));
}

GaussianGrid read_gaussian_grid(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "GGRD", path.string());
  if (get<std::uint32_t>(is) != 1) fail(path.string() + ": unsupported version");
  const int rows = static_cast<int>(get<std::uint32_t>(is));
  const int cols = static_cast<int>(get<std::uint32_t>(is));
  get<double>(is);  // gaussian pitch, derivable from the spec block

  GridSpec spec;
  spec.roi_width_m = get<double>(is);
  spec.roi_length_m = get<double>(is);
  spec.roi_start_m = get<double>(is);
  spec.geom_interval_m = get<double>(is);
  spec.nx_g = static_cast<int>(get<std::uint32_t>(is));
  spec.ny_g = static_cast<int>(get<std::uint32_t>(is));
  spec.texture_factor = static_cast<int>(get<std::uint32_t>(is));
  spec.gaussian_factor = static_cast<int>(get<std::uint32_t>(is));
  spec.h_min_m = get<double>(is);
  spec.h_max_m = get<double>(is);
  spec.nz_anchors = static_cast<int>(get<std::uint32_t>(is));
  spec.nb_bins = static_cast<int>(get<std::uint32_t>(is));
  if (rows != spec.ny(GridLevel::gaussian) || cols != spec.nx(GridLevel::gaussian))
    fail(path.string() + ": header dims disagree with the grid spec");

  GaussianGrid grid;
  grid.spec = spec;
  grid.elevation.level = GridLevel::gaussian;
  grid.elevation.values = get_f32_grid(is, rows, cols);
  grid.elevation.valid.resize(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) grid.elevation.valid(r, c) = get<std::uint8_t>(is) != 0;
  const std::int64_t n = spec.cell_count(GridLevel::gaussian);
  grid.sh.resize(n, kShCoeffs);
  for (std::int64_t g = 0; g < n; ++g)
    for (int k = 0; k < kShCoeffs; ++k) grid.sh(g, k) = get<float>(is);
  for (int k = 0; k < 3; ++k) grid.scale[k] = get<float>(is);
  grid.rotation.resize(n, 4);
  for (std::int64_t g = 0; g < n; ++g)
    for (int k = 0; k < 4; ++k) grid.rotation(g, k) = get<float>(is);
  grid.opacity.resize(n);
  for (std::int64_t g = 0; g < n; ++g) grid.opacity[g] = get<float>(is);
  validate_gaussian_grid(grid);
  return grid;
}

void write_feature_map(const std::filesystem::path& path,
                       const std::vector<Array2d>& planes) {
  if (planes.empty()) fail("write_feature_map: no channels");
  auto os = open_out(path);
  put_magic(os, "FMAP");
  put<std::uint32_t>(os, 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(planes.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(planes[0].rows()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(planes[0].cols()));
  for (const Array2d& plane : planes) put_f32_grid(os, plane);
}

std::vector<Array2d> read_feature_map(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "FMAP", path.string());
  if (get<std::uint32_t>(is) != 1) fail(path.string() + ": unsupported version");
  const int channels = static_cast<int>(get<std::uint32_t>(is));
  const int rows = static_cast<int>(get<std::uint32_t>(is));
  const int cols = static_cast<int>(get<std::uint32_t>(is));
  std::vector<Array2d> planes;
  planes.reserve(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) planes.push_back(get_f32_grid(is, rows, cols));
  return planes;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  auto os = open_out(path);
  os << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  for (int r = 0; r < image.height(); ++r)
    for (int c = 0; c < image.width(); ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(image.ch[ch](r, c), 0.0, 1.0);
        put<std::uint8_t>(os, static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
}

Image read_ppm(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string magic;
  is >> magic;
  if (magic != "P6") fail(path.string() + ": not a P6 PPM");
  int width = 0, height = 0, maxval = 0;
  is >> width >> height >> maxval;
  if (maxval != 255) fail(path.string() + ": only 8-bit PPM supported");
  is.get();  // single whitespace after the header
  Image image(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      for (int ch = 0; ch < 3; ++ch)
        image.ch[ch](r, c) = static_cast<double>(get<std::uint8_t>(is)) / 255.0;
  return image;
}

void write_camera(const std::filesystem::path& path, const CameraModel& cam) {
  auto os = open_out(path, /*binary=*/false);
  os << format_double(cam.fx) << " " << format_double(cam.fy) << " "
     << format_double(cam.cx) << " " << format_double(cam.cy) << "\n";
  os << cam.width << " " << cam.height << "\n";
  for (int r = 0; r < 3; ++r)
    os << format_double(cam.rotation(r, 0)) << " " << format_double(cam.rotation(r, 1))
       << " " << format_double(cam.rotation(r, 2)) << "\n";
  os << format_double(cam.translation[0]) << " " << format_double(cam.translation[1])
     << " " << format_double(cam.translation[2]) << "\n";
}

CameraModel read_camera(const std::filesystem::path& path) {
  auto is = open_in(path, /*binary=*/false);
  CameraModel cam;
  is >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.width >> cam.height;
  for (int r = 0; r < 3; ++r)
    is >> cam.rotation(r, 0) >> cam.rotation(r, 1) >> cam.rotation(r, 2);
  is >> cam.translation[0] >> cam.translation[1] >> cam.translation[2];
  if (!is) fail(path.string() + ": truncated camera file");
  validate_camera(cam);
  return cam;
}

namespace {

ordered_json recipe_json(const SceneRecipe& r) {
  ordered_json doc;
  doc["seed"] = r.seed;
  doc["tilt_pitch_rad"] = r.tilt_pitch_rad;
  doc["tilt_roll_rad"] = r.tilt_roll_rad;
  auto potholes = ordered_json::array();
  for (const Pothole& p : r.potholes)
    potholes.push_back({{"center_x_m", p.center_x_m},
                        {"center_y_m", p.center_y_m},
                        {"radius_m", p.radius_m},
                        {"depth_m", p.depth_m}});
  doc["potholes"] = potholes;
  auto cracks = ordered_json::array();
  for (const Crack& c : r.cracks) {
    auto pts = ordered_json::array();
    for (const auto& p : c.polyline) pts.push_back({p.x(), p.y()});
    cracks.push_back({{"polyline", pts}, {"width_m", c.width_m}, {"depth_m", c.depth_m}});
  }
  doc["cracks"] = cracks;
  doc["albedo"] = {r.albedo[0], r.albedo[1], r.albedo[2]};
  doc["noise_amplitude"] = r.noise_amplitude;
  doc["noise_scale_m"] = r.noise_scale_m;
  doc["gaussian_scale_m"] = r.gaussian_scale_m;
  ordered_json traj;
  traj["frame_count"] = r.trajectory.frame_count;
  traj["step_m"] = r.trajectory.step_m;
  traj["camera_height_m"] = r.trajectory.camera_height_m;
  traj["pitch_rad"] = r.trajectory.pitch_rad;
  traj["stereo_baseline_m"] = r.trajectory.stereo_baseline_m;
  traj["image_width"] = r.trajectory.image_width;
  traj["image_height"] = r.trajectory.image_height;
  traj["focal_px"] = r.trajectory.focal_px;
  doc["trajectory"] = traj;
  return doc;
}

template <class T>
void maybe(const nlohmann::json& doc, const char* key, T& field) {
  if (doc.contains(key)) field = doc.at(key).get<T>();
}

SceneRecipe recipe_parse(const nlohmann::json& doc) {
  SceneRecipe r;
  maybe(doc, "seed", r.seed);
  maybe(doc, "tilt_pitch_rad", r.tilt_pitch_rad);
  maybe(doc, "tilt_roll_rad", r.tilt_roll_rad);
  if (doc.contains("potholes")) {
    r.potholes.clear();
    for (const auto& p : doc.at("potholes")) {
      Pothole hole;
      maybe(p, "center_x_m", hole.center_x_m);
      maybe(p, "center_y_m", hole.center_y_m);
      maybe(p, "radius_m", hole.radius_m);
      maybe(p, "depth_m", hole.depth_m);
      r.potholes.push_back(hole);
    }
  }
  if (doc.contains("cracks")) {
    r.cracks.clear();
    for (const auto& c : doc.at("cracks")) {
      Crack crack;
      if (c.contains("polyline"))
        for (const auto& pt : c.at("polyline"))
          crack.polyline.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
      maybe(c, "width_m", crack.width_m);
      maybe(c, "depth_m", crack.depth_m);
      r.cracks.push_back(crack);
    }
  }
  if (doc.contains("albedo")) {
    const auto& a = doc.at("albedo");
    for (int k = 0; k < 3; ++k) r.albedo[k] = a.at(k).get<double>();
  }
  maybe(doc, "noise_amplitude", r.noise_amplitude);
  maybe(doc, "noise_scale_m", r.noise_scale_m);
  maybe(doc, "gaussian_scale_m", r.gaussian_scale_m);
  if (doc.contains("trajectory")) {
    const auto& t = doc.at("trajectory");
    maybe(t, "frame_count", r.trajectory.frame_count);
    maybe(t, "step_m", r.trajectory.step_m);
    maybe(t, "camera_height_m", r.trajectory.camera_height_m);
    maybe(t, "pitch_rad", r.trajectory.pitch_rad);
    maybe(t, "stereo_baseline_m", r.trajectory.stereo_baseline_m);
    maybe(t, "image_width", r.trajectory.image_width);
    maybe(t, "image_height", r.trajectory.image_height);
    maybe(t, "focal_px", r.trajectory.focal_px);
  }
  return r;
}

}  // namespace

std::string recipe_to_json(const SceneRecipe& recipe) {
  return recipe_json(recipe).dump(2) + "\n";
}

SceneRecipe recipe_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("recipe parse error: ") + e.what());
  }
  try {
    return recipe_parse(doc);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("recipe field error: ") + e.what());
  }
}

void write_recipe(const std::filesystem::path& path, const SceneRecipe& recipe) {
  write_text(path, recipe_to_json(recipe));
}

SceneRecipe read_recipe(const std::filesystem::path& path) {
  return recipe_from_json(read_text(path));
}

std::uint64_t checksum_file(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::uint64_t hash = 0xcbf29ce484222325ull;  // FNV-1a
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ull;
    }
  }
  return hash;
}

void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::filesystem::path>& files) {
  std::vector<std::filesystem::path> sorted = files;
  std::sort(sorted.begin(), sorted.end());
  ordered_json doc;
  auto entries = ordered_json::array();
  for (const auto& rel : sorted) {
    const auto full = dir / rel;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(checksum_file(full)));
    entries.push_back({{"path", rel.generic_string()},
                       {"bytes", std::filesystem::file_size(full)},
                       {"fnv1a64", hex}});
  }
  doc["files"] = entries;
  write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  write_recipe(dir / "scene.json", dataset.recipe);
  files.emplace_back("scene.json");
  write_elevation(dir / "gt_elevation.elev", dataset.gt_elevation,
                  dataset.spec.interval(GridLevel::geometry));
  files.emplace_back("gt_elevation.elev");
  write_gaussian_grid(dir / "gt_gaussians.ggrd", dataset.gt_gaussians);
  files.emplace_back("gt_gaussians.ggrd");
  for (std::size_t i = 0; i < dataset.cameras.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "cam_%04zu.txt", i);
    write_camera(dir / name, dataset.cameras[i]);
    files.emplace_back(name);
    std::snprintf(name, sizeof(name), "img_%04zu.ppm", i);
    write_ppm(dir / name, dataset.images[i]);
    files.emplace_back(name);
  }
  write_manifest(dir, files);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset out;
  out.recipe = read_recipe(dir / "scene.json");
  out.gt_gaussians = read_gaussian_grid(dir / "gt_gaussians.ggrd");
  out.spec = out.gt_gaussians.spec;
  const LoadedElevation elev = read_elevation(dir / "gt_elevation.elev");
  out.gt_elevation = elev.map;
  out.gt_elevation.level = GridLevel::geometry;
  for (std::size_t i = 0;; ++i) {
    char cam_name[32], img_name[32];
    std::snprintf(cam_name, sizeof(cam_name), "cam_%04zu.txt", i);
    std::snprintf(img_name, sizeof(img_name), "img_%04zu.ppm", i);
    if (!std::filesystem::exists(dir / cam_name)) break;
    out.cameras.push_back(read_camera(dir / cam_name));
    out.images.push_back(read_ppm(dir / img_name));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto os = open_out(path);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace roadgs
