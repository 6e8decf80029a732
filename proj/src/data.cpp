#include "iac/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "iac/errors.hpp"
#include "iac/npy.hpp"

namespace fs = std::filesystem;

namespace iac {
namespace {

std::string sample_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04d", i);
  return buf;
}

void write_json_file(const std::string& path, const nlohmann::json& doc) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << doc.dump(2) << "\n";
  if (!f) throw std::runtime_error("write failed for " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

struct Disk {
  real cy, cx, r;
};

// Filled shapes separable by intensity; encoder context alone suffices.
void render_shapes_easy(const SyntheticTaskSpec& spec, Rng& rng,
                        std::vector<float>& image, std::vector<float>& mask) {
  const int H = spec.height, W = spec.width;
  for (int c = 0; c < spec.classes; ++c) {
    const bool ellipse = rng.uniform() < 0.5;
    const real cy = rng.uniform(0.25 * H, 0.75 * H);
    const real cx = rng.uniform(0.25 * W, 0.75 * W);
    const real ay = rng.uniform(H / 8.0, H / 4.0);
    const real ax = rng.uniform(W / 8.0, W / 4.0);
    const real intensity =
        0.4 + 0.5 * static_cast<real>(c + 1) / static_cast<real>(spec.classes);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const real dy = (y - cy) / ay, dx = (x - cx) / ax;
        const bool inside = ellipse ? (dy * dy + dx * dx <= 1.0)
                                    : (std::abs(dy) <= 1.0 &&
                                       std::abs(dx) <= 1.0);
        if (inside) {
          mask[static_cast<size_t>((c * H + y) * W + x)] = 1.0f;
          image[static_cast<size_t>(y * W + x)] += static_cast<float>(intensity);
        }
      }
    }
  }
  for (int i = 0; i < H * W; ++i)
    image[static_cast<size_t>(i)] +=
        static_cast<float>(spec.noise * rng.normal(0.0, 1.0));
}

// Thin disk boundaries as targets: localizing a ~1px ring at full resolution
// needs the high-resolution skip path (the bottleneck alone sees the image
// only after 2^depth downsampling).
void render_skip_dependent(const SyntheticTaskSpec& spec, Rng& rng,
                           std::vector<float>& image,
                           std::vector<float>& mask) {
  const int H = spec.height, W = spec.width;
  const int n_disks = rng.uniform_int(2, 3);
  std::vector<Disk> disks;
  for (int d = 0; d < n_disks; ++d) {
    const real r = rng.uniform(7.0, 13.0);
    const real cy = rng.uniform(r + 2.0, H - r - 2.0);
    const real cx = rng.uniform(r + 2.0, W - r - 2.0);
    disks.push_back({cy, cx, r});
  }
  const real ring_hw = 1.25;  // ring half-width in pixels
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      real v = 0.0;
      bool on_ring = false, interior = false;
      for (const Disk& d : disks) {
        const real dy = y - d.cy, dx = x - d.cx;
        const real dist = std::sqrt(dy * dy + dx * dx);
        if (dist <= d.r) v = 0.7;
        if (std::abs(dist - d.r) <= ring_hw) on_ring = true;
        if (dist <= d.r - ring_hw) interior = true;
      }
      image[static_cast<size_t>(y * W + x)] =
          static_cast<float>(v + spec.noise * rng.normal(0.0, 1.0));
      if (on_ring) mask[static_cast<size_t>(y * W + x)] = 1.0f;
      if (spec.classes >= 2 && interior)
        mask[static_cast<size_t>((H + y) * W + x)] = 1.0f;
    }
  }
}

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (n_samples < 1) throw std::invalid_argument("dataset: n_samples < 1");
  if (height < 8 || width < 8)
    throw std::invalid_argument("dataset: height/width < 8");
  if (classes < 1 || classes > 4)
    throw std::invalid_argument("dataset: classes outside 1..4");
  if (task == Task::skip_dependent && classes > 2)
    throw std::invalid_argument("dataset: skip_dependent supports 1..2 classes");
  if (noise < 0.0) throw std::invalid_argument("dataset: negative noise");
}

std::string task_name(SyntheticTaskSpec::Task t) {
  return t == SyntheticTaskSpec::Task::shapes_easy ? "shapes_easy"
                                                   : "skip_dependent";
}

SyntheticTaskSpec::Task task_from_name(const std::string& name) {
  if (name == "shapes_easy") return SyntheticTaskSpec::Task::shapes_easy;
  if (name == "skip_dependent") return SyntheticTaskSpec::Task::skip_dependent;
  throw std::invalid_argument("unknown synthetic task: " + name);
}

void DatasetManifest::save(const std::string& dir) const {
  nlohmann::json doc;
  doc["version"] = version;
  doc["channels"] = channels;
  doc["classes"] = classes;
  doc["height"] = height;
  doc["width"] = width;
  nlohmann::json samples_json = nlohmann::json::array();
  for (const auto& s : samples) {
    samples_json.push_back(
        {{"id", s.id}, {"image", s.image_path}, {"mask", s.mask_path}});
  }
  doc["samples"] = samples_json;
  write_json_file((fs::path(dir) / "manifest.json").string(), doc);
}

DatasetManifest DatasetManifest::load(const std::string& dir) {
  const std::string path = (fs::path(dir) / "manifest.json").string();
  const nlohmann::json doc = read_json_file(path);
  DatasetManifest m;
  try {
    m.version = doc.at("version").get<int>();
    m.channels = doc.at("channels").get<int>();
    m.classes = doc.at("classes").get<int>();
    m.height = doc.at("height").get<int>();
    m.width = doc.at("width").get<int>();
    for (const auto& s : doc.at("samples")) {
      m.samples.push_back({s.at("id").get<std::string>(),
                           s.at("image").get<std::string>(),
                           s.at("mask").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  m.root = dir;
  std::set<std::string> ids;
  for (const auto& s : m.samples) {
    if (!ids.insert(s.id).second)
      throw ParseError(path + ": duplicate sample id " + s.id);
    for (const std::string& rel : {s.image_path, s.mask_path}) {
      if (!fs::exists(fs::path(dir) / rel))
        throw ParseError(path + ": missing file " + rel);
    }
  }
  return m;
}

const ManifestSample& DatasetManifest::find(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw std::invalid_argument("manifest: unknown sample id " + id);
}

DatasetManifest generate_synthetic(const SyntheticTaskSpec& spec,
                                   const std::string& out_dir) {
  spec.validate();
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  DatasetManifest m;
  m.channels = 1;
  m.classes = spec.classes;
  m.height = spec.height;
  m.width = spec.width;
  m.root = out_dir;

  Rng base(spec.seed);
  for (int i = 0; i < spec.n_samples; ++i) {
    Rng rng = base.fork(static_cast<uint64_t>(i));
    std::vector<float> image(
        static_cast<size_t>(spec.height) * spec.width, 0.0f);
    std::vector<float> mask(
        static_cast<size_t>(spec.classes) * spec.height * spec.width, 0.0f);
    if (spec.task == SyntheticTaskSpec::Task::shapes_easy)
      render_shapes_easy(spec, rng, image, mask);
    else
      render_skip_dependent(spec, rng, image, mask);

    const std::string id = sample_id(i);
    const std::string img_rel = "images/" + id + ".npy";
    const std::string msk_rel = "masks/" + id + ".npy";
    npy_save((fs::path(out_dir) / img_rel).string(),
             {1, spec.height, spec.width}, image);
    npy_save((fs::path(out_dir) / msk_rel).string(),
             {spec.classes, spec.height, spec.width}, mask);
    m.samples.push_back({id, img_rel, msk_rel});
  }
  m.save(out_dir);
  return m;
}

void SplitSpec::save(const std::string& path) const {
  nlohmann::json doc;
  doc["train_fraction"] = train_fraction;
  doc["search_fraction"] = search_fraction;
  doc["seed"] = seed;
  doc["train_dt"] = train_dt;
  doc["val_dt"] = val_dt;
  doc["train_search_dt"] = train_search_dt;
  doc["val_search_dt"] = val_search_dt;
  write_json_file(path, doc);
}

SplitSpec SplitSpec::load(const std::string& path) {
  const nlohmann::json doc = read_json_file(path);
  SplitSpec s;
  try {
    s.train_fraction = doc.at("train_fraction").get<real>();
    s.search_fraction = doc.at("search_fraction").get<real>();
    s.seed = doc.at("seed").get<uint64_t>();
    s.train_dt = doc.at("train_dt").get<std::vector<std::string>>();
    s.val_dt = doc.at("val_dt").get<std::vector<std::string>>();
    s.train_search_dt =
        doc.at("train_search_dt").get<std::vector<std::string>>();
    s.val_search_dt = doc.at("val_search_dt").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return s;
}

SplitSpec make_splits(const DatasetManifest& manifest, real train_fraction,
                      real search_fraction, uint64_t seed) {
  const int n = static_cast<int>(manifest.samples.size());
  if (n < 10) throw std::invalid_argument("make_splits: need at least 10 samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("make_splits: train_fraction outside (0,1)");
  if (!(search_fraction > 0.0 && search_fraction < 1.0))
    throw std::invalid_argument("make_splits: search_fraction outside (0,1)");

  std::vector<std::string> ids;
  ids.reserve(static_cast<size_t>(n));
  for (const auto& s : manifest.samples) ids.push_back(s.id);

  Rng rng(seed);
  rng.shuffle(ids);

  const int n_train = static_cast<int>(std::llround(train_fraction * n));
  if (n_train < 1 || n_train >= n)
    throw std::invalid_argument("make_splits: degenerate train/val split");

  SplitSpec split;
  split.train_fraction = train_fraction;
  split.search_fraction = search_fraction;
  split.seed = seed;
  split.train_dt.assign(ids.begin(), ids.begin() + n_train);
  split.val_dt.assign(ids.begin() + n_train, ids.end());

  const int n_search =
      static_cast<int>(std::floor(search_fraction * n_train));
  if (n_search < 1 || 2 * n_search > n_train)
    throw std::invalid_argument(
        "make_splits: search_fraction leaves no room for two equal subsets");
  std::vector<std::string> pool = split.train_dt;
  Rng srng = rng.fork(1);
  srng.shuffle(pool);
  split.train_search_dt.assign(pool.begin(), pool.begin() + n_search);
  split.val_search_dt.assign(pool.begin() + n_search,
                             pool.begin() + 2 * n_search);
  return split;
}

namespace {

// Center-crop or symmetric zero-pad a (C,H,W) plane stack.
Tensor fit_plane(const NpyArray& arr, int C, int H, int W, int th, int tw) {
  Tensor out({C, th, tw});
  const int crop_y = std::max(0, (H - th) / 2);
  const int crop_x = std::max(0, (W - tw) / 2);
  const int pad_y = std::max(0, (th - H) / 2);
  const int pad_x = std::max(0, (tw - W) / 2);
  const int copy_h = std::min(H, th);
  const int copy_w = std::min(W, tw);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < copy_h; ++y)
      for (int x = 0; x < copy_w; ++x)
        out[(static_cast<int64_t>(c) * th + pad_y + y) * tw + pad_x + x] =
            static_cast<real>(
                arr.data[static_cast<size_t>(
                    (c * H + crop_y + y) * W + crop_x + x)]);
  return out;
}

}  // namespace

Sample load_sample(const DatasetManifest& manifest, const std::string& id,
                   int target_h, int target_w) {
  const ManifestSample& s = manifest.find(id);
  const int th = target_h > 0 ? target_h : manifest.height;
  const int tw = target_w > 0 ? target_w : manifest.width;

  const std::string img_path =
      (fs::path(manifest.root) / s.image_path).string();
  NpyArray img = npy_load(img_path);
  if (img.shape.size() == 2) img.shape = {1, img.shape[0], img.shape[1]};
  if (img.shape.size() != 3)
    throw ParseError(img_path + ": expected rank 2 or 3 image");

  const std::string msk_path = (fs::path(manifest.root) / s.mask_path).string();
  NpyArray msk = npy_load(msk_path);
  if (msk.shape.size() == 2) msk.shape = {1, msk.shape[0], msk.shape[1]};
  if (msk.shape.size() != 3)
    throw ParseError(msk_path + ": expected rank 2 or 3 mask");
  for (float v : msk.data)
    if (v != 0.0f && v != 1.0f)
      throw ParseError(msk_path + ": mask values must be binary");

  Sample out;
  out.image =
      fit_plane(img, img.shape[0], img.shape[1], img.shape[2], th, tw);
  out.mask = fit_plane(msk, msk.shape[0], msk.shape[1], msk.shape[2], th, tw);

  // Per-channel z-score; constant channels are only mean-shifted.
  const int C = out.image.dim(0);
  const int64_t plane = static_cast<int64_t>(th) * tw;
  for (int c = 0; c < C; ++c) {
    real* p = out.image.data() + static_cast<int64_t>(c) * plane;
    real mean = 0.0;
    for (int64_t i = 0; i < plane; ++i) mean += p[i];
    mean /= static_cast<real>(plane);
    real var = 0.0;
    for (int64_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<real>(plane);
    const real sd = std::sqrt(var);
    const real inv = sd > 1e-8 ? 1.0 / sd : 1.0;
    for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
  }
  return out;
}

LoadedDataset LoadedDataset::from(const DatasetManifest& manifest,
                                  const std::vector<std::string>& ids) {
  LoadedDataset ds;
  ds.ids = ids;
  ds.images.reserve(ids.size());
  ds.masks.reserve(ids.size());
  for (const auto& id : ids) {
    Sample s = load_sample(manifest, id);
    ds.images.push_back(std::move(s.image));
    ds.masks.push_back(std::move(s.mask));
  }
  return ds;
}

namespace {

Tensor assemble_batch(const std::vector<Tensor>& items,
                      const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("empty batch");
  const Tensor& first = items[static_cast<size_t>(idx[0])];
  Tensor out({static_cast<int>(idx.size()), first.dim(0), first.dim(1),
              first.dim(2)});
  const int64_t stride = first.size();
  for (size_t b = 0; b < idx.size(); ++b) {
    const Tensor& t = items[static_cast<size_t>(idx[b])];
    std::copy(t.data(), t.data() + stride,
              out.data() + static_cast<int64_t>(b) * stride);
  }
  return out;
}

}  // namespace

Tensor LoadedDataset::batch_images(const std::vector<int>& idx) const {
  return assemble_batch(images, idx);
}

Tensor LoadedDataset::batch_masks(const std::vector<int>& idx) const {
  return assemble_batch(masks, idx);
}

}  // namespace iac
