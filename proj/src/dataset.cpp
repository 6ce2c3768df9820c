#include "rfc/dataset.hpp"

#include <cstdio>

#include "json.hpp"
#include "rfc/io.hpp"

namespace rfc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%04zu.pgm", i);
  return buf;
}

void write_manifest(const fs::path& dir, const char* kind, std::size_t size, std::uint64_t seed,
                    const json& items) {
  const json manifest = {{"format_version", kDatasetFormatVersion},
                         {"kind", kind},
                         {"image_size", size},
                         {"seed", seed},
                         {"count", items.size()},
                         {"items", items}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

void write_lesion_dataset(const fs::path& dir, std::span<const LesionCase> cases, std::uint64_t seed) {
  fs::create_directories(dir / "images");
  json items = json::array();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    write_pgm(dir / image_name(i), c.image);
    items.push_back({{"file", image_name(i)},
                     {"seed", c.seed},
                     {"kind", lesion_kind_name(c.kind)},
                     {"severity", c.severity},
                     {"mask", rle_encode(c.gt_mask)},
                     {"foreground", rle_encode(c.foreground)}});
  }
  write_manifest(dir, "lesions", cases.empty() ? 0 : cases[0].image.dim(0), seed, items);
}

void write_normal_dataset(const fs::path& dir, std::span<const Phantom> phantoms, std::uint64_t seed) {
  fs::create_directories(dir / "images");
  json items = json::array();
  for (std::size_t i = 0; i < phantoms.size(); ++i) {
    const auto& p = phantoms[i];
    write_pgm(dir / image_name(i), p.image);
    items.push_back({{"file", image_name(i)},
                     {"seed", p.params.seed},
                     {"foreground", rle_encode(p.foreground)}});
  }
  write_manifest(dir, "normals", phantoms.empty() ? 0 : phantoms[0].image.dim(0), seed, items);
}

std::vector<LesionCase> read_dataset(const fs::path& dir) {
  json manifest = json::parse(read_text(dir / "manifest.json"), nullptr, false);
  if (manifest.is_discarded()) throw IoError("dataset: " + (dir / "manifest.json").string() + " is not valid JSON");
  if (manifest.value("format_version", -1) != kDatasetFormatVersion) {
    throw IoError("dataset: unsupported format version in " + dir.string());
  }
  std::vector<LesionCase> out;
  try {
    for (const auto& item : manifest.at("items")) {
      LesionCase c;
      c.image = read_pgm(dir / item.at("file").get<std::string>());
      c.seed = item.at("seed");
      c.foreground = rle_decode(item.at("foreground"));
      if (item.contains("mask")) {
        c.gt_mask = rle_decode(item.at("mask"));
        c.kind = parse_lesion_kind(item.at("kind"));
        c.severity = item.at("severity");
      } else {
        c.gt_mask = Mask(c.image.dim(0), c.image.dim(1));
      }
      if (c.gt_mask.h != c.image.dim(0) || c.gt_mask.w != c.image.dim(1)) {
        throw IoError("dataset: mask/image size mismatch for " + item.at("file").get<std::string>());
      }
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw IoError("dataset: bad manifest in " + dir.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError("dataset: bad manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace rfc
