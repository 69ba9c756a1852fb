#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/data/image.hpp"
#include "fskd/data/png_io.hpp"

namespace fskd {

struct ImageSample {
  ImageU8 image;
  int label = 0;
  std::string id;
};

struct Dataset {
  std::vector<ImageSample> samples;
  std::size_t input_size = 0;
  std::size_t channels = 0;
  std::size_t num_classes = 0;
  bool face_domain = false;  // enables horizontal-flip augmentation

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  void finalize() {
    int max_label = -1;
    for (const auto& s : samples) {
      if (s.label < 0) throw DataError("dataset: negative label on sample '" + s.id + "'");
      max_label = std::max(max_label, s.label);
      if (s.image.h != s.image.w) throw DataError("dataset: non-square image '" + s.id + "'");
      if (input_size == 0) {
        input_size = s.image.h;
        channels = s.image.c;
      }
      if (s.image.h != input_size || s.image.c != channels)
        throw DataError("dataset: sample '" + s.id + "' has size " + std::to_string(s.image.h) + "x" +
                        std::to_string(s.image.w) + "x" + std::to_string(s.image.c) + ", expected uniform " +
                        std::to_string(input_size) + " with " + std::to_string(channels) + " channels");
    }
    num_classes = static_cast<std::size_t>(max_label + 1);
  }
};

namespace detail {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32le(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("unexpected end of file reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

// Format A: directory tree root/<label>/<id>.png. Deterministic order:
// numeric label directories ascending, file names lexicographic.
inline Dataset load_dataset_dir(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset directory '" + root + "' does not exist");
  std::vector<std::pair<int, fs::path>> label_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    try {
      std::size_t pos = 0;
      const int label = std::stoi(name, &pos);
      if (pos != name.size() || label < 0) continue;
      label_dirs.emplace_back(label, entry.path());
    } catch (const std::exception&) {
      continue;  // non-numeric directories are ignored
    }
  }
  if (label_dirs.empty()) throw DataError("dataset directory '" + root + "' has no numeric label subdirectories");
  std::sort(label_dirs.begin(), label_dirs.end());

  Dataset ds;
  for (const auto& [label, dir] : label_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      ImageSample s;
      s.image = read_png(file.string());
      s.label = label;
      s.id = std::to_string(label) + "/" + file.stem().string();
      ds.samples.push_back(std::move(s));
    }
  }
  ds.finalize();
  return ds;
}

// Format B: flat binary. Magic "FSKD", u32 count, u32 H, u32 W, u32 C,
// then per sample: u32 label + H*W*C raw bytes. Little-endian.
inline Dataset load_dataset_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset file '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FSKD", 4) != 0)
    throw DataError("'" + path + "' is not an FSKD dataset (bad magic)");
  const std::uint32_t count = detail::read_u32le(is, "sample count");
  const std::uint32_t h = detail::read_u32le(is, "height");
  const std::uint32_t w = detail::read_u32le(is, "width");
  const std::uint32_t c = detail::read_u32le(is, "channels");
  if (h == 0 || w == 0 || (c != 1 && c != 3))
    throw DataError("'" + path + "' has invalid geometry " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                    std::to_string(c));
  Dataset ds;
  ds.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ImageSample s;
    s.label = static_cast<int>(detail::read_u32le(is, "label of sample " + std::to_string(i)));
    s.image = ImageU8(h, w, c);
    if (!is.read(reinterpret_cast<char*>(s.image.pixels.data()), static_cast<std::streamsize>(s.image.pixels.size())))
      throw DataError("'" + path + "': truncated pixel data at sample " + std::to_string(i));
    s.id = "b" + std::to_string(i);
    ds.samples.push_back(std::move(s));
  }
  ds.finalize();
  return ds;
}

inline void save_dataset_binary(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot create dataset file '" + path + "'");
  os.write("FSKD", 4);
  detail::write_u32le(os, static_cast<std::uint32_t>(ds.samples.size()));
  detail::write_u32le(os, static_cast<std::uint32_t>(ds.input_size));
  detail::write_u32le(os, static_cast<std::uint32_t>(ds.input_size));
  detail::write_u32le(os, static_cast<std::uint32_t>(ds.channels));
  for (const auto& s : ds.samples) {
    detail::write_u32le(os, static_cast<std::uint32_t>(s.label));
    os.write(reinterpret_cast<const char*>(s.image.pixels.data()),
             static_cast<std::streamsize>(s.image.pixels.size()));
  }
  if (!os) throw DataError("failed writing dataset file '" + path + "'");
}

// Auto-detect: directories are format A, files format B.
inline Dataset load_dataset(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) return load_dataset_dir(path);
  if (fs::is_regular_file(path)) return load_dataset_binary(path);
  throw DataError("dataset path '" + path + "' does not exist");
}

// Verification pair list: CSV lines `path_a,path_b,same` with same in {0,1}.
// Paths are resolved relative to the CSV's directory.
struct VerificationPair {
  ImageU8 a, b;
  bool same = false;
};

inline std::vector<VerificationPair> load_pair_list(const std::string& csv_path) {
  namespace fs = std::filesystem;
  std::ifstream is(csv_path);
  if (!is) throw DataError("cannot open pair list '" + csv_path + "'");
  const fs::path base = fs::path(csv_path).parent_path();
  std::vector<VerificationPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw DataError(csv_path + ":" + std::to_string(line_no) + ": expected 'path_a,path_b,same'");
    const std::string pa = line.substr(0, c1);
    const std::string pb = line.substr(c1 + 1, c2 - c1 - 1);
    std::string flag = line.substr(c2 + 1);
    while (!flag.empty() && (flag.back() == '\r' || flag.back() == ' ')) flag.pop_back();
    if (flag != "0" && flag != "1")
      throw DataError(csv_path + ":" + std::to_string(line_no) + ": same flag must be 0 or 1, got '" + flag + "'");
    VerificationPair p;
    p.a = read_png((base / pa).string());
    p.b = read_png((base / pb).string());
    p.same = flag == "1";
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw DataError("pair list '" + csv_path + "' is empty");
  return pairs;
}

}  // namespace fskd
