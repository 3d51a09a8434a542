// SPDX-License-Identifier: Apache-2.0
#include "cliff/dataset_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "cliff/checkpoint.hpp"
#include "cliff/errors.hpp"

namespace cliff {

namespace fs = std::filesystem;

namespace {

constexpr unsigned char kMagic[4] = {'F', 'L', 'K', 'S'};
constexpr std::size_t kHeaderBytes = 4 + 6 * 4 + 8;

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(std::span<const unsigned char> in, std::size_t& pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string task_dir_name(std::size_t m, const std::string& material) {
  return "T" + std::to_string(m + 1) + "_" + material;
}

std::string sample_path(std::size_t m, const std::string& material, const char* split, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return task_dir_name(m, material) + "/" + split + "/" + buf + ".bin";
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, '\t')) out.push_back(cell);
  return out;
}

MaterialProfile profile_named(const std::string& name) {
  for (auto& p : default_profiles())
    if (p.name == name) return p;
  MaterialProfile p;
  p.name = name;
  return p;
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<unsigned char> encode_sample(const FlakeSample& s) {
  if (s.image.rank() != 3) throw DimensionError("sample image must be [C,H,W]");
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kSampleFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.material_id));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.label()));
  for (std::size_t a = 0; a < 3; ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(s.image.dim(a)));
  put<std::uint64_t>(out, s.seed);
  const auto px = s.image.data();
  const auto* raw = reinterpret_cast<const unsigned char*>(px.data());
  out.insert(out.end(), raw, raw + px.size() * sizeof(float));
  return out;
}

FlakeSample decode_sample(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeaderBytes) throw DataError("sample file truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("sample file has bad magic");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kSampleFormatVersion) throw DataError("sample file version " + std::to_string(version) + " unsupported");
  FlakeSample s;
  s.material_id = get<std::uint32_t>(bytes, pos);
  const auto cls = get<std::uint32_t>(bytes, pos);
  if (cls >= kNumClasses) throw DataError("sample class " + std::to_string(cls) + " out of range");
  s.thickness = thickness_from_index(cls);
  Shape shape(3);
  for (auto& d : shape) d = get<std::uint32_t>(bytes, pos);
  s.seed = get<std::uint64_t>(bytes, pos);
  const std::size_t n = numel_of(shape);
  if (bytes.size() != kHeaderBytes + n * sizeof(float))
    throw DataError("sample file size does not match its shape " + shape_str(shape));
  std::vector<float> px(n);
  std::memcpy(px.data(), bytes.data() + kHeaderBytes, n * sizeof(float));
  s.image = Tensor::from_data(std::move(shape), std::move(px));
  return s;
}

std::uint64_t export_dataset(const fs::path& dir, std::span<const MaterialTask> tasks, std::uint64_t root_seed,
                             bool force) {
  if (tasks.empty()) throw ParameterError("export_dataset: no tasks");
  try {
    if (fs::exists(dir)) {
      if (!fs::is_directory(dir)) throw ConfigError("output path " + dir.string() + " is not a directory");
      if (!fs::is_empty(dir)) {
        if (!force) throw ConfigError("output directory " + dir.string() + " is not empty (use --force)");
        fs::remove(dir / kDatasetManifest);
        for (std::size_t m = 0; m < tasks.size(); ++m) fs::remove_all(dir / task_dir_name(m, tasks[m].profile.name));
      }
    }
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    throw DataError(std::string("cannot prepare output directory: ") + e.what());
  }

  const auto& first = tasks.front().split;
  const std::size_t size = first.train.empty() ? 0 : first.train.front().image.dim(1);
  std::ostringstream manifest;
  manifest << "# cliff dataset v" << kSampleFormatVersion << "\n"
           << "# root_seed=" << root_seed << "\n"
           << "# n_train=" << first.train.size() << "\n"
           << "# n_val=" << first.validation.size() << "\n"
           << "# image_size=" << size << "\n"
           << "task\tmaterial\tsplit\tindex\tclass\tseed\tshape\tchecksum\tpath\n";
  for (std::size_t m = 0; m < tasks.size(); ++m) {
    const auto& name = tasks[m].profile.name;
    const std::pair<const char*, const std::vector<FlakeSample>*> splits[] = {
        {"train", &tasks[m].split.train}, {"validation", &tasks[m].split.validation}};
    for (const auto& [split, samples] : splits) {
      try {
        fs::create_directories(dir / task_dir_name(m, name) / split);
      } catch (const fs::filesystem_error& e) {
        throw DataError(std::string("cannot create task directory: ") + e.what());
      }
      for (std::size_t i = 0; i < samples->size(); ++i) {
        const auto& s = (*samples)[i];
        const auto bytes = encode_sample(s);
        const std::string rel = sample_path(m, name, split, i);
        std::ofstream out(dir / rel, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("cannot write " + (dir / rel).string());
        manifest << m << '\t' << name << '\t' << split << '\t' << i << '\t' << thickness_name(s.thickness) << '\t'
                 << s.seed << '\t' << s.image.dim(0) << 'x' << s.image.dim(1) << 'x' << s.image.dim(2) << '\t'
                 << hex64(fnv1a64(bytes)) << '\t' << rel << '\n';
      }
    }
  }
  const std::string text = manifest.str();
  write_text_atomic(dir / kDatasetManifest, text);
  return fnv1a64(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::uint64_t dataset_checksum(const fs::path& dir) {
  const auto bytes = read_file_bytes(dir / kDatasetManifest);
  return fnv1a64(bytes);
}

DatasetInfo import_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / kDatasetManifest;
  if (!fs::exists(manifest_path)) throw DataError("no dataset manifest at " + manifest_path.string());
  const std::string text = read_text(manifest_path);
  DatasetInfo info;
  info.checksum = fnv1a64(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));

  std::map<std::size_t, MaterialTask> tasks;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
      try {
        if (key == "root_seed") info.root_seed = std::stoull(value);
        if (key == "n_train") info.n_train = std::stoull(value);
        if (key == "n_val") info.n_val = std::stoull(value);
        if (key == "image_size") info.image_size = std::stoull(value);
      } catch (const std::exception&) {
        throw DataError("manifest line " + std::to_string(line_no) + ": bad value for " + key);
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto cells = split_tabs(line);
    if (cells.size() != 9) throw DataError("manifest line " + std::to_string(line_no) + ": expected 9 columns");
    std::size_t m = 0, index = 0;
    std::uint64_t seed = 0, checksum = 0;
    try {
      m = std::stoull(cells[0]);
      index = std::stoull(cells[3]);
      seed = std::stoull(cells[5]);
      checksum = std::stoull(cells[7], nullptr, 16);
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(line_no) + ": malformed number");
    }
    const fs::path file = dir / cells[8];
    std::vector<unsigned char> bytes;
    try {
      bytes = read_file_bytes(file);
    } catch (const CheckpointError&) {
      throw DataError("missing sample file " + file.string());
    }
    if (fnv1a64(bytes) != checksum) throw DataError("checksum mismatch for " + file.string());
    FlakeSample s = decode_sample(bytes);
    s.material_name = cells[1];
    if (s.seed != seed || std::string(thickness_name(s.thickness)) != cells[4] || s.material_id != m)
      throw DataError("sample " + file.string() + " disagrees with its manifest line");
    auto& task = tasks[m];
    if (task.profile.name.empty()) task.profile = profile_named(cells[1]);
    auto& split = cells[2] == "train" ? task.split.train : task.split.validation;
    if (cells[2] != "train" && cells[2] != "validation")
      throw DataError("manifest line " + std::to_string(line_no) + ": unknown split " + cells[2]);
    if (index != split.size()) throw DataError("manifest line " + std::to_string(line_no) + ": samples out of order");
    auto& counts = cells[2] == "train" ? task.split.train_counts : task.split.validation_counts;
    ++counts[s.label()];
    split.push_back(std::move(s));
  }
  if (!header_seen || tasks.empty()) throw DataError("dataset manifest lists no samples");
  std::size_t expect = 0;
  for (auto& [m, task] : tasks) {
    if (m != expect++) throw DataError("dataset task indices are not contiguous");
    task.split.seed = task_seed(info.root_seed, m);
    info.tasks.push_back(std::move(task));
  }
  return info;
}

}  // namespace cliff
