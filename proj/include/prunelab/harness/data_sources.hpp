#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/error.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

// Gaussian class clusters: centers ~ N(0, spread^2 I), samples = center + N(0, I).
struct SyntheticBlobs {
  int k = 3;
  std::size_t d = 16;
  std::size_t n = 600;
  RngSeed seed = 0;
  double spread = 0.35;

  friend bool operator==(const SyntheticBlobs&, const SyntheticBlobs&) = default;
};

// IDX image/label file pairs; without a test pair the train pair is split 80/20.
struct IdxFiles {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::optional<std::filesystem::path> test_images;
  std::optional<std::filesystem::path> test_labels;
  std::optional<int> class_count;

  friend bool operator==(const IdxFiles&, const IdxFiles&) = default;
};

// One sample per line: label, then features. A non-numeric first line is a header.
struct CsvFile {
  std::filesystem::path path;
  std::optional<int> class_count;

  friend bool operator==(const CsvFile&, const CsvFile&) = default;
};

using DataSource = std::variant<SyntheticBlobs, IdxFiles, CsvFile>;

namespace detail {

inline DataSplit split_tail(const Dataset& all) {
  const std::size_t n_test = all.size() / 5;
  const std::size_t n_train = all.size() - n_test;
  std::vector<std::size_t> train_idx(n_train), test_idx(n_test);
  for (std::size_t i = 0; i < n_train; ++i) train_idx[i] = i;
  for (std::size_t i = 0; i < n_test; ++i) test_idx[i] = n_train + i;
  return {all.subset(train_idx), all.subset(test_idx)};
}

// Per-feature zero mean / unit variance using training statistics.
inline void standardize(DataSplit& split) {
  const std::size_t d = split.train.sample_size();
  const std::size_t n = split.train.size();
  if (n == 0) return;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = split.train.sample(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = split.train.sample(i);
    for (std::size_t j = 0; j < d; ++j) var[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
  }
  std::vector<double> scale(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    scale[j] = sd > 0.0 ? 1.0 / sd : 1.0;
  }
  for (Dataset* ds : {&split.train, &split.test})
    for (std::size_t i = 0; i < ds->size(); ++i) {
      auto x = ds->sample(i);
      for (std::size_t j = 0; j < d; ++j) x[j] = (x[j] - mean[j]) * scale[j];
    }
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

// Big-endian IDX: two zero bytes, a type code, a dimension count, then u32
// dimensions and the raw values.
inline IdxArray parse_idx(const std::vector<unsigned char>& bytes, const std::string& name) {
  std::size_t off = 0;
  auto bad = [&](const std::string& what) {
    fail(ErrorKind::parse, name + ": " + what + " at byte " + std::to_string(off));
  };
  auto need = [&](std::size_t k) {
    if (bytes.size() - off < k || off > bytes.size()) bad("unexpected end of file");
  };
  need(4);
  if (bytes[0] != 0 || bytes[1] != 0) bad("bad IDX magic");
  const unsigned type = bytes[2];
  const unsigned rank = bytes[3];
  std::size_t width = 0;
  switch (type) {
    case 0x08: case 0x09: width = 1; break;
    case 0x0B: width = 2; break;
    case 0x0C: case 0x0D: width = 4; break;
    case 0x0E: width = 8; break;
    default: bad("unknown IDX element type");
  }
  if (rank == 0) bad("IDX rank must be positive");
  off = 4;
  IdxArray out;
  std::size_t count = 1;
  for (unsigned i = 0; i < rank; ++i) {
    need(4);
    const std::size_t dim = (std::size_t{bytes[off]} << 24) | (std::size_t{bytes[off + 1]} << 16) |
                            (std::size_t{bytes[off + 2]} << 8) | std::size_t{bytes[off + 3]};
    out.dims.push_back(dim);
    count *= dim;
    off += 4;
  }
  if ((bytes.size() - off) != count * width) {
    off = bytes.size();
    bad("payload size does not match dimensions");
  }
  out.values.reserve(count);
  for (std::size_t i = 0; i < count; ++i, off += width) {
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < width; ++b) v = (v << 8) | bytes[off + b];
    switch (type) {
      case 0x08: out.values.push_back(static_cast<double>(v)); break;
      case 0x09: out.values.push_back(static_cast<double>(static_cast<std::int8_t>(v))); break;
      case 0x0B: out.values.push_back(static_cast<double>(static_cast<std::int16_t>(v))); break;
      case 0x0C: out.values.push_back(static_cast<double>(static_cast<std::int32_t>(v))); break;
      case 0x0D: out.values.push_back(static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(v)))); break;
      default: out.values.push_back(std::bit_cast<double>(v)); break;
    }
  }
  return out;
}

inline Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                             std::optional<int> class_count) {
  const IdxArray img = parse_idx(read_file(images), images.string());
  const IdxArray lab = parse_idx(read_file(labels), labels.string());
  require(lab.dims.size() == 1, ErrorKind::parse, labels.string() + ": labels must be 1-D");
  require(img.dims.front() == lab.dims.front(), ErrorKind::schema,
          images.string() + " and " + labels.string() + " disagree on sample count");
  Dataset ds;
  ds.sample_shape.assign(img.dims.begin() + 1, img.dims.end());
  if (ds.sample_shape.empty()) ds.sample_shape = {1};
  ds.features = img.values;
  int max_label = -1;
  for (double y : lab.values) {
    require(y >= 0 && y == std::floor(y), ErrorKind::schema,
            labels.string() + ": label " + std::to_string(y) + " is not a class index");
    ds.labels.push_back(static_cast<int>(y));
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.class_count = class_count.value_or(max_label + 1);
  ds.validate();
  return ds;
}

inline bool parse_number(const std::string& field, double& out) {
  if (field.empty()) return false;
  char* end = nullptr;
  out = std::strtod(field.c_str(), &end);
  return end == field.c_str() + field.size();
}

}  // namespace detail

inline DataSplit load_synthetic_blobs(const SyntheticBlobs& spec) {
  require(spec.k >= 1 && spec.d >= 1 && spec.n >= 2, ErrorKind::schema,
          "synthetic blobs need k >= 1, d >= 1, n >= 2");
  Rng rng(derive_seed(spec.seed, "blobs"));
  std::vector<double> centers(static_cast<std::size_t>(spec.k) * spec.d);
  for (double& c : centers) c = rng.normal(0.0, spec.spread);
  std::vector<std::size_t> order(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  Dataset all;
  all.class_count = spec.k;
  all.sample_shape = {spec.d};
  all.features.resize(spec.n * spec.d);
  all.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int y = static_cast<int>(order[i] % static_cast<std::size_t>(spec.k));
    all.labels[i] = y;
    auto x = all.sample(i);
    for (std::size_t j = 0; j < spec.d; ++j)
      x[j] = centers[static_cast<std::size_t>(y) * spec.d + j] + rng.normal();
  }
  return detail::split_tail(all);
}

inline DataSplit load_idx(const IdxFiles& spec) {
  DataSplit split;
  split.train = detail::load_idx_pair(spec.train_images, spec.train_labels, spec.class_count);
  if (spec.test_images && spec.test_labels) {
    split.test = detail::load_idx_pair(*spec.test_images, *spec.test_labels, spec.class_count);
    require(split.test.sample_shape == split.train.sample_shape, ErrorKind::schema,
            "train and test IDX files disagree on sample shape");
    const int classes = std::max(split.train.class_count, split.test.class_count);
    split.train.class_count = split.test.class_count = classes;
  } else {
    split = detail::split_tail(split.train);
  }
  detail::standardize(split);
  return split;
}

inline DataSplit load_csv(const CsvFile& spec) {
  const auto bytes = detail::read_file(spec.path);
  const std::string name = spec.path.string();
  Dataset all;
  std::size_t width = 0;
  std::size_t line_start = 0;
  bool first = true;
  int max_label = -1;
  std::vector<std::string> fields;
  for (std::size_t pos = 0; pos <= bytes.size(); ++pos) {
    if (pos < bytes.size() && bytes[pos] != '\n') continue;
    std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(line_start),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    const std::size_t offset = line_start;
    line_start = pos + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fields.clear();
    std::size_t s = 0;
    while (true) {
      const std::size_t c = line.find(',', s);
      std::string f = line.substr(s, c == std::string::npos ? std::string::npos : c - s);
      const auto a = f.find_first_not_of(" \t");
      const auto b = f.find_last_not_of(" \t");
      fields.push_back(a == std::string::npos ? std::string() : f.substr(a, b - a + 1));
      if (c == std::string::npos) break;
      s = c + 1;
    }
    double label = 0.0;
    if (first && !detail::parse_number(fields[0], label)) {
      first = false;
      continue;
    }
    first = false;
    if (fields.size() < 2)
      fail(ErrorKind::parse, name + ": row needs a label and features at byte " + std::to_string(offset));
    if (width == 0) width = fields.size() - 1;
    if (fields.size() - 1 != width)
      fail(ErrorKind::parse, name + ": inconsistent column count at byte " + std::to_string(offset));
    if (!detail::parse_number(fields[0], label))
      fail(ErrorKind::parse, name + ": malformed label at byte " + std::to_string(offset));
    if (label < 0 || label != std::floor(label))
      fail(ErrorKind::schema, name + ": label " + fields[0] + " at byte " + std::to_string(offset) +
                                  " is not a class index");
    all.labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, all.labels.back());
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_number(fields[j], v) || !std::isfinite(v))
        fail(ErrorKind::parse, name + ": malformed value '" + fields[j] + "' at byte " +
                                   std::to_string(offset));
      all.features.push_back(v);
    }
  }
  require(!all.labels.empty(), ErrorKind::parse, name + ": no samples");
  all.sample_shape = {width};
  all.class_count = spec.class_count.value_or(max_label + 1);
  all.validate();
  DataSplit split = detail::split_tail(all);
  detail::standardize(split);
  return split;
}

inline DataSplit load_dataset(const DataSource& source) {
  return std::visit(
      [](const auto& s) -> DataSplit {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SyntheticBlobs>) return load_synthetic_blobs(s);
        else if constexpr (std::is_same_v<T, IdxFiles>) return load_idx(s);
        else return load_csv(s);
      },
      source);
}

}  // namespace prunelab
