#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prunelab/error.hpp"
#include "prunelab/tensor.hpp"

namespace prunelab {

// Labelled samples stored row-major: sample i occupies
// features[i * sample_size() .. (i + 1) * sample_size()).
struct Dataset {
  std::vector<double> features;
  std::vector<int> labels;
  int class_count = 0;
  Shape sample_shape;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t sample_size() const { return element_count(sample_shape); }

  std::span<const double> sample(std::size_t i) const {
    const std::size_t d = sample_size();
    return std::span<const double>(features).subspan(i * d, d);
  }

  std::span<double> sample(std::size_t i) {
    const std::size_t d = sample_size();
    return std::span<double>(features).subspan(i * d, d);
  }

  void validate() const {
    require(class_count > 0, ErrorKind::schema, "dataset class count must be positive");
    require(!sample_shape.empty() && sample_size() > 0, ErrorKind::schema,
            "dataset sample shape must be nonempty");
    require(features.size() == labels.size() * sample_size(), ErrorKind::schema,
            "dataset feature count does not match sample count");
    for (std::size_t i = 0; i < labels.size(); ++i)
      require(labels[i] >= 0 && labels[i] < class_count, ErrorKind::schema,
              "label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                  " outside [0, " + std::to_string(class_count) + ")");
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.class_count = class_count;
    out.sample_shape = sample_shape;
    const std::size_t d = sample_size();
    out.features.reserve(indices.size() * d);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
      require(i < size(), ErrorKind::domain, "subset index out of range");
      auto s = sample(i);
      out.features.insert(out.features.end(), s.begin(), s.end());
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DataSplit {
  Dataset train;
  Dataset test;
};

}  // namespace prunelab
