#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bmm {

/// n x d row-major feature vectors with one sample id and one dataset label
/// per row. Server rows carry the name of their source dataset; target rows
/// usually share a single constant label.
struct FeatureMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> values;
  std::vector<std::string> sample_ids;
  std::vector<std::string> dataset_labels;

  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * d, d};
  }

  bool operator==(const FeatureMatrix&) const = default;
};

/// Throws ValidationError unless n >= 1, d >= 1, all values are finite,
/// every array has the matching length and sample ids are pairwise distinct.
void validate(const FeatureMatrix& features);

/// Rows of `features` picked by `rows`, in that order.
FeatureMatrix select_rows(const FeatureMatrix& features,
                          std::span<const std::size_t> rows);

}  // namespace bmm
