#include "bmm/feature_matrix.hpp"

#include <cmath>
#include <string_view>
#include <unordered_set>

#include "bmm/error.hpp"

namespace bmm {

void validate(const FeatureMatrix& features) {
  if (features.n == 0) throw ValidationError("feature matrix has no rows");
  if (features.d == 0) throw ValidationError("feature matrix has zero dimension");
  if (features.values.size() != features.n * features.d) {
    throw ValidationError("feature matrix holds " +
                          std::to_string(features.values.size()) +
                          " values, expected n*d = " +
                          std::to_string(features.n * features.d));
  }
  if (features.sample_ids.size() != features.n ||
      features.dataset_labels.size() != features.n) {
    throw ValidationError("sample id / dataset label count differs from n");
  }
  for (std::size_t i = 0; i < features.values.size(); ++i) {
    if (!std::isfinite(features.values[i])) {
      throw ValidationError("non-finite value at row " +
                            std::to_string(i / features.d) + ", column " +
                            std::to_string(i % features.d));
    }
  }
  std::unordered_set<std::string_view> seen;
  seen.reserve(features.n);
  for (const auto& id : features.sample_ids) {
    if (!seen.insert(id).second) {
      throw ValidationError("duplicate sample_id '" + id + "'");
    }
  }
}

FeatureMatrix select_rows(const FeatureMatrix& features,
                          std::span<const std::size_t> rows) {
  FeatureMatrix out;
  out.n = rows.size();
  out.d = features.d;
  out.values.reserve(rows.size() * features.d);
  out.sample_ids.reserve(rows.size());
  out.dataset_labels.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= features.n) {
      throw ParameterError("row index " + std::to_string(r) + " out of range");
    }
    auto src = features.row(r);
    out.values.insert(out.values.end(), src.begin(), src.end());
    out.sample_ids.push_back(features.sample_ids[r]);
    out.dataset_labels.push_back(features.dataset_labels[r]);
  }
  return out;
}

}  // namespace bmm
